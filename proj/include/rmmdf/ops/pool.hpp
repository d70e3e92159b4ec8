#pragma once

#include <limits>
#include <vector>

#include "rmmdf/autograd.hpp"

namespace rmmdf {

inline int pooled_size(int in) { return (in + 1) / 2; }

// 2x2 max pooling, stride 2, ceil mode: an odd trailing row/column pools alone.
template <class T>
Var<T> max_pool2(const Var<T>& x) {
    const Shape s = x.shape();
    const int oh = pooled_size(s.h);
    const int ow = pooled_size(s.w);
    Tensor<T> out(Shape{s.n, s.c, oh, ow});
    std::vector<std::size_t> argmax(out.size());
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = x.value().index(n, c, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = 0;
                    for (int dy = 0; dy < 2; ++dy) {
                        const int iy = 2 * oy + dy;
                        if (iy >= s.h) break;
                        for (int dx = 0; dx < 2; ++dx) {
                            const int ix = 2 * ox + dx;
                            if (ix >= s.w) break;
                            const std::size_t i = base + static_cast<std::size_t>(iy) * s.w + ix;
                            if (x.value()[i] > best) {
                                best = x.value()[i];
                                best_i = i;
                            }
                        }
                    }
                    out[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    auto bwd = [argmax = std::move(argmax)](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
    };
    return make_result<T>(std::move(out), {x}, bwd, "max_pool2");
}

}  // namespace rmmdf
