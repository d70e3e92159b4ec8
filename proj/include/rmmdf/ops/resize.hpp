#pragma once

#include <cmath>
#include <vector>

#include "rmmdf/autograd.hpp"

namespace rmmdf {

namespace detail {

// Half-pixel (align_corners = false) sampling positions along one axis.
struct AxisTaps {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> frac;
};

inline AxisTaps bilinear_taps(int in, int out) {
    AxisTaps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * ratio - 0.5;
        if (src < 0) src = 0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        t.lo[o] = i0;
        t.hi[o] = i0 < in - 1 ? i0 + 1 : i0;
        t.frac[o] = src - i0;
    }
    return t;
}

}  // namespace detail

// Bilinear resampling of every (n, c) plane to `target`. Equal sizes copy the
// input unchanged.
template <class T>
Var<T> resize_bilinear(const Var<T>& x, Size2 target) {
    const Shape s = x.shape();
    if (target.h < 1 || target.w < 1) throw ShapeError("resize_bilinear: empty target " + target.str());
    if (s.h == target.h && s.w == target.w) {
        auto bwd = [](Node<T>& self) { self.parents[0]->grad_buffer() += self.grad; };
        return make_result<T>(x.value(), {x}, bwd, "resize_identity");
    }
    const auto ty = detail::bilinear_taps(s.h, target.h);
    const auto tx = detail::bilinear_taps(s.w, target.w);
    Tensor<T> out(Shape{s.n, s.c, target.h, target.w});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const T* src = x.value().plane(n, c);
            T* dst = out.plane(n, c);
            for (int oy = 0; oy < target.h; ++oy) {
                const T fy = static_cast<T>(ty.frac[oy]);
                const T* r0 = src + static_cast<std::size_t>(ty.lo[oy]) * s.w;
                const T* r1 = src + static_cast<std::size_t>(ty.hi[oy]) * s.w;
                for (int ox = 0; ox < target.w; ++ox) {
                    const T fx = static_cast<T>(tx.frac[ox]);
                    const int x0 = tx.lo[ox];
                    const int x1 = tx.hi[ox];
                    const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                    const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                    dst[static_cast<std::size_t>(oy) * target.w + ox] = top + (bot - top) * fy;
                }
            }
        }
    }
    auto bwd = [ty, tx, target](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        const Shape s = dx.shape();
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                T* d = dx.plane(n, c);
                const T* g = self.grad.plane(n, c);
                for (int oy = 0; oy < target.h; ++oy) {
                    const T fy = static_cast<T>(ty.frac[oy]);
                    const std::size_t r0 = static_cast<std::size_t>(ty.lo[oy]) * s.w;
                    const std::size_t r1 = static_cast<std::size_t>(ty.hi[oy]) * s.w;
                    for (int ox = 0; ox < target.w; ++ox) {
                        const T fx = static_cast<T>(tx.frac[ox]);
                        const T v = g[static_cast<std::size_t>(oy) * target.w + ox];
                        d[r0 + tx.lo[ox]] += v * (T(1) - fy) * (T(1) - fx);
                        d[r0 + tx.hi[ox]] += v * (T(1) - fy) * fx;
                        d[r1 + tx.lo[ox]] += v * fy * (T(1) - fx);
                        d[r1 + tx.hi[ox]] += v * fy * fx;
                    }
                }
            }
        }
    };
    return make_result<T>(std::move(out), {x}, bwd, "resize_bilinear");
}

}  // namespace rmmdf
