#pragma once

#include <cmath>
#include <vector>

#include "rmmdf/autograd.hpp"

namespace rmmdf {

// Running statistics owned by a batch-norm layer; not trainable.
template <class T>
struct BatchNormStats {
    Tensor<T> mean;
    Tensor<T> var;
};

// Per-channel batch normalization. In training mode the batch statistics
// normalize the input and are blended into `stats` with `momentum`; in
// inference mode `stats` is used as-is.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats, bool training,
                  T momentum = T(0.1), T eps = T(1e-5)) {
    const Shape s = x.shape();
    if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1})
        throw ShapeError("batch_norm: affine parameters do not match " + s.str());
    const std::size_t plane = s.plane();
    const std::size_t count = static_cast<std::size_t>(s.n) * plane;
    std::vector<T> mean(s.c), inv_std(s.c);
    if (training) {
        for (int c = 0; c < s.c; ++c) {
            T sum = 0;
            for (int n = 0; n < s.n; ++n) {
                const T* p = x.value().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            }
            const T mu = sum / static_cast<T>(count);
            T sq = 0;
            for (int n = 0; n < s.n; ++n) {
                const T* p = x.value().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            const T var = sq / static_cast<T>(count);
            mean[c] = mu;
            inv_std[c] = T(1) / std::sqrt(var + eps);
            const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
            stats.mean[c] = (T(1) - momentum) * stats.mean[c] + momentum * mu;
            stats.var[c] = (T(1) - momentum) * stats.var[c] + momentum * unbiased;
        }
    } else {
        for (int c = 0; c < s.c; ++c) {
            mean[c] = stats.mean[c];
            inv_std[c] = T(1) / std::sqrt(stats.var[c] + eps);
        }
    }

    Tensor<T> xhat(s);
    Tensor<T> out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const T* p = x.value().plane(n, c);
            T* h = xhat.plane(n, c);
            T* o = out.plane(n, c);
            const T g = gamma.value()[c];
            const T b = beta.value()[c];
            for (std::size_t i = 0; i < plane; ++i) {
                h[i] = (p[i] - mean[c]) * inv_std[c];
                o[i] = g * h[i] + b;
            }
        }
    }

    auto bwd = [xhat = std::move(xhat), inv_std, training, plane, count](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const Shape s = self.value.shape();
        for (int c = 0; c < s.c; ++c) {
            T sum_dy = 0;
            T sum_dy_xhat = 0;
            for (int n = 0; n < s.n; ++n) {
                const T* dy = self.grad.plane(n, c);
                const T* h = xhat.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * h[i];
                }
            }
            if (gn.requires_grad) gn.grad_buffer()[c] += sum_dy_xhat;
            if (bn.requires_grad) bn.grad_buffer()[c] += sum_dy;
            if (!xn.requires_grad) continue;
            const T g = gn.value[c];
            const T m = static_cast<T>(count);
            for (int n = 0; n < s.n; ++n) {
                const T* dy = self.grad.plane(n, c);
                const T* h = xhat.plane(n, c);
                T* dx = xn.grad_buffer().plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) {
                    if (training)
                        dx[i] += g * inv_std[c] * (dy[i] - sum_dy / m - h[i] * sum_dy_xhat / m);
                    else
                        dx[i] += g * inv_std[c] * dy[i];
                }
            }
        }
    };
    return make_result<T>(std::move(out), {x, gamma, beta}, bwd, "batch_norm");
}

}  // namespace rmmdf
