#pragma once

#include <cmath>

#include "rmmdf/ops/elementwise.hpp"

namespace rmmdf {

namespace detail {

template <class T>
void check_binary_target(const Shape& pred, const Tensor<T>& gt, int pred_channels, const char* what) {
    const Shape g = gt.shape();
    if (pred.c != pred_channels)
        throw ShapeError(std::string(what) + ": prediction must have " + std::to_string(pred_channels) +
                         " channel(s), got " + pred.str());
    if (g.n != pred.n || g.c != 1 || !g.spatially_equal(pred))
        throw ShapeError(std::string(what) + ": target " + g.str() + " does not match prediction " + pred.str());
    for (T v : gt.vec())
        if (v != T(0) && v != T(1)) throw ShapeError(std::string(what) + ": target values must be 0 or 1");
}

}  // namespace detail

inline constexpr double kProbabilityClamp = 1e-7;

// Mean binary cross entropy of probabilities against a {0,1} target.
// Probabilities are clamped to [eps, 1 - eps]; clamped pixels pass no gradient.
template <class T>
Var<T> binary_cross_entropy(const Var<T>& prob, const Tensor<T>& target, T eps = T(kProbabilityClamp)) {
    detail::check_binary_target(prob.shape(), target, 1, "binary_cross_entropy");
    const auto& p = prob.value();
    const T count = static_cast<T>(p.size());
    T total = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T q = std::clamp(p[i], eps, T(1) - eps);
        total -= target[i] == T(1) ? std::log(q) : std::log(T(1) - q);
    }
    auto bwd = [target, eps, count](Node<T>& self) {
        auto& pn = *self.parents[0];
        auto& dp = pn.grad_buffer();
        const T g = self.grad[0] / count;
        for (std::size_t i = 0; i < dp.size(); ++i) {
            const T q = pn.value[i];
            if (q < eps || q > T(1) - eps) continue;
            dp[i] += target[i] == T(1) ? -g / q : g / (T(1) - q);
        }
    };
    return make_result<T>(Tensor<T>::scalar(total / count), {prob}, bwd, "binary_cross_entropy");
}

// Mean two-class softmax cross entropy. Channel 1 is foreground.
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const Tensor<T>& target) {
    detail::check_binary_target(logits.shape(), target, 2, "softmax_cross_entropy");
    const Shape s = logits.shape();
    const std::size_t plane = s.plane();
    const T count = static_cast<T>(static_cast<std::size_t>(s.n) * plane);
    T total = 0;
    for (int n = 0; n < s.n; ++n) {
        const T* bg = logits.value().plane(n, 0);
        const T* fg = logits.value().plane(n, 1);
        const T* t = target.plane(n, 0);
        for (std::size_t i = 0; i < plane; ++i) {
            // -log softmax = log(1 + exp(other - own)), computed stably.
            const T margin = t[i] == T(1) ? bg[i] - fg[i] : fg[i] - bg[i];
            total += margin > T(0) ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
        }
    }
    auto bwd = [target, count, plane](Node<T>& self) {
        auto& ln = *self.parents[0];
        auto& dl = ln.grad_buffer();
        const Shape s = ln.value.shape();
        const T g = self.grad[0] / count;
        for (int n = 0; n < s.n; ++n) {
            const T* bg = ln.value.plane(n, 0);
            const T* fg = ln.value.plane(n, 1);
            const T* t = target.plane(n, 0);
            T* dbg = dl.plane(n, 0);
            T* dfg = dl.plane(n, 1);
            for (std::size_t i = 0; i < plane; ++i) {
                const T p_fg = logistic(fg[i] - bg[i]);
                dfg[i] += g * (p_fg - t[i]);
                dbg[i] += g * ((T(1) - p_fg) - (T(1) - t[i]));
            }
        }
    };
    return make_result<T>(Tensor<T>::scalar(total / count), {logits}, bwd, "softmax_cross_entropy");
}

// Foreground probability of two-class logits: softmax channel 1.
template <class T>
Var<T> softmax_foreground(const Var<T>& logits) {
    const Shape s = logits.shape();
    if (s.c != 2) throw ShapeError("softmax_foreground: expected 2 channels, got " + s.str());
    Tensor<T> out(Shape{s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        const T* bg = logits.value().plane(n, 0);
        const T* fg = logits.value().plane(n, 1);
        T* o = out.plane(n, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) o[i] = logistic(fg[i] - bg[i]);
    }
    auto bwd = [](Node<T>& self) {
        auto& dl = self.parents[0]->grad_buffer();
        const Shape s = dl.shape();
        for (int n = 0; n < s.n; ++n) {
            const T* p = self.value.plane(n, 0);
            const T* g = self.grad.plane(n, 0);
            T* dbg = dl.plane(n, 0);
            T* dfg = dl.plane(n, 1);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                const T d = g[i] * p[i] * (T(1) - p[i]);
                dfg[i] += d;
                dbg[i] -= d;
            }
        }
    };
    return make_result<T>(std::move(out), {logits}, bwd, "softmax_foreground");
}

}  // namespace rmmdf
