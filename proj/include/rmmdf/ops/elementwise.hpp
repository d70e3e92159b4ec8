#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rmmdf/autograd.hpp"

namespace rmmdf {

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
    auto bwd = [](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        const auto& y = self.value;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] > T(0)) dx[i] += self.grad[i];
    };
    return make_result<T>(std::move(out), {x}, bwd, "relu");
}

template <class T>
T logistic(T v) {
    // Split on sign so neither branch overflows exp.
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v = logistic(v);
    auto bwd = [](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        const auto& y = self.value;
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] += self.grad[i] * y[i] * (T(1) - y[i]);
    };
    return make_result<T>(std::move(out), {x}, bwd, "sigmoid");
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    a.value().require_same_shape(b.value(), "add");
    Tensor<T> out = a.value();
    out += b.value();
    auto bwd = [](Node<T>& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->grad_buffer() += self.grad;
    };
    return make_result<T>(std::move(out), {a, b}, bwd, "add");
}

// Sum of same-shaped terms.
template <class T>
Var<T> add_n(const std::vector<Var<T>>& terms) {
    if (terms.empty()) throw ShapeError("add_n: no terms");
    Tensor<T> out = terms.front().value();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        out.require_same_shape(terms[i].value(), "add_n");
        out += terms[i].value();
    }
    auto bwd = [](Node<T>& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->grad_buffer() += self.grad;
    };
    return make_result<T>(std::move(out), terms, bwd, "add_n");
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v *= factor;
    auto bwd = [factor](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
    };
    return make_result<T>(std::move(out), {x}, bwd, "scale");
}

// Mean over every element; returns a 1x1x1x1 scalar.
template <class T>
Var<T> mean_all(const Var<T>& x) {
    const T inv = T(1) / static_cast<T>(x.value().size());
    auto out = Tensor<T>::scalar(x.value().sum() * inv);
    auto bwd = [inv](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        const T g = self.grad[0] * inv;
        for (auto& v : dx.vec()) v += g;
    };
    return make_result<T>(std::move(out), {x}, bwd, "mean_all");
}

// Concatenate along channels; every input shares (n, h, w).
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape s0 = xs.front().shape();
    int channels = 0;
    for (const auto& x : xs) {
        const Shape s = x.shape();
        if (s.n != s0.n || !s.spatially_equal(s0))
            throw ShapeError("concat_channels: " + s.str() + " incompatible with " + s0.str());
        channels += s.c;
    }
    Tensor<T> out(Shape{s0.n, channels, s0.h, s0.w});
    const std::size_t plane = s0.plane();
    for (int n = 0; n < s0.n; ++n) {
        int offset = 0;
        for (const auto& x : xs) {
            const int c = x.shape().c;
            std::copy_n(x.value().plane(n, 0), plane * c, out.plane(n, offset));
            offset += c;
        }
    }
    auto bwd = [plane](Node<T>& self) {
        const int batch = self.value.shape().n;
        for (int n = 0; n < batch; ++n) {
            int offset = 0;
            for (auto& p : self.parents) {
                const int c = p->value.shape().c;
                if (p->requires_grad) {
                    T* dst = p->grad_buffer().plane(n, 0);
                    const T* src = self.grad.plane(n, offset);
                    for (std::size_t i = 0; i < plane * c; ++i) dst[i] += src[i];
                }
                offset += c;
            }
        }
    };
    return make_result<T>(std::move(out), xs, bwd, "concat_channels");
}

// Channel c of x as a (n, 1, h, w) map.
template <class T>
Var<T> select_channel(const Var<T>& x, int channel) {
    const Shape s = x.shape();
    if (channel < 0 || channel >= s.c) throw ShapeError("select_channel: channel out of range");
    Tensor<T> out(Shape{s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n) std::copy_n(x.value().plane(n, channel), s.plane(), out.plane(n, 0));
    auto bwd = [channel](Node<T>& self) {
        auto& dx = self.parents[0]->grad_buffer();
        const Shape s = dx.shape();
        for (int n = 0; n < s.n; ++n) {
            T* dst = dx.plane(n, channel);
            const T* src = self.grad.plane(n, 0);
            for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
        }
    };
    return make_result<T>(std::move(out), {x}, bwd, "select_channel");
}

}  // namespace rmmdf
