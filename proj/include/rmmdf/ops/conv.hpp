#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "rmmdf/autograd.hpp"

namespace rmmdf {

struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad = 1;
};

inline int conv_out_size(int in, const ConvGeometry& g) { return (in + 2 * g.pad - g.kernel) / g.stride + 1; }

inline int deconv_out_size(int in, const ConvGeometry& g, int output_pad) {
    return (in - 1) * g.stride - 2 * g.pad + g.kernel + output_pad;
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// col has (channels*k*k) rows and (out_h*out_w) columns.
template <class T>
void im2col(const T* img, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w, T* col) {
    const int k = g.kernel;
    const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds columns back into the image.
template <class T>
void col2im(const T* col, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w, T* img) {
    const int k = g.kernel;
    const std::size_t cols = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        T* plane = img + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * out_w;
                    T* dst = plane + static_cast<std::size_t>(iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

inline bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace detail

// 2-D cross-correlation. weight: (out_c, in_c, k, k); bias: (1, out_c, 1, 1) or undefined.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& g) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.h != g.kernel || ws.w != g.kernel)
        throw ShapeError("conv2d: kernel " + std::to_string(g.kernel) + " vs weight " + ws.str());
    if (ws.c != xs.c)
        throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, input is " + xs.str());
    if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1})
        throw ShapeError("conv2d: bias shape " + bias.shape().str());
    const int oh = conv_out_size(xs.h, g);
    const int ow = conv_out_size(xs.w, g);
    if (oh < 1 || ow < 1) throw ShapeError("conv2d: input " + xs.str() + " too small for kernel");

    const int out_c = ws.n;
    const int krows = xs.c * g.kernel * g.kernel;
    const std::size_t ocols = static_cast<std::size_t>(oh) * ow;
    Tensor<T> out(Shape{xs.n, out_c, oh, ow});
    std::vector<T> col;
    if (!detail::is_pointwise(g)) col.resize(static_cast<std::size_t>(krows) * ocols);

    detail::ConstMatMap<T> wmat(weight.value().data(), out_c, krows);
    for (int n = 0; n < xs.n; ++n) {
        const T* src = x.value().plane(n, 0);
        if (!detail::is_pointwise(g)) {
            detail::im2col(src, xs.c, xs.h, xs.w, g, oh, ow, col.data());
            src = col.data();
        }
        detail::ConstMatMap<T> cmat(src, krows, static_cast<Eigen::Index>(ocols));
        detail::MatMap<T> omat(out.plane(n, 0), out_c, static_cast<Eigen::Index>(ocols));
        omat.noalias() = wmat * cmat;
        if (bias.defined())
            for (int c = 0; c < out_c; ++c) omat.row(c).array() += bias.value()[c];
    }

    auto bwd = [g, oh, ow, krows, ocols, out_c](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const Shape xs = xn.value.shape();
        const bool need_x = xn.requires_grad;
        const bool need_w = wn.requires_grad;
        const bool need_b = self.parents.size() > 2 && self.parents[2]->requires_grad;
        std::vector<T> col;
        std::vector<T> dcol;
        const bool pw = detail::is_pointwise(g);
        if (!pw) {
            col.resize(static_cast<std::size_t>(krows) * ocols);
            dcol.resize(col.size());
        }
        detail::ConstMatMap<T> wmat(wn.value.data(), out_c, krows);
        for (int n = 0; n < xs.n; ++n) {
            detail::ConstMatMap<T> gmat(self.grad.plane(n, 0), out_c, static_cast<Eigen::Index>(ocols));
            if (need_w) {
                const T* src = xn.value.plane(n, 0);
                if (!pw) {
                    detail::im2col(src, xs.c, xs.h, xs.w, g, oh, ow, col.data());
                    src = col.data();
                }
                detail::ConstMatMap<T> cmat(src, krows, static_cast<Eigen::Index>(ocols));
                detail::MatMap<T> dw(wn.grad_buffer().data(), out_c, krows);
                dw.noalias() += gmat * cmat.transpose();
            }
            if (need_b) {
                auto& db = self.parents[2]->grad_buffer();
                for (int c = 0; c < out_c; ++c) db[c] += gmat.row(c).sum();
            }
            if (need_x) {
                if (pw) {
                    detail::MatMap<T> dx(xn.grad_buffer().plane(n, 0), krows, static_cast<Eigen::Index>(ocols));
                    dx.noalias() += wmat.transpose() * gmat;
                } else {
                    detail::MatMap<T> dc(dcol.data(), krows, static_cast<Eigen::Index>(ocols));
                    dc.noalias() = wmat.transpose() * gmat;
                    detail::col2im(dcol.data(), xs.c, xs.h, xs.w, g, oh, ow, xn.grad_buffer().plane(n, 0));
                }
            }
        }
    };
    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result<T>(std::move(out), std::move(inputs), bwd, "conv2d");
}

// Transposed convolution (adjoint of conv2d in its input). weight: (in_c, out_c, k, k).
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& g,
                        int output_pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (ws.h != g.kernel || ws.w != g.kernel)
        throw ShapeError("conv_transpose2d: kernel " + std::to_string(g.kernel) + " vs weight " + ws.str());
    if (ws.n != xs.c)
        throw ShapeError("conv_transpose2d: weight expects " + std::to_string(ws.n) + " input channels, input is " +
                         xs.str());
    if (output_pad < 0 || output_pad >= g.stride) throw ShapeError("conv_transpose2d: output_pad must be < stride");
    const int out_c = ws.c;
    if (bias.defined() && bias.shape() != Shape{1, out_c, 1, 1})
        throw ShapeError("conv_transpose2d: bias shape " + bias.shape().str());
    const int oh = deconv_out_size(xs.h, g, output_pad);
    const int ow = deconv_out_size(xs.w, g, output_pad);
    if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: empty output for input " + xs.str());

    const int krows = out_c * g.kernel * g.kernel;
    const std::size_t icols = static_cast<std::size_t>(xs.h) * xs.w;
    Tensor<T> out(Shape{xs.n, out_c, oh, ow});
    std::vector<T> col(static_cast<std::size_t>(krows) * icols);
    detail::ConstMatMap<T> wmat(weight.value().data(), xs.c, krows);
    for (int n = 0; n < xs.n; ++n) {
        detail::ConstMatMap<T> xmat(x.value().plane(n, 0), xs.c, static_cast<Eigen::Index>(icols));
        detail::MatMap<T> cmat(col.data(), krows, static_cast<Eigen::Index>(icols));
        cmat.noalias() = wmat.transpose() * xmat;
        detail::col2im(col.data(), out_c, oh, ow, g, xs.h, xs.w, out.plane(n, 0));
        if (bias.defined()) {
            for (int c = 0; c < out_c; ++c) {
                T* p = out.plane(n, c);
                const T b = bias.value()[c];
                for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) p[i] += b;
            }
        }
    }

    auto bwd = [g, oh, ow, krows, icols, out_c](Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const Shape xs = xn.value.shape();
        const bool need_b = self.parents.size() > 2 && self.parents[2]->requires_grad;
        std::vector<T> col(static_cast<std::size_t>(krows) * icols);
        detail::ConstMatMap<T> wmat(wn.value.data(), xs.c, krows);
        for (int n = 0; n < xs.n; ++n) {
            if (xn.requires_grad || wn.requires_grad)
                detail::im2col(self.grad.plane(n, 0), out_c, oh, ow, g, xs.h, xs.w, col.data());
            detail::ConstMatMap<T> cmat(col.data(), krows, static_cast<Eigen::Index>(icols));
            if (xn.requires_grad) {
                detail::MatMap<T> dx(xn.grad_buffer().plane(n, 0), xs.c, static_cast<Eigen::Index>(icols));
                dx.noalias() += wmat * cmat;
            }
            if (wn.requires_grad) {
                detail::ConstMatMap<T> xmat(xn.value.plane(n, 0), xs.c, static_cast<Eigen::Index>(icols));
                detail::MatMap<T> dw(wn.grad_buffer().data(), xs.c, krows);
                dw.noalias() += xmat * cmat.transpose();
            }
            if (need_b) {
                auto& db = self.parents[2]->grad_buffer();
                for (int c = 0; c < out_c; ++c) {
                    const T* p = self.grad.plane(n, c);
                    T s = 0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) s += p[i];
                    db[c] += s;
                }
            }
        }
    };
    std::vector<Var<T>> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result<T>(std::move(out), std::move(inputs), bwd, "conv_transpose2d");
}

}  // namespace rmmdf
