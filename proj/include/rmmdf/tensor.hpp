#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rmmdf/error.hpp"

namespace rmmdf {

// (batch, channels, height, width). Every activation in the library is 4-D.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    constexpr std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    constexpr bool spatially_equal(const Shape& o) const { return h == o.h && w == o.w; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        std::ostringstream os;
        os << n << "x" << c << "x" << h << "x" << w;
        return os.str();
    }
};

struct Size2 {
    int h = 0;
    int w = 0;
    constexpr long area() const { return static_cast<long>(h) * w; }
    friend constexpr bool operator==(const Size2&, const Size2&) = default;
    std::string str() const { return std::to_string(h) + "x" + std::to_string(w); }
};

inline Size2 spatial(const Shape& s) { return {s.h, s.w}; }

template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
        check_shape(shape);
        data_.assign(shape.numel(), fill);
    }
    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        check_shape(shape);
        if (data_.size() != shape.numel())
            throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape.str());
    }

    static Tensor zeros(Shape s) { return Tensor(s, T(0)); }
    static Tensor full(Shape s, T v) { return Tensor(s, v); }
    static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // Contiguous (h, w) plane of sample n, channel c.
    T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T sum() const {
        T s = 0;
        for (T v : data_) s += v;
        return s;
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    // Sample n as its own 1xCxHxW tensor.
    Tensor sample(int n) const {
        Shape s{1, shape_.c, shape_.h, shape_.w};
        std::vector<T> d(data_.begin() + static_cast<std::ptrdiff_t>(index(n, 0, 0, 0)),
                         data_.begin() + static_cast<std::ptrdiff_t>(index(n, 0, 0, 0) + s.numel()));
        return Tensor(s, std::move(d));
    }

    void require_same_shape(const Tensor& o, const char* what) const {
        if (!(shape_ == o.shape_))
            throw ShapeError(std::string(what) + ": shape " + shape_.str() + " vs " + o.shape_.str());
    }

private:
    static void check_shape(const Shape& s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw ShapeError("every tensor dimension must be >= 1, got " + s.str());
    }

    Shape shape_{};
    std::vector<T> data_;
};

// Concatenate samples along the batch dimension.
template <class T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
    if (items.empty()) throw ShapeError("stack_batch: empty batch");
    Shape s = items.front().shape();
    for (const auto& t : items)
        if (t.shape().c != s.c || !t.shape().spatially_equal(s) || t.shape().n != 1)
            throw ShapeError("stack_batch: sample shape mismatch " + t.shape().str());
    Shape out{static_cast<int>(items.size()), s.c, s.h, s.w};
    std::vector<T> d;
    d.reserve(out.numel());
    for (const auto& t : items) d.insert(d.end(), t.vec().begin(), t.vec().end());
    return Tensor<T>(out, std::move(d));
}

}  // namespace rmmdf
