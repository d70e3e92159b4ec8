#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmmdf/ops/conv.hpp"
#include "rmmdf/ops/norm.hpp"
#include "rmmdf/rng.hpp"

namespace rmmdf {

// Every trainable tensor and every batch-norm buffer of a model, keyed by the
// hierarchical name "stream.block.layer.kind" (fusion parameters use
// "fusion.drm.level{i}.kind" and "fusion.dam.{reduce|mix|inject}.level{i}.kind").
template <class T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    Var<T> add(const std::string& name, Tensor<T> init) {
        if (params_.count(name) || buffers_.count(name)) throw ConfigError("duplicate parameter name " + name);
        auto v = Var<T>::leaf(std::move(init), true);
        owner_[v.node()] = name;
        params_.emplace(name, v);
        return v;
    }

    // Kaiming fan-in normal.
    Tensor<T> kaiming(Shape s, int fan_in) {
        Tensor<T> t(s);
        const double std = std::sqrt(2.0 / fan_in);
        for (auto& v : t.vec()) v = static_cast<T>(rng_.normal() * std);
        return t;
    }

    BatchNormStats<T>& add_bn_stats(const std::string& prefix, int channels) {
        auto stats = std::make_unique<BatchNormStats<T>>();
        stats->mean = Tensor<T>::zeros(Shape{1, channels, 1, 1});
        stats->var = Tensor<T>::full(Shape{1, channels, 1, 1}, T(1));
        auto& ref = *stats;
        buffers_.emplace(prefix + ".running_mean", &ref.mean);
        buffers_.emplace(prefix + ".running_var", &ref.var);
        stats_.push_back(std::move(stats));
        return ref;
    }

    const std::map<std::string, Var<T>>& params() const { return params_; }
    const std::map<std::string, Tensor<T>*>& buffers() const { return buffers_; }

    Var<T>& param(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("no parameter named " + name);
        return it->second;
    }

    // Name of the parameter that owns a graph node, or "" for non-parameters.
    std::string name_of(const Node<T>* node) const {
        auto it = owner_.find(node);
        return it == owner_.end() ? std::string() : it->second;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : params_) n += v.value().size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, v] : params_) v.zero_grad();
    }

private:
    Rng rng_;
    std::map<std::string, Var<T>> params_;
    std::map<std::string, Tensor<T>*> buffers_;
    std::unordered_map<const Node<T>*, std::string> owner_;
    std::vector<std::unique_ptr<BatchNormStats<T>>> stats_;
};

template <class T>
struct Conv2d {
    Var<T> weight;
    Var<T> bias;
    ConvGeometry geometry;

    Conv2d() = default;
    // No bias when a batch norm follows.
    Conv2d(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int kernel, int stride = 1,
           bool with_bias = true)
        : geometry{kernel, stride, kernel / 2} {
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError(name + ": kernel must be odd and >= 1");
        if (stride != 1 && stride != 2) throw ConfigError(name + ": stride must be 1 or 2");
        weight = store.add(name + ".weight", store.kaiming(Shape{out_c, in_c, kernel, kernel}, in_c * kernel * kernel));
        if (with_bias) bias = store.add(name + ".bias", Tensor<T>::zeros(Shape{1, out_c, 1, 1}));
    }

    int in_channels() const { return weight.shape().c; }
    int out_channels() const { return weight.shape().n; }

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, geometry); }
};

// 3x3 transposed convolution; stride 2 doubles the spatial size.
template <class T>
struct Deconv2d {
    Var<T> weight;
    Var<T> bias;
    ConvGeometry geometry;
    int output_pad = 0;

    Deconv2d() = default;
    Deconv2d(ParameterStore<T>& store, const std::string& name, int in_c, int out_c, int stride)
        : geometry{3, stride, 1}, output_pad(stride - 1) {
        weight = store.add(name + ".weight", store.kaiming(Shape{in_c, out_c, 3, 3}, in_c * 9));
        bias = store.add(name + ".bias", Tensor<T>::zeros(Shape{1, out_c, 1, 1}));
    }

    int in_channels() const { return weight.shape().n; }
    int out_channels() const { return weight.shape().c; }

    Var<T> operator()(const Var<T>& x) const { return conv_transpose2d(x, weight, bias, geometry, output_pad); }
};

template <class T>
struct BatchNorm2d {
    Var<T> gamma;
    Var<T> beta;
    BatchNormStats<T>* stats = nullptr;

    BatchNorm2d() = default;
    BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
        gamma = store.add(name + ".bn_gamma", Tensor<T>::full(Shape{1, channels, 1, 1}, T(1)));
        beta = store.add(name + ".bn_beta", Tensor<T>::zeros(Shape{1, channels, 1, 1}));
        stats = &store.add_bn_stats(name + ".bn", channels);
    }

    Var<T> operator()(const Var<T>& x, bool training, T momentum) const {
        return batch_norm(x, gamma, beta, *stats, training, momentum);
    }
};

}  // namespace rmmdf
