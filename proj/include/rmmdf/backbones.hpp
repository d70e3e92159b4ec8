#pragma once

#include <array>
#include <string>
#include <vector>

#include "rmmdf/config.hpp"
#include "rmmdf/ops/elementwise.hpp"
#include "rmmdf/ops/pool.hpp"
#include "rmmdf/parameters.hpp"

namespace rmmdf {

inline constexpr int kLevels = 5;

// Five feature maps, level i at index i - 1; level i has 1/2^i of the input size.
template <class T>
struct FeaturePyramid {
    std::array<Var<T>, kLevels> levels;

    Var<T>& operator[](int level) { return levels.at(level - 1); }
    const Var<T>& operator[](int level) const { return levels.at(level - 1); }
    Size2 size(int level) const { return spatial((*this)[level].shape()); }
    int channels(int level) const { return (*this)[level].shape().c; }
};

// Single-channel map with every value in [0, 1].
template <class T>
class SaliencyMap {
public:
    SaliencyMap() = default;
    explicit SaliencyMap(Var<T> map) : map_(std::move(map)) {
        if (map_.shape().c != 1) throw ShapeError("saliency map must have one channel, got " + map_.shape().str());
        for (T v : map_.value().vec())
            if (std::isfinite(v) && (v < T(0) || v > T(1))) throw NumericalError("saliency value outside [0, 1]");
    }

    const Var<T>& var() const { return map_; }
    const Tensor<T>& value() const { return map_.value(); }
    Size2 resolution() const { return spatial(map_.shape()); }

private:
    Var<T> map_;
};

struct ConvBlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int layers_per_block = 1;
    bool has_pool = true;
    bool has_relu = true;

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw ConfigError("conv block channels must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv block kernel must be odd and >= 1");
        if (stride != 1 && stride != 2) throw ConfigError("conv block stride must be 1 or 2");
        if (layers_per_block < 1) throw ConfigError("conv block needs at least one layer");
    }
};

inline std::vector<ConvBlockSpec> vgg_block_specs(const NetworkConfig& cfg) {
    std::vector<ConvBlockSpec> specs;
    int in_c = 3;
    for (int level = 1; level <= kLevels; ++level) {
        ConvBlockSpec s;
        s.in_channels = in_c;
        s.out_channels = cfg.vgg_channels(level);
        s.layers_per_block = cfg.vgg_layers[level - 1];
        s.validate();
        specs.push_back(s);
        in_c = s.out_channels;
    }
    return specs;
}

// Rejects inputs the five halvings cannot divide evenly.
template <class T>
void check_backbone_input(const Tensor<T>& image, int max_resolution) {
    const Shape s = image.shape();
    if (s.c != 3) throw ShapeError("backbone input must have 3 channels, got " + s.str());
    if (s.h % 32 != 0 || s.w % 32 != 0)
        throw ShapeError("backbone input height and width must be divisible by 32, got " + s.str());
    if (s.h > max_resolution || s.w > max_resolution)
        throw ShapeError("backbone input " + s.str() + " exceeds max resolution " + std::to_string(max_resolution));
}

// VGG-16 style stream: per block, 3x3 conv + ReLU layers then a 2x2 max-pool.
// X_i is the pooled output of block i.
template <class T>
class VggStream {
public:
    VggStream() = default;
    VggStream(ParameterStore<T>& store, const NetworkConfig& cfg) : max_resolution_(cfg.max_resolution) {
        for (const auto& spec : vgg_block_specs(cfg)) {
            const int level = static_cast<int>(blocks_.size()) + 1;
            std::vector<Conv2d<T>> layers;
            int in_c = spec.in_channels;
            for (int k = 1; k <= spec.layers_per_block; ++k) {
                layers.emplace_back(store, "vgg.block" + std::to_string(level) + ".conv" + std::to_string(k), in_c,
                                    spec.out_channels, spec.kernel, spec.stride);
                in_c = spec.out_channels;
            }
            blocks_.push_back(std::move(layers));
        }
    }

    FeaturePyramid<T> forward(const Var<T>& image) const {
        check_backbone_input(image.value(), max_resolution_);
        FeaturePyramid<T> out;
        Var<T> x = image;
        for (int level = 1; level <= kLevels; ++level) {
            ScopeTag tag("vgg.block" + std::to_string(level));
            for (const auto& conv : blocks_[level - 1]) x = relu(conv(x));
            x = max_pool2(x);
            out[level] = x;
        }
        return out;
    }

    const std::vector<std::vector<Conv2d<T>>>& blocks() const { return blocks_; }

private:
    std::vector<std::vector<Conv2d<T>>> blocks_;
    int max_resolution_ = 1024;
};

// relu(branch(x) + shortcut(x)). The branch is either two 3x3 convs or a
// 1x1-3x3-1x1 bottleneck; the shortcut is a 1x1 projection when the shape changes.
template <class T>
class ResidualUnit {
public:
    ResidualUnit() = default;
    ResidualUnit(ParameterStore<T>& store, const std::string& prefix, int in_c, int mid_c, int out_c, int stride,
                 bool bottleneck) {
        if (bottleneck) {
            branch_.emplace_back(store, prefix + "_conv1", in_c, mid_c, 1, 1);
            branch_.emplace_back(store, prefix + "_conv2", mid_c, mid_c, 3, stride);
            branch_.emplace_back(store, prefix + "_conv3", mid_c, out_c, 1, 1);
        } else {
            branch_.emplace_back(store, prefix + "_conv1", in_c, out_c, 3, stride);
            branch_.emplace_back(store, prefix + "_conv2", out_c, out_c, 3, 1);
        }
        if (stride != 1 || in_c != out_c) {
            projection_ = Conv2d<T>(store, prefix + "_proj", in_c, out_c, 1, stride);
            has_projection_ = true;
        }
    }

    Var<T> operator()(const Var<T>& x) const {
        Var<T> y = x;
        for (std::size_t i = 0; i < branch_.size(); ++i) {
            y = branch_[i](y);
            if (i + 1 < branch_.size()) y = relu(y);
        }
        return relu(add(y, has_projection_ ? projection_(x) : x));
    }

    const std::vector<Conv2d<T>>& branch() const { return branch_; }

private:
    std::vector<Conv2d<T>> branch_;
    Conv2d<T> projection_;
    bool has_projection_ = false;
};

// ResNet-50 style stream. F_1 = stem (7x7, stride 2), F_2 = max-pool + stage 1,
// F_3..F_5 = stages 2..4, each opening with a stride-2 unit.
template <class T>
class ResNetStream {
public:
    ResNetStream() = default;
    ResNetStream(ParameterStore<T>& store, const NetworkConfig& cfg) : max_resolution_(cfg.max_resolution) {
        stem_ = Conv2d<T>(store, "resnet.block1.stem", 3, cfg.resnet_channels(1), 7, 2);
        const bool bottleneck = cfg.resnet_bottleneck();
        int in_c = cfg.resnet_channels(1);
        for (int level = 2; level <= kLevels; ++level) {
            std::vector<ResidualUnit<T>> units;
            const int out_c = cfg.resnet_channels(level);
            const int mid_c = cfg.resnet_mid_channels(level);
            for (int u = 1; u <= cfg.resnet_blocks(level - 2); ++u) {
                const int stride = (u == 1 && level > 2) ? 2 : 1;
                units.emplace_back(store, "resnet.block" + std::to_string(level) + ".unit" + std::to_string(u), in_c,
                                   mid_c, out_c, stride, bottleneck);
                in_c = out_c;
            }
            stages_.push_back(std::move(units));
        }
    }

    FeaturePyramid<T> forward(const Var<T>& image) const {
        check_backbone_input(image.value(), max_resolution_);
        FeaturePyramid<T> out;
        {
            ScopeTag tag("resnet.block1");
            out[1] = relu(stem_(image));
        }
        Var<T> x = out[1];
        for (int level = 2; level <= kLevels; ++level) {
            ScopeTag tag("resnet.block" + std::to_string(level));
            if (level == 2) x = max_pool2(x);
            for (const auto& unit : stages_[level - 2]) x = unit(x);
            out[level] = x;
        }
        return out;
    }

    const std::vector<std::vector<ResidualUnit<T>>>& stages() const { return stages_; }

private:
    Conv2d<T> stem_;
    std::vector<std::vector<ResidualUnit<T>>> stages_;
    int max_resolution_ = 1024;
};

// Five 3x3 stride-2 deconvolutions from F_5 back to input resolution. After
// each of the first four, the matching pyramid level is concatenated in, so
// every level of F reaches M. ReLU between layers, logistic at the end.
template <class T>
class ResNetDecoder {
public:
    ResNetDecoder() = default;
    ResNetDecoder(ParameterStore<T>& store, const NetworkConfig& cfg) : max_resolution_(cfg.max_resolution) {
        int in_c = cfg.resnet_channels(5);
        for (int k = 1; k <= kLevels; ++k) {
            const int out_c = cfg.decoder_channels(k);
            layers_.emplace_back(store, "resnet.decoder.layer" + std::to_string(k), in_c, out_c, 2);
            if (k < kLevels) in_c = out_c + cfg.resnet_channels(kLevels - k);
        }
    }

    SaliencyMap<T> decode(const FeaturePyramid<T>& f) const {
        const Size2 top = f.size(5);
        if (static_cast<long>(top.h) * 32 > max_resolution_ || static_cast<long>(top.w) * 32 > max_resolution_)
            throw ShapeError("decoder output " + std::to_string(top.h * 32) + "x" + std::to_string(top.w * 32) +
                             " exceeds max resolution " + std::to_string(max_resolution_));
        ScopeTag tag("resnet.decoder");
        Var<T> x = f[5];
        for (int k = 1; k <= kLevels; ++k) {
            x = layers_[k - 1](x);
            if (k < kLevels) {
                const int skip = kLevels - k;
                if (!x.shape().spatially_equal(f[skip].shape()))
                    throw ShapeError("decoder layer " + std::to_string(k) + " output " + x.shape().str() +
                                     " does not align with pyramid level " + std::to_string(skip) + " " +
                                     f[skip].shape().str());
                x = concat_channels<T>({relu(x), f[skip]});
            }
        }
        return SaliencyMap<T>(sigmoid(x));
    }

    const std::vector<Deconv2d<T>>& layers() const { return layers_; }

private:
    std::vector<Deconv2d<T>> layers_;
    int max_resolution_ = 1024;
};

}  // namespace rmmdf
