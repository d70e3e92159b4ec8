#pragma once

#include <array>
#include <string>
#include <vector>

#include "rmmdf/fusion.hpp"
#include "rmmdf/ops/loss.hpp"

namespace rmmdf {

template <class T>
struct FusedFeature {
    Var<T> data;
    std::vector<std::string> constituents;  // "level1".."level5", "M"
};

struct LayerTrace {
    std::string name;
    Shape shape;
};

template <class T>
struct SdfOutput {
    Var<T> logits;
    std::vector<LayerTrace> trace;  // one entry per Table-1 column
};

// Encoder conv counts per block; 13 convolutions in total.
inline constexpr std::array<int, 4> kSdfEncoderLayers{3, 3, 3, 4};

// Selective deep fusion: S = sum_i conv3x3(resize(X_i -> size(M))) + M, then a
// 4-block BN+ReLU encoder (stride 2 at the start of blocks 2..4), a linear
// 4-layer transposed-conv decoder and a 1x1 two-class classifier.
template <class T>
class SelectiveFusion {
public:
    SelectiveFusion() = default;
    SelectiveFusion(ParameterStore<T>& store, const NetworkConfig& cfg)
        : max_resolution_(cfg.max_resolution), bn_momentum_(static_cast<T>(cfg.bn_momentum)) {
        const int width = cfg.sdf_width();
        for (int i = 1; i <= kLevels; ++i)
            fuse_.emplace_back(store, "sdf.fuse.level" + std::to_string(i), cfg.agg_channels(), 1, 3, 1);
        int in_c = 1;
        for (int b = 1; b <= 4; ++b) {
            std::vector<EncoderLayer> block;
            for (int l = 1; l <= kSdfEncoderLayers[b - 1]; ++l) {
                const std::string name = "sdf.enc" + std::to_string(b) + ".layer" + std::to_string(l);
                const int stride = (l == 1 && b > 1) ? 2 : 1;
                block.push_back({Conv2d<T>(store, name, in_c, width, 3, stride, false), BatchNorm2d<T>(store, name, width)});
                in_c = width;
            }
            encoder_.push_back(std::move(block));
        }
        for (int k = 4; k >= 1; --k)
            decoder_.emplace_back(store, "sdf.dec" + std::to_string(k) + ".deconv", width, width, k == 4 ? 1 : 2);
        classifier_ = Conv2d<T>(store, "sdf.classifier.conv", width, 2, 1, 1);
    }

    FusedFeature<T> fuse(const std::vector<AggregatedMap<T>>& aggregates, const SaliencyMap<T>& m) const {
        if (aggregates.size() != static_cast<std::size_t>(kLevels))
            throw ConfigError("fuse: expected 5 aggregates, got " + std::to_string(aggregates.size()));
        std::array<bool, kLevels> seen{};
        for (const auto& a : aggregates) {
            if (a.source_level < 1 || a.source_level > kLevels || seen[a.source_level - 1])
                throw ConfigError("fuse: aggregates must cover levels 1..5 exactly once");
            seen[a.source_level - 1] = true;
            const Size2 s = a.size();
            if (s.h > max_resolution_ || s.w > max_resolution_)
                throw ShapeError("fuse: aggregate " + s.str() + " exceeds max resolution");
        }
        FusedFeature<T> out;
        std::vector<Var<T>> terms;
        for (int level = 1; level <= kLevels; ++level) {
            for (const auto& a : aggregates) {
                if (a.source_level != level) continue;
                ScopeTag tag("sdf.fuse.level" + std::to_string(level));
                const Var<T> resized = apply_resize(a.data, select_resize(a.size(), m.resolution()));
                terms.push_back(fuse_[level - 1](resized));
                out.constituents.push_back("level" + std::to_string(level));
            }
        }
        terms.push_back(m.var());
        out.constituents.push_back("M");
        out.data = add_n(terms);
        return out;
    }

    SdfOutput<T> forward(const FusedFeature<T>& s, bool training) const {
        const Shape in = s.data.shape();
        if (in.c != 1) throw ShapeError("sdf_forward: fused feature must have one channel, got " + in.str());
        if (in.h % 16 != 0 || in.w % 16 != 0)
            throw ShapeError("sdf_forward: resolution must be divisible by 16, got " + in.str());
        SdfOutput<T> out;
        ScopeTag tag("sdf");
        Var<T> x = s.data;
        for (std::size_t b = 0; b < encoder_.size(); ++b) {
            for (const auto& layer : encoder_[b]) x = relu(layer.bn(layer.conv(x), training, bn_momentum_));
            out.trace.push_back({"Conv" + std::to_string(b + 1), x.shape()});
        }
        x = decode(x, &out.trace);
        {
            ScopeTag head("sdf.classifier");
            out.logits = classifier_(x);
        }
        out.trace.push_back({"ConvC.", out.logits.shape()});
        return out;
    }

    // Decoder alone (no activation anywhere): DeC.4 .. DeC.1.
    Var<T> decode(const Var<T>& encoded, std::vector<LayerTrace>* trace = nullptr) const {
        Var<T> x = encoded;
        int k = 4;
        for (const auto& layer : decoder_) {
            x = layer(x);
            if (trace) trace->push_back({"DeC." + std::to_string(k), x.shape()});
            --k;
        }
        return x;
    }

    const Conv2d<T>& fuse_conv(int level) const { return fuse_.at(level - 1); }
    const Conv2d<T>& classifier() const { return classifier_; }

private:
    struct EncoderLayer {
        Conv2d<T> conv;
        BatchNorm2d<T> bn;
    };

    std::vector<Conv2d<T>> fuse_;
    std::vector<std::vector<EncoderLayer>> encoder_;
    std::vector<Deconv2d<T>> decoder_;
    Conv2d<T> classifier_;
    int max_resolution_ = 1024;
    T bn_momentum_ = T(0.1);
};

// Per-pixel softmax over the two classifier channels; returns P(foreground).
template <class T>
SaliencyMap<T> saliency_from_logits(const Var<T>& logits) {
    if (logits.shape().c != 2)
        throw ShapeError("saliency_from_logits: expected 2 channels, got " + logits.shape().str());
    return SaliencyMap<T>(softmax_foreground(logits));
}

}  // namespace rmmdf
