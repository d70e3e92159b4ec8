#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmmdf/sdf.hpp"

namespace rmmdf {

// VGG loss head: a 1x1 side classifier per pyramid level ("heads.vgg.side{i}"),
// each up-sampled to input size, summed and squashed.
template <class T>
class VggHead {
public:
    VggHead() = default;
    VggHead(ParameterStore<T>& store, const NetworkConfig& cfg) {
        for (int i = 1; i <= kLevels; ++i)
            sides_.emplace_back(store, "heads.vgg.side" + std::to_string(i), cfg.vgg_channels(i), 1, 1, 1);
    }

    SaliencyMap<T> operator()(const FeaturePyramid<T>& x, Size2 out_size) const {
        ScopeTag tag("heads.vgg");
        std::vector<Var<T>> terms;
        for (int i = 1; i <= kLevels; ++i) terms.push_back(resize_bilinear(sides_[i - 1](x[i]), out_size));
        return SaliencyMap<T>(sigmoid(add_n(terms)));
    }

private:
    std::vector<Conv2d<T>> sides_;
};

template <class T>
struct ForwardResult {
    std::vector<SaliencyMap<T>> stage_maps;  // M^1 .. M^N; empty without the ResNet stream
    std::optional<SaliencyMap<T>> vgg_score;
    Var<T> sdf_logits;
    std::vector<LayerTrace> sdf_trace;
    SaliencyMap<T> final_map;
    StageState<T> state;  // state at the last stage
    std::array<AggregatedMap<T>, kLevels> final_aggregates{};
};

// Two parallel streams coupled by DRM/DAM for N stages, closed by the SDF head.
// Parameters are shared across stages.
template <class T>
class RmmdfModel {
public:
    explicit RmmdfModel(const NetworkConfig& cfg) : cfg_(cfg), store_(std::make_unique<ParameterStore<T>>(derive_seed(cfg.seed, "init", 0))) {
        cfg_.validate();
        auto& s = *store_;
        if (cfg_.has_vgg()) {
            vgg_ = VggStream<T>(s, cfg_);
            vgg_head_ = VggHead<T>(s, cfg_);
        }
        if (cfg_.has_resnet()) {
            resnet_ = ResNetStream<T>(s, cfg_);
            decoder_ = ResNetDecoder<T>(s, cfg_);
        }
        if (cfg_.has_drm()) drm_ = DetailRefinement<T>(s, cfg_);
        if (cfg_.has_dam()) dam_ = DenseAggregation<T>(s, cfg_, true);
        if (cfg_.has_sdf()) sdf_ = SelectiveFusion<T>(s, cfg_);
    }

    const NetworkConfig& config() const { return cfg_; }
    ParameterStore<T>& parameters() { return *store_; }
    const ParameterStore<T>& parameters() const { return *store_; }
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    const VggStream<T>& vgg() const { return vgg_; }
    const ResNetStream<T>& resnet() const { return resnet_; }
    const ResNetDecoder<T>& decoder() const { return decoder_; }
    const DetailRefinement<T>& drm() const { return drm_; }
    const DenseAggregation<T>& dam() const { return dam_; }
    const SelectiveFusion<T>& sdf() const { return sdf_; }

    // Recursive forward pass over `stages` stages (config value when 0).
    ForwardResult<T> forward(const Tensor<T>& images, int stages = 0) const {
        const int n_stages = stages == 0 ? cfg_.stages : stages;
        if (n_stages < 1) throw ConfigError("stage count must be >= 1, got " + std::to_string(n_stages));
        const Var<T> image = Var<T>::constant(images);
        const Size2 in_size = spatial(images.shape());
        ForwardResult<T> out;
        StageState<T>& st = out.state;
        st.t = 1;
        if (cfg_.has_vgg()) st.X = vgg_.forward(image);
        if (cfg_.has_resnet()) {
            st.F = resnet_.forward(image);
            st.M = decoder_.decode(st.F);
            out.stage_maps.push_back(st.M);
        }

        const bool coupled = cfg_.has_vgg() && cfg_.has_resnet();
        while (coupled && st.t < n_stages) {
            FeaturePyramid<T> next_x = st.X;
            if (cfg_.has_drm()) {
                // With frozen stages the previous saliency map is a constant input to DRM.
                const SaliencyMap<T> guide = cfg_.freeze_earlier_stages ? SaliencyMap<T>(detach(st.M.var())) : st.M;
                next_x = drm_.refine(st.X, guide);
            }
            if (cfg_.has_dam()) {
                const auto aggs = dam_.aggregate_all(st.X, st.t, pyramid_sizes(st.F));
                for (int i = 1; i <= kLevels; ++i) st.F[i] = dam_.inject(i, st.F[i], aggs[i - 1]);
            }
            st.X = next_x;
            update_saliency(st, decoder_);
            out.stage_maps.push_back(st.M);
        }
        if (!coupled) st.t = n_stages;

        if (cfg_.has_vgg()) out.vgg_score = vgg_head_(st.X, in_size);
        if (cfg_.has_sdf()) {
            const auto aggs = dam_.aggregate_all(st.X, st.t, pyramid_sizes(st.F));
            out.final_aggregates = aggs;
            const auto fused = sdf_.fuse(std::vector<AggregatedMap<T>>(aggs.begin(), aggs.end()), st.M);
            auto head = sdf_.forward(fused, training_);
            out.sdf_logits = head.logits;
            out.sdf_trace = std::move(head.trace);
            out.final_map = saliency_from_logits(out.sdf_logits);
        } else if (coupled) {
            out.final_map = SaliencyMap<T>(scale(add(out.vgg_score->var(), st.M.var()), T(0.5)));
        } else if (cfg_.has_vgg()) {
            out.final_map = *out.vgg_score;
        } else {
            out.final_map = st.M;
        }
        return out;
    }

private:
    static std::array<Size2, kLevels> pyramid_sizes(const FeaturePyramid<T>& p) {
        std::array<Size2, kLevels> s;
        for (int i = 1; i <= kLevels; ++i) s[i - 1] = p.size(i);
        return s;
    }

    NetworkConfig cfg_;
    std::unique_ptr<ParameterStore<T>> store_;
    VggStream<T> vgg_;
    VggHead<T> vgg_head_;
    ResNetStream<T> resnet_;
    ResNetDecoder<T> decoder_;
    DetailRefinement<T> drm_;
    DenseAggregation<T> dam_;
    SelectiveFusion<T> sdf_;
    bool training_ = true;
};

}  // namespace rmmdf
