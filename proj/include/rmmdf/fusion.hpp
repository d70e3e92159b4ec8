#pragma once

#include <array>
#include <string>
#include <vector>

#include "rmmdf/backbones.hpp"
#include "rmmdf/ops/resize.hpp"

namespace rmmdf {

enum class ResizeDirection { up, down, none };

inline const char* direction_name(ResizeDirection d) {
    switch (d) {
        case ResizeDirection::up: return "up";
        case ResizeDirection::down: return "down";
        case ResizeDirection::none: return "none";
    }
    return "?";
}

// Feature size used to choose the resize branch: spatial area.
inline long feature_size(Size2 s) { return s.area(); }

struct ResizeOp {
    ResizeDirection direction = ResizeDirection::none;
    Size2 target{};
    const char* method = "bilinear";
};

// Up-sample when the source is smaller than the target, down-sample when it
// is larger, pass through when the sizes are identical. Equal areas with
// different aspect fall back to comparing heights.
inline ResizeOp select_resize(Size2 source, Size2 target) {
    ResizeOp op;
    op.target = target;
    if (source == target)
        op.direction = ResizeDirection::none;
    else if (feature_size(source) != feature_size(target))
        op.direction = feature_size(source) < feature_size(target) ? ResizeDirection::up : ResizeDirection::down;
    else
        op.direction = source.h < target.h ? ResizeDirection::up : ResizeDirection::down;
    return op;
}

template <class T>
Var<T> apply_resize(const Var<T>& x, const ResizeOp& op) {
    if (op.direction == ResizeDirection::none) return x;
    return resize_bilinear(x, op.target);
}

template <class T>
struct RefinedFeature {
    Var<T> features;
    ResizeOp resize;  // applied to the saliency map
};

// X_i <- relu(conv3x3(cat(X_i, resize(M -> size(X_i))))).
template <class T>
RefinedFeature<T> refine_details(const Conv2d<T>& fusion_conv, const Var<T>& x, const SaliencyMap<T>& m) {
    const Shape xs = x.shape();
    if (fusion_conv.in_channels() != xs.c + 1 || fusion_conv.out_channels() != xs.c)
        throw ConfigError("refine_details: fusion conv maps " + std::to_string(fusion_conv.in_channels()) + "->" +
                          std::to_string(fusion_conv.out_channels()) + " channels but features have " +
                          std::to_string(xs.c));
    if (m.var().shape().n != xs.n) throw ShapeError("refine_details: batch size mismatch");
    RefinedFeature<T> out;
    out.resize = select_resize(m.resolution(), spatial(xs));
    Var<T> guide = apply_resize(m.var(), out.resize);
    out.features = relu(fusion_conv(concat_channels<T>({x, guide})));
    return out;
}

// Pyramid-aggregated map X_i (channels = agg width) or a reduced map (1 channel).
template <class T>
struct AggregatedMap {
    Var<T> data;
    int source_level = 1;
    int stage = 1;
    // Resize applied to each reduced level j before concatenation.
    std::array<ResizeDirection, kLevels> resizes{};

    Size2 size() const { return spatial(data.shape()); }
};

// Concatenate the five reduced maps at the size of `level`, mix them with a
// 1x1 conv, and bring the result to `target` (the size of F_level).
template <class T>
AggregatedMap<T> dense_aggregate(const std::array<Var<T>, kLevels>& reduced, int level, int stage,
                                 const Conv2d<T>& mix, Size2 target) {
    if (level < 1 || level > kLevels) throw ConfigError("dense_aggregate: level must be in [1, 5]");
    if (mix.in_channels() != kLevels) throw ConfigError("dense_aggregate: mix conv must take 5 channels");
    AggregatedMap<T> out;
    out.source_level = level;
    out.stage = stage;
    const Size2 anchor = spatial(reduced[level - 1].shape());
    std::vector<Var<T>> parts;
    for (int j = 1; j <= kLevels; ++j) {
        const Var<T>& r = reduced[j - 1];
        if (r.shape().c != 1) throw ShapeError("dense_aggregate: reduced level must have 1 channel");
        const ResizeOp op = select_resize(spatial(r.shape()), anchor);
        out.resizes[j - 1] = op.direction;
        parts.push_back(apply_resize(r, op));
    }
    Var<T> mixed = mix(concat_channels(parts));
    out.data = apply_resize(mixed, select_resize(anchor, target));
    return out;
}

// F_i <- relu(conv3x3(cat(F_i, agg))). Sizes must already agree.
template <class T>
Var<T> inject_aggregate(const Conv2d<T>& fusion_conv, const Var<T>& f, const AggregatedMap<T>& agg) {
    const Shape fs = f.shape();
    const Shape as = agg.data.shape();
    if (!fs.spatially_equal(as) || fs.n != as.n)
        throw ShapeError("inject_aggregate: aggregate " + as.str() + " does not match features " + fs.str());
    if (fusion_conv.in_channels() != fs.c + as.c || fusion_conv.out_channels() != fs.c)
        throw ConfigError("inject_aggregate: fusion conv does not preserve " + std::to_string(fs.c) + " channels");
    return relu(fusion_conv(concat_channels<T>({f, agg.data})));
}

// Per-level DRM convs, "fusion.drm.level{i}". Shared across stages.
template <class T>
class DetailRefinement {
public:
    DetailRefinement() = default;
    DetailRefinement(ParameterStore<T>& store, const NetworkConfig& cfg) {
        for (int i = 1; i <= kLevels; ++i) {
            const int c = cfg.vgg_channels(i);
            convs_.emplace_back(store, "fusion.drm.level" + std::to_string(i), c + 1, c, 3, 1);
        }
    }

    FeaturePyramid<T> refine(const FeaturePyramid<T>& x, const SaliencyMap<T>& m) const {
        FeaturePyramid<T> out;
        for (int i = 1; i <= kLevels; ++i) {
            ScopeTag tag("fusion.drm.level" + std::to_string(i));
            out[i] = refine_details(convs_[i - 1], x[i], m).features;
        }
        return out;
    }

    const Conv2d<T>& conv(int level) const { return convs_.at(level - 1); }

private:
    std::vector<Conv2d<T>> convs_;
};

// DAM parameters: "fusion.dam.reduce.level{i}" (C_i -> 1, 1x1),
// "fusion.dam.mix.level{i}" (5 -> agg, 1x1), "fusion.dam.inject.level{i}"
// (C(F_i) + agg -> C(F_i), 3x3). Shared across stages.
template <class T>
class DenseAggregation {
public:
    DenseAggregation() = default;
    DenseAggregation(ParameterStore<T>& store, const NetworkConfig& cfg, bool with_injection) {
        const int agg = cfg.agg_channels();
        for (int i = 1; i <= kLevels; ++i) {
            const std::string lv = ".level" + std::to_string(i);
            reduce_.emplace_back(store, "fusion.dam.reduce" + lv, cfg.vgg_channels(i), 1, 1, 1);
            mix_.emplace_back(store, "fusion.dam.mix" + lv, kLevels, agg, 1, 1);
            if (with_injection) {
                const int c = cfg.resnet_channels(i);
                inject_.emplace_back(store, "fusion.dam.inject" + lv, c + agg, c, 3, 1);
            }
        }
    }

    std::array<Var<T>, kLevels> reduce(const FeaturePyramid<T>& x) const {
        std::array<Var<T>, kLevels> out;
        for (int i = 1; i <= kLevels; ++i) {
            ScopeTag tag("fusion.dam.reduce.level" + std::to_string(i));
            out[i - 1] = reduce_[i - 1](x[i]);
        }
        return out;
    }

    AggregatedMap<T> aggregate(const FeaturePyramid<T>& x, int level, int stage, Size2 target) const {
        return aggregate_reduced(reduce(x), level, stage, target);
    }

    AggregatedMap<T> aggregate_reduced(const std::array<Var<T>, kLevels>& reduced, int level, int stage,
                                       Size2 target) const {
        if (level < 1 || level > kLevels) throw ConfigError("dense_aggregate: level must be in [1, 5]");
        ScopeTag tag("fusion.dam.mix.level" + std::to_string(level));
        return dense_aggregate(reduced, level, stage, mix_[level - 1], target);
    }

    // All five aggregates; targets are the F sizes (equal to the X sizes).
    std::array<AggregatedMap<T>, kLevels> aggregate_all(const FeaturePyramid<T>& x, int stage,
                                                        const std::array<Size2, kLevels>& targets) const {
        const auto reduced = reduce(x);
        std::array<AggregatedMap<T>, kLevels> out;
        for (int i = 1; i <= kLevels; ++i) out[i - 1] = aggregate_reduced(reduced, i, stage, targets[i - 1]);
        return out;
    }

    Var<T> inject(int level, const Var<T>& f, const AggregatedMap<T>& agg) const {
        if (inject_.empty()) throw ConfigError("dense aggregation built without injection convs");
        ScopeTag tag("fusion.dam.inject.level" + std::to_string(level));
        return inject_aggregate(inject_.at(level - 1), f, agg);
    }

    bool has_injection() const { return !inject_.empty(); }
    const Conv2d<T>& reduce_conv(int level) const { return reduce_.at(level - 1); }
    const Conv2d<T>& mix_conv(int level) const { return mix_.at(level - 1); }
    const Conv2d<T>& inject_conv(int level) const { return inject_.at(level - 1); }

private:
    std::vector<Conv2d<T>> reduce_;
    std::vector<Conv2d<T>> mix_;
    std::vector<Conv2d<T>> inject_;
};

// Recursion state at stage t.
template <class T>
struct StageState {
    int t = 1;
    FeaturePyramid<T> X;
    FeaturePyramid<T> F;
    SaliencyMap<T> M;
};

// M^{t+1} = decode(F^{t+1}); advances t.
template <class T>
SaliencyMap<T> update_saliency(StageState<T>& state, const ResNetDecoder<T>& decoder) {
    state.M = decoder.decode(state.F);
    ++state.t;
    return state.M;
}

}  // namespace rmmdf
