#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "rmmdf/error.hpp"

namespace rmmdf {

// Rows of the component ladder, from single streams to the full model.
enum class Variant { vgg_only, resnet_only, drm, drm_dam, full };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::vgg_only: return "vgg_only";
        case Variant::resnet_only: return "resnet_only";
        case Variant::drm: return "drm";
        case Variant::drm_dam: return "drm_dam";
        case Variant::full: return "full";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::vgg_only, Variant::resnet_only, Variant::drm, Variant::drm_dam, Variant::full})
        if (s == variant_name(v)) return v;
    throw ConfigError("unknown variant '" + s + "'");
}

struct LossWeights {
    double vgg = 1.0;
    double resnet = 1.0;
    double sdf = 1.0;
};

struct OptimizerConfig {
    double lr = 1e-3;
    double momentum_main = 0.9;    // backbones and loss heads
    double momentum_fusion = 0.9;  // fusion.* and sdf.*
    double weight_decay = 5e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_step = 10000;
    int batch_size = 4;
    int iterations = 500;
    int checkpoint_every = 0;  // 0: final checkpoint only

    void validate() const {
        if (!(lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
        for (double m : {momentum_main, momentum_fusion})
            if (!(m >= 0.0 && m < 1.0)) throw ConfigError("optimizer momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
        if (batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
        if (iterations < 0) throw ConfigError("optimizer.iterations must be >= 0");
        if (lr_decay_step < 1) throw ConfigError("optimizer.lr_decay_step must be >= 1");
    }
};

struct NetworkConfig {
    int resolution = 64;
    double width_multiplier = 1.0 / 16.0;
    double depth_multiplier = 1.0 / 3.0;
    int stages = 3;
    int max_resolution = 1024;
    int sdf_channels = 0;  // 0: 64 scaled by width_multiplier
    std::array<int, 5> vgg_layers{2, 2, 3, 3, 3};
    Variant variant = Variant::full;
    bool freeze_earlier_stages = false;
    double bn_momentum = 0.1;
    std::uint64_t seed = 1;
    LossWeights loss_weights{};

    static int scaled(int full, double mult) {
        return std::max(1, static_cast<int>(std::lround(full * mult)));
    }

    int base_width() const { return scaled(64, width_multiplier); }
    int vgg_channels(int level) const {
        static constexpr std::array<int, 5> ratio{1, 2, 4, 8, 8};
        return base_width() * ratio.at(level - 1);
    }
    bool resnet_bottleneck() const { return width_multiplier >= 1.0 / 8.0; }
    int resnet_blocks(int stage) const {
        static constexpr std::array<int, 4> full{3, 4, 6, 3};
        return std::max(1, static_cast<int>(std::lround(full.at(stage) * depth_multiplier)));
    }
    // Channels of F_1..F_5.
    int resnet_channels(int level) const {
        if (level == 1) return base_width();
        if (resnet_bottleneck()) return 4 * scaled(64 << (level - 2), width_multiplier);
        return base_width() << (level - 2);
    }
    int resnet_mid_channels(int level) const { return scaled(64 << (level - 2), width_multiplier); }
    int agg_channels() const { return scaled(64, width_multiplier); }
    int decoder_channels(int layer) const {
        static constexpr std::array<int, 5> full{256, 128, 64, 32, 1};
        return layer == 5 ? 1 : scaled(full.at(layer - 1), width_multiplier);
    }
    int sdf_width() const { return sdf_channels > 0 ? sdf_channels : scaled(64, width_multiplier); }

    bool has_vgg() const { return variant != Variant::resnet_only; }
    bool has_resnet() const { return variant != Variant::vgg_only; }
    bool has_drm() const { return variant == Variant::drm || variant == Variant::drm_dam || variant == Variant::full; }
    bool has_dam() const { return variant == Variant::drm_dam || variant == Variant::full; }
    bool has_sdf() const { return variant == Variant::full; }

    void validate() const {
        if (resolution < 32 || resolution % 32 != 0)
            throw ConfigError("resolution must be a positive multiple of 32, got " + std::to_string(resolution));
        if (resolution > max_resolution) throw ConfigError("resolution exceeds max_resolution");
        if (!(width_multiplier >= 1.0 / 64.0 - 1e-12) || width_multiplier > 4.0)
            throw ConfigError("width_multiplier must lie in [1/64, 4]");
        if (!(depth_multiplier > 0.0) || depth_multiplier > 4.0)
            throw ConfigError("depth_multiplier must lie in (0, 4]");
        if (stages < 1) throw ConfigError("stages must be >= 1, got " + std::to_string(stages));
        for (int n : vgg_layers)
            if (n < 1) throw ConfigError("vgg_layers entries must be >= 1");
        if (sdf_channels < 0) throw ConfigError("sdf_channels must be >= 0");
        if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in (0, 1]");
        for (double w : {loss_weights.vgg, loss_weights.resnet, loss_weights.sdf})
            if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
    }
};

struct RunConfig {
    NetworkConfig network;
    OptimizerConfig optimizer;
};

// Desk-scale defaults for random-init training on synthetic data.
inline RunConfig micro_preset() {
    RunConfig rc;
    rc.network.resolution = 64;
    rc.network.width_multiplier = 1.0 / 16.0;
    rc.network.depth_multiplier = 1.0 / 3.0;
    rc.network.sdf_channels = 8;
    rc.network.stages = 3;
    rc.optimizer.lr = 1e-2;
    rc.optimizer.momentum_main = 0.9;
    rc.optimizer.momentum_fusion = 0.9;
    rc.optimizer.weight_decay = 5e-4;
    rc.optimizer.batch_size = 4;
    rc.optimizer.iterations = 500;
    rc.optimizer.lr_decay_step = 10000;
    return rc;
}

// Full-width network and the published optimizer schedule.
inline RunConfig paper_preset() {
    RunConfig rc;
    rc.network.resolution = 256;
    rc.network.width_multiplier = 1.0;
    rc.network.depth_multiplier = 1.0;
    rc.network.sdf_channels = 0;
    rc.network.stages = 3;
    rc.optimizer.lr = 1e-8;
    rc.optimizer.momentum_main = 0.99;
    rc.optimizer.momentum_fusion = 0.9;
    rc.optimizer.weight_decay = 5e-4;
    rc.optimizer.lr_decay_factor = 0.1;
    rc.optimizer.lr_decay_step = 10000;
    rc.optimizer.batch_size = 4;
    rc.optimizer.iterations = 50000;
    return rc;
}

inline RunConfig preset(const std::string& name) {
    if (name == "micro") return micro_preset();
    if (name == "paper") return paper_preset();
    throw ConfigError("unknown preset '" + name + "' (expected micro or paper)");
}

}  // namespace rmmdf
