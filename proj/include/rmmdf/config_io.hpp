#pragma once

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rmmdf/config.hpp"

namespace rmmdf {

using json = nlohmann::json;

inline json to_json(const RunConfig& rc) {
    const auto& n = rc.network;
    const auto& o = rc.optimizer;
    return json{
        {"network",
         {{"resolution", n.resolution},
          {"width_multiplier", n.width_multiplier},
          {"depth_multiplier", n.depth_multiplier},
          {"stages", n.stages},
          {"max_resolution", n.max_resolution},
          {"sdf_channels", n.sdf_channels},
          {"vgg_layers", n.vgg_layers},
          {"variant", variant_name(n.variant)},
          {"freeze_earlier_stages", n.freeze_earlier_stages},
          {"bn_momentum", n.bn_momentum},
          {"seed", n.seed},
          {"loss_weights", {{"vgg", n.loss_weights.vgg}, {"resnet", n.loss_weights.resnet}, {"sdf", n.loss_weights.sdf}}}}},
        {"optimizer",
         {{"lr", o.lr},
          {"momentum_main", o.momentum_main},
          {"momentum_fusion", o.momentum_fusion},
          {"weight_decay", o.weight_decay},
          {"lr_decay_factor", o.lr_decay_factor},
          {"lr_decay_step", o.lr_decay_step},
          {"batch_size", o.batch_size},
          {"iterations", o.iterations},
          {"checkpoint_every", o.checkpoint_every}}}};
}

namespace detail {

inline const json& section(const json& j, const std::string& key, bool required) {
    static const json empty = json::object();
    if (!j.contains(key)) {
        if (required) throw ConfigError("missing config key '" + key + "'");
        return empty;
    }
    if (!j.at(key).is_object()) throw ConfigError("config key '" + key + "' must be an object");
    return j.at(key);
}

template <class V>
void read_key(const json& sec, const std::string& prefix, const std::string& key, V& out, bool required) {
    if (!sec.contains(key)) {
        if (required) throw ConfigError("missing config key '" + prefix + key + "'");
        return;
    }
    try {
        out = sec.at(key).get<V>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + prefix + key + "' has the wrong type: " + e.what());
    }
}

inline void reject_unknown(const json& sec, const std::string& prefix, const std::set<std::string>& known) {
    for (const auto& [k, v] : sec.items())
        if (!known.count(k)) throw ConfigError("unknown config key '" + prefix + k + "'");
}

}  // namespace detail

// Without a "preset" key every required key must be present; with one, the
// file only overrides the named preset.
inline RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::reject_unknown(j, "", {"preset", "network", "optimizer"});
    RunConfig rc;
    bool required = true;
    if (j.contains("preset")) {
        rc = preset(j.at("preset").get<std::string>());
        required = false;
    }
    const json& n = detail::section(j, "network", required);
    const json& o = detail::section(j, "optimizer", required);
    detail::reject_unknown(n, "network.",
                           {"resolution", "width_multiplier", "depth_multiplier", "stages", "max_resolution",
                            "sdf_channels", "vgg_layers", "variant", "freeze_earlier_stages", "bn_momentum", "seed",
                            "loss_weights"});
    detail::reject_unknown(o, "optimizer.",
                           {"lr", "momentum_main", "momentum_fusion", "weight_decay", "lr_decay_factor",
                            "lr_decay_step", "batch_size", "iterations", "checkpoint_every"});
    auto& nc = rc.network;
    detail::read_key(n, "network.", "resolution", nc.resolution, required);
    detail::read_key(n, "network.", "width_multiplier", nc.width_multiplier, required);
    detail::read_key(n, "network.", "stages", nc.stages, required);
    detail::read_key(n, "network.", "depth_multiplier", nc.depth_multiplier, false);
    detail::read_key(n, "network.", "max_resolution", nc.max_resolution, false);
    detail::read_key(n, "network.", "sdf_channels", nc.sdf_channels, false);
    detail::read_key(n, "network.", "vgg_layers", nc.vgg_layers, false);
    detail::read_key(n, "network.", "freeze_earlier_stages", nc.freeze_earlier_stages, false);
    detail::read_key(n, "network.", "bn_momentum", nc.bn_momentum, false);
    detail::read_key(n, "network.", "seed", nc.seed, false);
    if (n.contains("variant")) nc.variant = parse_variant(n.at("variant").get<std::string>());
    if (n.contains("loss_weights")) {
        const json& lw = n.at("loss_weights");
        detail::reject_unknown(lw, "network.loss_weights.", {"vgg", "resnet", "sdf"});
        detail::read_key(lw, "network.loss_weights.", "vgg", nc.loss_weights.vgg, false);
        detail::read_key(lw, "network.loss_weights.", "resnet", nc.loss_weights.resnet, false);
        detail::read_key(lw, "network.loss_weights.", "sdf", nc.loss_weights.sdf, false);
    }
    auto& oc = rc.optimizer;
    detail::read_key(o, "optimizer.", "lr", oc.lr, required);
    detail::read_key(o, "optimizer.", "batch_size", oc.batch_size, required);
    detail::read_key(o, "optimizer.", "iterations", oc.iterations, required);
    detail::read_key(o, "optimizer.", "momentum_main", oc.momentum_main, false);
    detail::read_key(o, "optimizer.", "momentum_fusion", oc.momentum_fusion, false);
    detail::read_key(o, "optimizer.", "weight_decay", oc.weight_decay, false);
    detail::read_key(o, "optimizer.", "lr_decay_factor", oc.lr_decay_factor, false);
    detail::read_key(o, "optimizer.", "lr_decay_step", oc.lr_decay_step, false);
    detail::read_key(o, "optimizer.", "checkpoint_every", oc.checkpoint_every, false);
    rc.network.validate();
    rc.optimizer.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace rmmdf
