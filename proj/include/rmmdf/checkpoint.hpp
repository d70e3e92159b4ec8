#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "rmmdf/config_io.hpp"
#include "rmmdf/parameters.hpp"

namespace rmmdf {

inline constexpr const char* kCheckpointFormat = "rmmdf-checkpoint-v1";

struct Checkpoint {
    RunConfig config;
    int iteration = 0;
    std::map<std::string, Tensor<double>> tensors;  // parameters and buffers by name
};

namespace detail {

inline json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

inline void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace detail

// Parameters and buffers of `store` plus the run config, as CBOR.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<T>& store, const RunConfig& config,
                     int iteration) {
    json tensors = json::object();
    auto put = [&](const std::string& name, const Tensor<T>& t) {
        std::vector<double> data(t.vec().begin(), t.vec().end());
        tensors[name] = json{{"shape", detail::shape_json(t.shape())}, {"data", std::move(data)}};
    };
    for (const auto& [name, v] : store.params()) put(name, v.value());
    for (const auto& [name, b] : store.buffers()) put(name, *b);
    const json doc{{"format", kCheckpointFormat}, {"iteration", iteration}, {"config", to_json(config)},
                   {"tensors", std::move(tensors)}};
    detail::write_atomic(path, json::to_cbor(doc));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json doc;
    try {
        doc = json::from_cbor(bytes);
    } catch (const json::exception& e) {
        throw IoError("checkpoint '" + path.string() + "' is corrupt: " + e.what());
    }
    if (doc.value("format", "") != kCheckpointFormat)
        throw IoError("checkpoint '" + path.string() + "' has an unknown format");
    Checkpoint ck;
    ck.config = run_config_from_json(doc.at("config"));
    ck.iteration = doc.value("iteration", 0);
    for (const auto& [name, entry] : doc.at("tensors").items()) {
        const auto dims = entry.at("shape").get<std::vector<int>>();
        if (dims.size() != 4) throw IoError("checkpoint tensor '" + name + "' is not 4-d");
        ck.tensors.emplace(name, Tensor<double>(Shape{dims[0], dims[1], dims[2], dims[3]},
                                                entry.at("data").get<std::vector<double>>()));
    }
    return ck;
}

namespace detail {

template <class T>
std::map<std::string, Tensor<T>*> writable_tensors(ParameterStore<T>& store) {
    std::map<std::string, Tensor<T>*> out;
    for (const auto& [name, v] : store.params()) out.emplace(name, &store.param(name).mutable_value());
    for (const auto& [name, b] : store.buffers()) out.emplace(name, b);
    return out;
}

}  // namespace detail

// Copies every tensor into `store`. The checkpoint must hold exactly the
// store's names and shapes; the first mismatch (in name order) is reported.
template <class T>
void apply_checkpoint(ParameterStore<T>& store, const Checkpoint& ck) {
    const auto targets = detail::writable_tensors(store);
    auto a = targets.begin();
    auto b = ck.tensors.begin();
    while (a != targets.end() || b != ck.tensors.end()) {
        if (b == ck.tensors.end() || (a != targets.end() && a->first < b->first))
            throw ConfigError("checkpoint mismatch at parameter '" + a->first + "': missing from checkpoint");
        if (a == targets.end() || b->first < a->first)
            throw ConfigError("checkpoint mismatch at parameter '" + b->first + "': not present in the model");
        if (a->second->shape() != b->second.shape())
            throw ConfigError("checkpoint mismatch at parameter '" + a->first + "': model shape " +
                              a->second->shape().str() + ", checkpoint shape " + b->second.shape().str());
        ++a;
        ++b;
    }
    for (const auto& [name, dst] : targets) *dst = ck.tensors.at(name).template cast<T>();
}

// Pretrained-weights hook: copies only tensors whose names start with one of
// `prefixes` (e.g. "vgg.", "resnet.block"). Shapes must agree; returns the
// number of tensors copied.
template <class T>
int load_pretrained(ParameterStore<T>& store, const Checkpoint& ck, const std::vector<std::string>& prefixes) {
    int copied = 0;
    for (const auto& [name, dst] : detail::writable_tensors(store)) {
        bool wanted = false;
        for (const auto& p : prefixes) wanted = wanted || name.rfind(p, 0) == 0;
        if (!wanted) continue;
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) continue;
        if (it->second.shape() != dst->shape())
            throw ConfigError("pretrained mismatch at parameter '" + name + "': model shape " + dst->shape().str() +
                              ", file shape " + it->second.shape().str());
        *dst = it->second.template cast<T>();
        ++copied;
    }
    return copied;
}

}  // namespace rmmdf
