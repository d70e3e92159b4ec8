#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "rmmdf/model.hpp"

namespace rmmdf {

template <class T>
struct StageRun {
    std::vector<SaliencyMap<T>> stages;  // M^1 .. M^N
    SaliencyMap<T> final_map;
};

template <class T>
StageRun<T> run_stages(const RmmdfModel<T>& model, const Tensor<T>& image, int n_stages) {
    if (n_stages < 1) throw ConfigError("run_stages: N must be >= 1, got " + std::to_string(n_stages));
    auto r = model.forward(image, n_stages);
    return {std::move(r.stage_maps), std::move(r.final_map)};
}

// BCE on a single-channel saliency score.
template <class T>
Var<T> cross_entropy_loss(const SaliencyMap<T>& pred, const Tensor<T>& gt) {
    return binary_cross_entropy(pred.var(), gt);
}

// Softmax cross entropy on two-channel logits.
template <class T>
Var<T> cross_entropy_loss(const Var<T>& logits, const Tensor<T>& gt) {
    return softmax_cross_entropy(logits, gt);
}

template <class T>
struct LossBundle {
    Var<T> loss_vgg;
    Var<T> loss_resnet;
    Var<T> loss_sdf;
    Var<T> total;
    std::vector<std::string> heads;  // names of the active loss terms

    static double read(const Var<T>& v) { return v.defined() ? static_cast<double>(v.value()[0]) : 0.0; }
    double vgg() const { return read(loss_vgg); }
    double resnet() const { return read(loss_resnet); }
    double sdf() const { return read(loss_sdf); }
    double total_value() const { return read(total); }
};

// One cross-entropy term per stream plus one for the SDF head: the VGG side
// head, M^N for the ResNet stream, the SDF logits. Weighted sum in `total`.
template <class T>
LossBundle<T> compute_losses(const ForwardResult<T>& r, const Tensor<T>& gt, const LossWeights& w) {
    LossBundle<T> b;
    std::vector<Var<T>> terms;
    if (r.vgg_score) {
        b.loss_vgg = cross_entropy_loss(*r.vgg_score, gt);
        b.heads.push_back("vgg");
        terms.push_back(scale(b.loss_vgg, static_cast<T>(w.vgg)));
    }
    if (!r.stage_maps.empty()) {
        b.loss_resnet = cross_entropy_loss(r.stage_maps.back(), gt);
        b.heads.push_back("resnet");
        terms.push_back(scale(b.loss_resnet, static_cast<T>(w.resnet)));
    }
    if (r.sdf_logits.defined()) {
        b.loss_sdf = cross_entropy_loss(r.sdf_logits, gt);
        b.heads.push_back("sdf");
        terms.push_back(scale(b.loss_sdf, static_cast<T>(w.sdf)));
    }
    b.total = add_n(terms);
    return b;
}

inline bool is_fusion_group(const std::string& name) {
    return name.rfind("fusion.", 0) == 0 || name.rfind("sdf.", 0) == 0;
}

// SGD with momentum and L2 weight decay:
//   v <- mu * v + (g + wd * w);  w <- w - lr * v
// mu is momentum_fusion for fusion.* / sdf.* parameters, momentum_main otherwise.
template <class T>
class Sgd {
public:
    Sgd(ParameterStore<T>& store, const OptimizerConfig& cfg) : store_(store), cfg_(cfg) { cfg_.validate(); }

    double learning_rate(int iteration) const {
        return cfg_.lr * std::pow(cfg_.lr_decay_factor, iteration / cfg_.lr_decay_step);
    }

    void step(int iteration) {
        const T lr = static_cast<T>(learning_rate(iteration));
        const T wd = static_cast<T>(cfg_.weight_decay);
        for (auto& [name, p] : store_.params()) {
            Var<T> param = p;
            const T mu = static_cast<T>(is_fusion_group(name) ? cfg_.momentum_fusion : cfg_.momentum_main);
            auto& v = velocity_.try_emplace(name, Tensor<T>::zeros(param.shape())).first->second;
            auto& w = param.mutable_value();
            const bool has_grad = param.has_grad();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const T g = (has_grad ? param.grad()[i] : T(0)) + wd * w[i];
                v[i] = mu * v[i] + g;
                w[i] -= lr * v[i];
            }
        }
    }

private:
    ParameterStore<T>& store_;
    OptimizerConfig cfg_;
    std::map<std::string, Tensor<T>> velocity_;
};

// First parameter (in name order) whose gradient holds a NaN/Inf, or "".
template <class T>
std::string first_nonfinite_gradient(const ParameterStore<T>& store) {
    for (const auto& [name, p] : store.params())
        if (p.has_grad() && !p.grad().all_finite()) return name;
    return {};
}

template <class T>
struct TrainingSample {
    Tensor<T> image;  // 1x3xRxR, normalized
    Tensor<T> mask;   // 1x1xRxR, {0,1}
    std::string id;
};

struct TrainingLogRow {
    int iteration = 0;
    double loss_vgg = 0;
    double loss_resnet = 0;
    double loss_sdf = 0;
    double total = 0;
    double lr = 0;
};

struct TrainHooks {
    std::function<void(const TrainingLogRow&)> on_iteration;
    std::function<void(int)> on_checkpoint;  // called with the completed iteration count
};

// Deterministic epoch order: shuffled with a per-epoch sub-seed.
inline std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "shuffle", epoch));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

// Mini-batch SGD over the unrolled N-stage graph. Throws NumericalError on a
// non-finite loss, naming the first parameter with a non-finite gradient.
template <class T>
std::vector<TrainingLogRow> train(RmmdfModel<T>& model, const std::vector<TrainingSample<T>>& data,
                                  const OptimizerConfig& opt, const TrainHooks& hooks = {}) {
    if (data.empty()) throw ConfigError("train: dataset is empty");
    const int res = model.config().resolution;
    for (const auto& s : data)
        if (s.image.shape() != Shape{1, 3, res, res} || s.mask.shape() != Shape{1, 1, res, res})
            throw ShapeError("train: sample '" + s.id + "' is not at the configured resolution " +
                             std::to_string(res));
    Sgd<T> sgd(model.parameters(), opt);
    model.set_training(true);
    std::vector<TrainingLogRow> log;
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size), data.size());
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::size_t epoch = 0;
    for (int it = 0; it < opt.iterations; ++it) {
        std::vector<Tensor<T>> images;
        std::vector<Tensor<T>> masks;
        for (std::size_t k = 0; k < batch; ++k) {
            if (cursor == order.size()) {
                order = epoch_order(data.size(), model.config().seed, epoch++);
                cursor = 0;
            }
            const auto& s = data[order[cursor++]];
            images.push_back(s.image);
            masks.push_back(s.mask);
        }
        const auto x = stack_batch<T>(images);
        const auto y = stack_batch<T>(masks);

        model.parameters().zero_grad();
        const auto result = model.forward(x);
        const auto losses = compute_losses(result, y, model.config().loss_weights);
        backward(losses.total);

        TrainingLogRow row{it, losses.vgg(), losses.resnet(), losses.sdf(), losses.total_value(),
                           sgd.learning_rate(it)};
        if (!std::isfinite(row.total) || !first_nonfinite_gradient(model.parameters()).empty()) {
            const std::string bad = first_nonfinite_gradient(model.parameters());
            throw NumericalError("training diverged at iteration " + std::to_string(it) + " (total loss " +
                                 std::to_string(row.total) + "); first non-finite gradient: " +
                                 (bad.empty() ? std::string("none") : bad));
        }
        sgd.step(it);
        log.push_back(row);
        if (hooks.on_iteration) hooks.on_iteration(row);
        if (hooks.on_checkpoint && opt.checkpoint_every > 0 && (it + 1) % opt.checkpoint_every == 0)
            hooks.on_checkpoint(it + 1);
    }
    return log;
}

// Inference over a list of samples in evaluation mode, one at a time.
template <class T>
std::vector<ForwardResult<T>> predict_all(RmmdfModel<T>& model, const std::vector<TrainingSample<T>>& data) {
    model.set_training(false);
    NoGradGuard no_grad;
    std::vector<ForwardResult<T>> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(model.forward(s.image));
    return out;
}

// Describes one loss term found in a graph: the loss op and the parameters of
// the nearest parameterized layer(s) feeding its prediction.
struct LossHeadAudit {
    std::string op;
    std::vector<std::string> head_parameters;
};

// Walks the graph under `total` and lists every cross-entropy node together
// with its head layer.
template <class T>
std::vector<LossHeadAudit> audit_loss_heads(const Var<T>& total, const ParameterStore<T>& store) {
    std::vector<LossHeadAudit> out;
    for (Node<T>* n : topological_order(total)) {
        if (n->op != "binary_cross_entropy" && n->op != "softmax_cross_entropy") continue;
        LossHeadAudit a;
        a.op = n->op;
        std::set<std::string> names;
        std::vector<Node<T>*> frontier{n->parents[0].get()};
        std::set<Node<T>*> seen;
        while (!frontier.empty()) {
            Node<T>* cur = frontier.back();
            frontier.pop_back();
            if (!seen.insert(cur).second) continue;
            bool parameterized = false;
            for (const auto& p : cur->parents) {
                const std::string name = store.name_of(p.get());
                if (!name.empty()) {
                    names.insert(name);
                    parameterized = true;
                }
            }
            if (parameterized) continue;
            for (const auto& p : cur->parents)
                if (p->requires_grad) frontier.push_back(p.get());
        }
        a.head_parameters.assign(names.begin(), names.end());
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace rmmdf
