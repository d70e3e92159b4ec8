#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmmdf/checkpoint.hpp"
#include "rmmdf/data.hpp"
#include "rmmdf/engine.hpp"
#include "rmmdf/metrics.hpp"
#include "rmmdf/plot.hpp"

#ifndef RMMDF_VERSION
#define RMMDF_VERSION "unknown"
#endif

namespace rmmdf::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2 };

struct CommonOptions {
    std::string config_path;
    std::string preset = "micro";
    std::optional<std::uint64_t> seed;
    std::optional<int> stages;
    std::optional<int> resolution;
    std::optional<double> width_mult;
    std::string out;
};

struct DataOptions {
    std::string data_root;
    int synthetic = 0;  // > 0: generate this many samples instead of loading
};

inline std::string version_string() { return RMMDF_VERSION; }

// Preset, then config file, then flag overrides.
inline RunConfig resolve_config(const CommonOptions& o) {
    RunConfig rc = o.config_path.empty() ? preset(o.preset) : load_run_config(o.config_path);
    if (o.seed) rc.network.seed = *o.seed;
    if (o.stages) rc.network.stages = *o.stages;
    if (o.resolution) rc.network.resolution = *o.resolution;
    if (o.width_mult) rc.network.width_multiplier = *o.width_mult;
    rc.network.validate();
    rc.optimizer.validate();
    return rc;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

// Written before any other output of a command.
inline void write_manifest(const fs::path& out_dir, const std::string& command, const CommonOptions& o,
                           const std::vector<std::string>& argv, const std::optional<RunConfig>& rc) {
    fs::create_directories(out_dir);
    json m{{"command", command},
           {"config_path", o.config_path},
           {"preset", o.config_path.empty() ? o.preset : ""},
           {"out", o.out},
           {"version", version_string()},
           {"argv", argv}};
    m["seed"] = rc ? json(rc->network.seed) : (o.seed ? json(*o.seed) : json(nullptr));
    if (o.stages) m["stages"] = *o.stages;
    if (o.resolution) m["resolution"] = *o.resolution;
    if (o.width_mult) m["width_mult"] = *o.width_mult;
    if (rc) m["config"] = to_json(*rc);
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

inline std::vector<Sample> acquire_samples(const DataOptions& d, std::uint64_t seed, int resolution) {
    if (d.synthetic > 0) {
        SyntheticSpec spec;
        spec.seed = derive_seed(seed, "synthetic_set", 0);
        spec.count = d.synthetic;
        spec.resolution = resolution;
        return generate_synthetic(spec);
    }
    if (d.data_root.empty()) throw ConfigError("either --data or --synthetic is required");
    auto load = load_dataset(d.data_root);
    for (const auto& w : load.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& r : load.rejects) std::cerr << "rejected: " << r << "\n";
    return std::move(load.samples);
}

inline std::vector<TrainingSample<float>> to_training(const std::vector<Sample>& samples, int resolution) {
    std::vector<TrainingSample<float>> out;
    for (const auto& s : samples) {
        auto p = preprocess<float>(s, resolution);
        out.push_back({std::move(p.image), std::move(p.mask), s.id});
    }
    return out;
}

// Final maps of a trained model on `data`, scored against the masks.
inline MetricReport score(RmmdfModel<float>& model, const std::vector<TrainingSample<float>>& data) {
    const auto results = predict_all(model, data);
    std::vector<Tensor<double>> preds, gts;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < data.size(); ++i) {
        preds.push_back(results[i].final_map.value().cast<double>());
        gts.push_back(data[i].mask.cast<double>());
        ids.push_back(data[i].id);
    }
    return summarize(preds, gts, ids);
}

inline void write_reports(const fs::path& dir, const MetricReport& r, const std::string& label) {
    write_report_json(dir / "report.json", r);
    write_report_csv(dir / "report.csv", r);
    write_curve_csv(dir / "pr_curve.csv", r);
    write_curve_plots(dir, {{label, &r}});
}

// Trains one model on `data` and writes log, checkpoints and training-set report to `dir`.
inline MetricReport train_into(const fs::path& dir, const RunConfig& rc,
                               const std::vector<TrainingSample<float>>& data, std::ostream& log_stream) {
    fs::create_directories(dir);
    RmmdfModel<float> model(rc.network);
    std::ofstream csv(dir / "train_log.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write '" + (dir / "train_log.csv").string() + "'");
    csv << "iteration,loss_vgg,loss_resnet,loss_sdf,total,lr\n" << std::setprecision(9);
    TrainHooks hooks;
    hooks.on_iteration = [&](const TrainingLogRow& r) {
        csv << r.iteration << ',' << r.loss_vgg << ',' << r.loss_resnet << ',' << r.loss_sdf << ',' << r.total << ','
            << r.lr << '\n';
        if (r.iteration % 50 == 0) log_stream << "iter " << r.iteration << " loss " << r.total << "\n";
    };
    hooks.on_checkpoint = [&](int it) {
        save_checkpoint(dir / ("checkpoint_iter" + std::to_string(it) + ".cbor"), model.parameters(), rc, it);
    };
    train(model, data, rc.optimizer, hooks);
    csv.flush();
    save_checkpoint(dir / "checkpoint.cbor", model.parameters(), rc, rc.optimizer.iterations);
    const auto report = score(model, data);
    write_reports(dir, report, variant_name(rc.network.variant));
    return report;
}

inline int cmd_train(const CommonOptions& o, const DataOptions& d, const std::vector<std::string>& argv) {
    const RunConfig rc = resolve_config(o);
    write_manifest(o.out, "train", o, argv, rc);
    write_text(fs::path(o.out) / "config.json", to_json(rc).dump(2) + "\n");
    const auto data = to_training(acquire_samples(d, rc.network.seed, rc.network.resolution), rc.network.resolution);
    if (data.empty()) throw ConfigError("training set is empty");
    const auto report = train_into(o.out, rc, data, std::cout);
    std::cout << "train: max_f " << report.max_f << " avg_f " << report.avg_f << " mae " << report.mae << "\n";
    return kOk;
}

inline int cmd_predict(const CommonOptions& o, const DataOptions& d, const std::string& checkpoint, bool dump_stages,
                       const std::vector<std::string>& argv) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    CommonOptions eff = o;
    RunConfig rc = ck.config;
    if (!o.config_path.empty()) rc = load_run_config(o.config_path);
    if (o.stages) rc.network.stages = *o.stages;
    if (o.resolution) rc.network.resolution = *o.resolution;
    if (o.width_mult) rc.network.width_multiplier = *o.width_mult;
    if (o.seed) rc.network.seed = *o.seed;
    rc.network.validate();
    write_manifest(o.out, "predict", eff, argv, rc);
    RmmdfModel<float> model(rc.network);
    apply_checkpoint(model.parameters(), ck);
    const auto samples = acquire_samples(d, rc.network.seed, rc.network.resolution);
    const auto data = to_training(samples, rc.network.resolution);
    const auto results = predict_all(model, data);
    const fs::path out(o.out);
    auto save_at_source_size = [&](const fs::path& path, const SaliencyMap<float>& m, const Sample& src) {
        const Tensor<float>& v = m.value();
        cv::Mat f(v.shape().h, v.shape().w, CV_32F, const_cast<float*>(v.vec().data()));
        cv::Mat sized;
        cv::resize(f, sized, src.mask.size(), 0, 0, cv::INTER_LINEAR);
        Tensor<float> t(Shape{1, 1, sized.rows, sized.cols});
        for (int y = 0; y < sized.rows; ++y)
            for (int x = 0; x < sized.cols; ++x) t.at(0, 0, y, x) = sized.at<float>(y, x);
        save_saliency_png(path, t);
    };
    for (std::size_t i = 0; i < data.size(); ++i) {
        save_at_source_size(out / (data[i].id + ".png"), results[i].final_map, samples[i]);
        if (dump_stages)
            for (std::size_t t = 0; t < results[i].stage_maps.size(); ++t)
                save_at_source_size(out / (data[i].id + "_M" + std::to_string(t + 1) + ".png"),
                                    results[i].stage_maps[t], samples[i]);
    }
    std::cout << "predict: wrote " << data.size() << " prediction(s) to " << out.string() << "\n";
    return kOk;
}

inline int cmd_eval(const CommonOptions& o, const std::string& pred_dir, const std::string& gt_dir,
                    const std::vector<std::string>& argv) {
    write_manifest(o.out, "eval", o, argv, std::nullopt);
    std::vector<std::string> rejects;
    const auto preds = detail::index_dir(pred_dir, {".png"}, rejects);
    const auto gts = detail::index_dir(gt_dir, {".png"}, rejects);
    std::vector<Tensor<double>> p, g;
    std::vector<std::string> ids;
    for (const auto& [stem, path] : gts) {
        auto it = preds.find(stem);
        if (it == preds.end()) continue;
        Tensor<double> gt = read_gray_png<double>(path);
        for (auto& v : gt.vec()) v = v >= 128.0 / 255.0 ? 1.0 : 0.0;
        Tensor<double> pr = read_gray_png<double>(it->second);
        if (pr.shape() != gt.shape())
            throw ShapeError("eval: prediction '" + it->second.string() + "' does not match its ground-truth size");
        p.push_back(std::move(pr));
        g.push_back(std::move(gt));
        ids.push_back(stem);
    }
    if (p.empty()) throw ConfigError("eval: no prediction/ground-truth pairs matched");
    const auto report = summarize(p, g, ids);
    write_reports(o.out, report, "predictions");
    std::cout << "eval: " << p.size() << " image(s) max_f " << report.max_f << " avg_f " << report.avg_f << " mae "
              << report.mae << "\n";
    return kOk;
}

inline int cmd_ablate(const CommonOptions& o, const DataOptions& d, const std::vector<std::string>& argv) {
    const RunConfig base = resolve_config(o);
    write_manifest(o.out, "ablate", o, argv, base);
    const auto data = to_training(acquire_samples(d, base.network.seed, base.network.resolution),
                                  base.network.resolution);
    if (data.empty()) throw ConfigError("training set is empty");
    const fs::path out(o.out);
    std::vector<std::pair<std::string, MetricReport>> rows;
    for (Variant v : {Variant::vgg_only, Variant::resnet_only, Variant::drm, Variant::drm_dam, Variant::full}) {
        RunConfig rc = base;
        rc.network.variant = v;
        std::cout << "ablate: " << variant_name(v) << "\n";
        rows.emplace_back(variant_name(v), train_into(out / variant_name(v), rc, data, std::cout));
    }
    std::ofstream csv(out / "ablation.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write ablation.csv");
    csv << "variant,ave_p,ave_r,avg_f,max_f,mae\n" << std::setprecision(17);
    for (const auto& [name, r] : rows)
        csv << name << ',' << r.ave_p << ',' << r.ave_r << ',' << r.avg_f << ',' << r.max_f << ',' << r.mae << '\n';
    std::vector<std::pair<std::string, const MetricReport*>> plots;
    for (const auto& [name, r] : rows) plots.emplace_back(name, &r);
    write_curve_plots(out, plots);
    const double full_mae = rows.back().second.mae, vgg_mae = rows.front().second.mae;
    if (full_mae > vgg_mae)
        std::cout << "ablate: note: full MAE " << full_mae << " exceeds vgg_only MAE " << vgg_mae << "\n";
    return kOk;
}

inline int cmd_synth(const CommonOptions& o, int count, int resolution, const std::vector<std::string>& argv) {
    write_manifest(o.out, "synth", o, argv, std::nullopt);
    SyntheticSpec spec;
    spec.seed = o.seed.value_or(7);
    spec.count = count;
    spec.resolution = resolution;
    for (const auto& s : generate_synthetic(spec)) save_sample(o.out, s);
    std::cout << "synth: wrote " << count << " sample(s) to " << o.out << "\n";
    return kOk;
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Recursive multi-model fusion saliency detector"};
    app.require_subcommand(1);
    CommonOptions common;
    DataOptions data;
    std::string checkpoint, pred_dir, gt_dir;
    bool dump_stages = false;
    int count = 8, synth_res = 64;

    auto add_common = [&](CLI::App* sub, bool model_flags) {
        sub->add_option("--out", common.out, "output directory")->required();
        sub->add_option("--seed", common.seed, "root seed");
        if (!model_flags) return;
        sub->add_option("--config", common.config_path, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--preset", common.preset, "preset when no config is given")
            ->check(CLI::IsMember({"micro", "paper"}));
        sub->add_option("--stages", common.stages, "recursion stages N");
        sub->add_option("--resolution", common.resolution, "network input resolution");
        sub->add_option("--width-mult", common.width_mult, "channel width multiplier");
    };
    auto add_data = [&](CLI::App* sub) {
        auto* g = sub->add_option_group("data");
        g->add_option("--data", data.data_root, "dataset root with images/ and masks/");
        g->add_option("--synthetic", data.synthetic, "generate this many synthetic samples")
            ->check(CLI::PositiveNumber);
        g->require_option(1);
    };

    auto* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, true);
    add_data(train_cmd);
    auto* predict_cmd = app.add_subcommand("predict", "write saliency maps");
    add_common(predict_cmd, true);
    add_data(predict_cmd);
    predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_flag("--dump-stages", dump_stages, "also write M^1..M^N");
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--pred", pred_dir, "prediction PNG directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--gt", gt_dir, "ground-truth mask directory")->required()->check(CLI::ExistingDirectory);
    auto* ablate_cmd = app.add_subcommand("ablate", "train and score the five component variants");
    add_common(ablate_cmd, true);
    add_data(ablate_cmd);
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
    add_common(synth_cmd, false);
    synth_cmd->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--resolution", synth_res, "image size")->check(CLI::Range(16, 4096));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(common, data, args);
        if (*predict_cmd) return cmd_predict(common, data, checkpoint, dump_stages, args);
        if (*eval_cmd) return cmd_eval(common, pred_dir, gt_dir, args);
        if (*ablate_cmd) return cmd_ablate(common, data, args);
        if (*synth_cmd) return cmd_synth(common, count, synth_res, args);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace rmmdf::cli
