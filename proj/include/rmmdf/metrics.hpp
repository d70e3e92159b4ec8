#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmmdf/tensor.hpp"

namespace rmmdf {

inline constexpr int kThresholds = 256;
inline constexpr double kDefaultBetaSq = 0.3;

inline double threshold_value(int k) { return k / 255.0; }

// Worker count from RMMDF_NUM_THREADS (default: hardware concurrency).
inline unsigned num_threads() {
    if (const char* env = std::getenv("RMMDF_NUM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, count) on up to num_threads() workers. Each index is
// written to its own slot by the caller, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(num_threads(), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

template <class T>
void require_same_size(const Tensor<T>& pred, const Tensor<T>& gt, const char* op) {
    if (pred.shape() != gt.shape())
        throw ShapeError(std::string(op) + ": prediction " + pred.shape().str() + " and ground truth " +
                         gt.shape().str() + " differ in size");
}

template <class T>
double mae(const Tensor<T>& pred, const Tensor<T>& gt) {
    require_same_size(pred, gt, "mae");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
    return s / static_cast<double>(pred.size());
}

inline double f_measure(double precision, double recall, double beta_sq = kDefaultBetaSq) {
    const double den = beta_sq * precision + recall;
    return den > 0 ? (1 + beta_sq) * precision * recall / den : 0.0;
}

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::int64_t total() const { return tp + fp + tn + fn; }
};

inline double precision_of(const ConfusionCounts& c) {
    return c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}
inline double recall_of(const ConfusionCounts& c) {
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

struct PrCurve {
    std::array<double, kThresholds> thresholds{};
    std::array<double, kThresholds> precision{};
    std::array<double, kThresholds> recall{};
    std::array<ConfusionCounts, kThresholds> counts{};
    std::vector<std::size_t> excluded;  // indices of images with an empty ground truth
};

namespace detail {

// Number of thresholds k/255 (k = 0..255) that p reaches, i.e. 1 + max{k : p >= k/255}.
inline int thresholds_reached(double p) {
    if (!(p >= 0.0)) return 0;
    int k = static_cast<int>(std::floor(p * 255.0));
    k = std::clamp(k, 0, kThresholds - 1);
    while (k + 1 < kThresholds && p >= threshold_value(k + 1)) ++k;
    while (k >= 0 && p < threshold_value(k)) --k;
    return k + 1;
}

template <class T>
bool is_binary(const Tensor<T>& gt) {
    for (T v : gt.vec())
        if (v != T(0) && v != T(1)) return false;
    return true;
}

// Histograms of the threshold index reached by foreground / background pixels.
template <class T>
struct ImageHistogram {
    std::array<std::int64_t, kThresholds + 1> fg{};
    std::array<std::int64_t, kThresholds + 1> bg{};
};

template <class T>
ImageHistogram<T> histogram(const Tensor<T>& pred, const Tensor<T>& gt) {
    ImageHistogram<T> h;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int r = thresholds_reached(static_cast<double>(pred[i]));
        (gt[i] > T(0.5) ? h.fg : h.bg)[static_cast<std::size_t>(r)]++;
    }
    return h;
}

template <class T>
void check_pairs(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& gts, const char* op) {
    if (preds.empty()) throw ConfigError(std::string(op) + ": no images");
    if (preds.size() != gts.size()) throw ConfigError(std::string(op) + ": prediction and ground-truth counts differ");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        require_same_size(preds[i], gts[i], op);
        if (!is_binary(gts[i])) throw ConfigError(std::string(op) + ": ground truth " + std::to_string(i) + " is not binary");
    }
}

}  // namespace detail

// Dataset-level PR curve: TP/FP/FN accumulated over every image with a
// non-empty ground truth at thresholds k/255, pred >= k/255 counting as positive.
template <class T>
PrCurve pr_curve(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& gts) {
    detail::check_pairs(preds, gts, "pr_curve");
    std::vector<detail::ImageHistogram<T>> hist(preds.size());
    std::vector<char> empty(preds.size(), 0);
    parallel_for(preds.size(), [&](std::size_t i) {
        hist[i] = detail::histogram(preds[i], gts[i]);
        empty[i] = gts[i].sum() == T(0);
    });
    PrCurve c;
    std::array<std::int64_t, kThresholds + 1> fg{}, bg{};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (empty[i]) {
            c.excluded.push_back(i);
            continue;
        }
        for (int r = 0; r <= kThresholds; ++r) {
            fg[static_cast<std::size_t>(r)] += hist[i].fg[static_cast<std::size_t>(r)];
            bg[static_cast<std::size_t>(r)] += hist[i].bg[static_cast<std::size_t>(r)];
        }
    }
    // A pixel that reaches r thresholds is positive for k < r.
    std::int64_t fg_pos = 0, bg_pos = 0, fg_all = 0, bg_all = 0;
    for (int r = 0; r <= kThresholds; ++r) {
        fg_all += fg[static_cast<std::size_t>(r)];
        bg_all += bg[static_cast<std::size_t>(r)];
    }
    for (int k = kThresholds - 1; k >= 0; --k) {
        fg_pos += fg[static_cast<std::size_t>(k + 1)];
        bg_pos += bg[static_cast<std::size_t>(k + 1)];
        auto& n = c.counts[static_cast<std::size_t>(k)];
        n = {fg_pos, bg_pos, bg_all - bg_pos, fg_all - fg_pos};
        c.thresholds[static_cast<std::size_t>(k)] = threshold_value(k);
        c.precision[static_cast<std::size_t>(k)] = precision_of(n);
        c.recall[static_cast<std::size_t>(k)] = recall_of(n);
    }
    return c;
}

struct ImageMetrics {
    std::string id;
    double mae = 0;
    double adaptive_threshold = 0;
    double precision = 0;
    double recall = 0;
    double f = 0;
    bool empty_gt = false;  // excluded from the curve, avg_f, ave_p and ave_r
};

struct MetricReport {
    double max_f = 0;
    double max_f_threshold = 0;
    double avg_f = 0;
    double ave_p = 0;
    double ave_r = 0;
    double mae = 0;
    double beta_sq = kDefaultBetaSq;
    std::vector<ImageMetrics> per_image;
    PrCurve curve;
};

inline double adaptive_threshold(double mean_pred) { return std::clamp(2.0 * mean_pred, 0.0, 1.0); }

template <class T>
ConfusionCounts counts_at(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool pos = static_cast<double>(pred[i]) >= threshold;
        const bool fg = gt[i] > T(0.5);
        (pos ? (fg ? c.tp : c.fp) : (fg ? c.fn : c.tn))++;
    }
    return c;
}

// max_f over the dataset curve; avg_f, ave_p, ave_r as per-image means at the
// adaptive threshold min(2 * mean(pred), 1); mae over every image.
template <class T>
MetricReport summarize(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& gts,
                       const std::vector<std::string>& ids = {}, double beta_sq = kDefaultBetaSq) {
    MetricReport r;
    r.beta_sq = beta_sq;
    r.curve = pr_curve(preds, gts);
    for (int k = 0; k < kThresholds; ++k) {
        const double f = f_measure(r.curve.precision[static_cast<std::size_t>(k)],
                                   r.curve.recall[static_cast<std::size_t>(k)], beta_sq);
        if (k == 0 || f > r.max_f) {
            r.max_f = f;
            r.max_f_threshold = threshold_value(k);
        }
    }
    r.per_image.resize(preds.size());
    parallel_for(preds.size(), [&](std::size_t i) {
        ImageMetrics& m = r.per_image[i];
        m.id = i < ids.size() ? ids[i] : std::to_string(i);
        m.mae = mae(preds[i], gts[i]);
        m.empty_gt = gts[i].sum() == T(0);
        double mean = 0;
        for (T v : preds[i].vec()) mean += static_cast<double>(v);
        m.adaptive_threshold = adaptive_threshold(mean / static_cast<double>(preds[i].size()));
        const auto c = counts_at(preds[i], gts[i], m.adaptive_threshold);
        m.precision = precision_of(c);
        m.recall = recall_of(c);
        m.f = f_measure(m.precision, m.recall, beta_sq);
    });
    std::size_t counted = 0;
    for (const auto& m : r.per_image) {
        r.mae += m.mae;
        if (m.empty_gt) continue;
        r.avg_f += m.f;
        r.ave_p += m.precision;
        r.ave_r += m.recall;
        ++counted;
    }
    r.mae /= static_cast<double>(r.per_image.size());
    if (counted > 0) {
        r.avg_f /= static_cast<double>(counted);
        r.ave_p /= static_cast<double>(counted);
        r.ave_r /= static_cast<double>(counted);
    }
    return r;
}

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace detail

// 256 data rows under a header: threshold,precision,recall,f,tp,fp,tn,fn.
inline void write_curve_csv(const std::filesystem::path& path, const MetricReport& r) {
    auto out = detail::open_out(path);
    out << "threshold,precision,recall,f,tp,fp,tn,fn\n";
    for (std::size_t k = 0; k < static_cast<std::size_t>(kThresholds); ++k) {
        const auto& c = r.curve.counts[k];
        out << detail::fmt(r.curve.thresholds[k]) << ',' << detail::fmt(r.curve.precision[k]) << ','
            << detail::fmt(r.curve.recall[k]) << ','
            << detail::fmt(f_measure(r.curve.precision[k], r.curve.recall[k], r.beta_sq)) << ',' << c.tp << ','
            << c.fp << ',' << c.tn << ',' << c.fn << '\n';
    }
}

inline void write_report_csv(const std::filesystem::path& path, const MetricReport& r) {
    auto out = detail::open_out(path);
    out << "id,mae,adaptive_threshold,precision,recall,f,empty_gt\n";
    for (const auto& m : r.per_image)
        out << m.id << ',' << detail::fmt(m.mae) << ',' << detail::fmt(m.adaptive_threshold) << ','
            << detail::fmt(m.precision) << ',' << detail::fmt(m.recall) << ',' << detail::fmt(m.f) << ','
            << (m.empty_gt ? 1 : 0) << '\n';
    out << "ALL," << detail::fmt(r.mae) << ",," << detail::fmt(r.ave_p) << ',' << detail::fmt(r.ave_r) << ','
        << detail::fmt(r.avg_f) << ",\n";
}

inline nlohmann::json report_json(const MetricReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : r.per_image)
        per.push_back({{"id", m.id},
                       {"mae", m.mae},
                       {"adaptive_threshold", m.adaptive_threshold},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f", m.f},
                       {"empty_gt", m.empty_gt}});
    return {{"max_f", r.max_f}, {"max_f_threshold", r.max_f_threshold}, {"avg_f", r.avg_f}, {"ave_p", r.ave_p},
            {"ave_r", r.ave_r},  {"mae", r.mae},   {"beta_sq", r.beta_sq},  {"excluded", r.curve.excluded},
            {"per_image", per}};
}

inline void write_report_json(const std::filesystem::path& path, const MetricReport& r) {
    auto out = detail::open_out(path);
    out << std::setprecision(17) << report_json(r).dump(2) << '\n';
}

}  // namespace rmmdf
