#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rmmdf/metrics.hpp"

namespace rmmdf {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Line plot on the unit square with a light grid and a legend.
inline cv::Mat render_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, int width = 640, int height = 480) {
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
    const int left = 70, right = 20, top = 40, bottom = 60;
    const int pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + static_cast<int>(std::lround(std::clamp(x, 0.0, 1.0) * pw)); };
    auto py = [&](double y) { return top + ph - static_cast<int>(std::lround(std::clamp(y, 0.0, 1.0) * ph)); };
    const auto font = cv::FONT_HERSHEY_SIMPLEX;
    for (int i = 0; i <= 10; ++i) {
        const double v = i / 10.0;
        cv::line(img, {px(v), py(0)}, {px(v), py(1)}, cv::Scalar(230, 230, 230));
        cv::line(img, {px(0), py(v)}, {px(1), py(v)}, cv::Scalar(230, 230, 230));
        if (i % 2 == 0) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "%.1f", v);
            cv::putText(img, buf, {px(v) - 12, py(0) + 20}, font, 0.45, cv::Scalar(0, 0, 0));
            cv::putText(img, buf, {left - 40, py(v) + 5}, font, 0.45, cv::Scalar(0, 0, 0));
        }
    }
    cv::rectangle(img, {px(0), py(1)}, {px(1), py(0)}, cv::Scalar(0, 0, 0));
    cv::putText(img, title, {left, 25}, font, 0.6, cv::Scalar(0, 0, 0));
    cv::putText(img, xlabel, {left + pw / 2 - 40, height - 15}, font, 0.5, cv::Scalar(0, 0, 0));
    cv::putText(img, ylabel, {5, top - 10}, font, 0.5, cv::Scalar(0, 0, 0));
    static const cv::Scalar palette[] = {{200, 60, 20}, {30, 30, 200}, {40, 150, 40}, {160, 40, 160}, {20, 140, 200}};
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto colour = palette[s % std::size(palette)];
        const auto& sr = series[s];
        for (std::size_t i = 1; i < sr.x.size() && i < sr.y.size(); ++i)
            cv::line(img, {px(sr.x[i - 1]), py(sr.y[i - 1])}, {px(sr.x[i]), py(sr.y[i])}, colour, 2, cv::LINE_AA);
        const int ly = top + 20 + static_cast<int>(s) * 20;
        cv::line(img, {left + pw - 150, ly - 4}, {left + pw - 125, ly - 4}, colour, 2);
        cv::putText(img, sr.label, {left + pw - 120, ly}, font, 0.45, cv::Scalar(0, 0, 0));
    }
    return img;
}

inline PlotSeries pr_series(const MetricReport& r, const std::string& label) {
    PlotSeries s{label, {}, {}};
    for (std::size_t k = 0; k < static_cast<std::size_t>(kThresholds); ++k) {
        s.x.push_back(r.curve.recall[k]);
        s.y.push_back(r.curve.precision[k]);
    }
    return s;
}

inline PlotSeries f_series(const MetricReport& r, const std::string& label) {
    PlotSeries s{label, {}, {}};
    for (std::size_t k = 0; k < static_cast<std::size_t>(kThresholds); ++k) {
        s.x.push_back(r.curve.thresholds[k]);
        s.y.push_back(f_measure(r.curve.precision[k], r.curve.recall[k], r.beta_sq));
    }
    return s;
}

inline void save_plot(const std::filesystem::path& path, const cv::Mat& img) {
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot '" + path.string() + "'");
}

// pr_curve.png and f_curve.png for one or more labelled reports.
inline void write_curve_plots(const std::filesystem::path& dir,
                              const std::vector<std::pair<std::string, const MetricReport*>>& reports) {
    std::vector<PlotSeries> pr, f;
    for (const auto& [label, r] : reports) {
        pr.push_back(pr_series(*r, label));
        f.push_back(f_series(*r, label));
    }
    save_plot(dir / "pr_curve.png", render_plot(pr, "Precision-Recall", "recall", "precision"));
    save_plot(dir / "f_curve.png", render_plot(f, "F-measure vs threshold", "threshold", "F-measure"));
}

}  // namespace rmmdf
