#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rmmdf/rng.hpp"
#include "rmmdf/tensor.hpp"

namespace rmmdf {

// image: 8-bit RGB (CV_8UC3); mask: CV_8UC1 holding {0, 1}.
struct Sample {
    cv::Mat image;
    cv::Mat mask;
    std::string id;
};

struct DatasetLoad {
    std::vector<Sample> samples;
    std::vector<std::string> rejects;   // "images/x.png: no matching mask"
    std::vector<std::string> warnings;
};

inline cv::Mat binarize_mask(const cv::Mat& gray) {
    cv::Mat out;
    cv::threshold(gray, out, 127, 1, cv::THRESH_BINARY);  // >= 128 -> 1
    return out;
}

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// stem -> path for the files of `dir` with one of `exts`.
inline std::map<std::string, std::filesystem::path> index_dir(const std::filesystem::path& dir,
                                                              const std::vector<std::string>& exts,
                                                              std::vector<std::string>& rejects) {
    std::map<std::string, std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = lower(e.path().extension().string());
        if (std::find(exts.begin(), exts.end(), ext) == exts.end()) continue;
        const auto stem = e.path().stem().string();
        if (!out.emplace(stem, e.path()).second)
            rejects.push_back(e.path().string() + ": duplicate stem '" + stem + "'");
    }
    return out;
}

}  // namespace detail

// root/images/*.{png,jpg,jpeg} paired with root/masks/*.png by stem, sorted by id.
inline DatasetLoad load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw IoError("dataset root '" + root.string() + "' is not a directory");
    DatasetLoad out;
    const auto images = detail::index_dir(root / "images", {".png", ".jpg", ".jpeg"}, out.rejects);
    const auto masks = detail::index_dir(root / "masks", {".png"}, out.rejects);
    for (const auto& [stem, path] : images)
        if (!masks.count(stem)) out.rejects.push_back(path.string() + ": no matching mask");
    for (const auto& [stem, path] : masks)
        if (!images.count(stem)) out.rejects.push_back(path.string() + ": no matching image");
    for (const auto& [stem, path] : images) {
        auto m = masks.find(stem);
        if (m == masks.end()) continue;
        cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
        if (bgr.empty()) throw IoError("cannot read image '" + path.string() + "'");
        cv::Mat gray = cv::imread(m->second.string(), cv::IMREAD_GRAYSCALE);
        if (gray.empty()) throw IoError("cannot read mask '" + m->second.string() + "'");
        if (gray.size() != bgr.size())
            throw IoError("mask '" + m->second.string() + "' does not match its image size");
        Sample s;
        cv::cvtColor(bgr, s.image, cv::COLOR_BGR2RGB);
        s.mask = binarize_mask(gray);
        s.id = stem;
        out.samples.push_back(std::move(s));
    }
    if (out.samples.empty()) out.warnings.push_back("no image/mask pairs found under '" + root.string() + "'");
    return out;
}

inline constexpr std::array<double, 3> kDefaultMeans{0.5, 0.5, 0.5};
inline constexpr std::array<double, 3> kImageNetMeans{0.485, 0.456, 0.406};

template <class T>
struct Preprocessed {
    Tensor<T> image;  // 1x3xRxR
    Tensor<T> mask;   // 1x1xRxR
};

// Bilinear image resize, nearest-neighbour mask resize, then x/255 - mean.
template <class T>
Preprocessed<T> preprocess(const Sample& s, int resolution, const std::array<double, 3>& means = kDefaultMeans) {
    if (resolution < 32 || resolution % 32 != 0)
        throw ConfigError("preprocess: resolution must be a positive multiple of 32, got " + std::to_string(resolution));
    if (s.image.type() != CV_8UC3 || s.mask.type() != CV_8UC1 || s.image.size() != s.mask.size())
        throw ShapeError("preprocess: sample '" + s.id + "' needs an 8-bit RGB image and a same-size 8-bit mask");
    const cv::Size target(resolution, resolution);
    cv::Mat img = s.image;
    cv::Mat mask = s.mask;
    if (img.size() != target) cv::resize(s.image, img, target, 0, 0, cv::INTER_LINEAR);
    if (mask.size() != target) cv::resize(s.mask, mask, target, 0, 0, cv::INTER_NEAREST);
    Preprocessed<T> out{Tensor<T>(Shape{1, 3, resolution, resolution}), Tensor<T>(Shape{1, 1, resolution, resolution})};
    for (int y = 0; y < resolution; ++y) {
        const auto* ip = img.ptr<cv::Vec3b>(y);
        const auto* mp = mask.ptr<std::uint8_t>(y);
        for (int x = 0; x < resolution; ++x) {
            for (int c = 0; c < 3; ++c)
                out.image.at(0, c, y, x) = static_cast<T>(ip[x][c] / 255.0 - means[static_cast<std::size_t>(c)]);
            out.mask.at(0, 0, y, x) = mp[x] ? T(1) : T(0);
        }
    }
    return out;
}

enum class ShapeKind { ellipse, rectangle, blob };
enum class Background { flat, gradient, noise };

// One synthetic foreground shape; membership is tested at pixel centres.
struct ShapeParams {
    ShapeKind kind = ShapeKind::ellipse;
    double cx = 0, cy = 0;
    double a = 1, b = 1;  // semi-axes (ellipse, rectangle), base radius in `a` (blob)
    double theta = 0;     // ellipse rotation
    std::array<double, 3> amp{};    // blob radial harmonics 2, 3, 4
    std::array<double, 3> phase{};

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        switch (kind) {
            case ShapeKind::ellipse: {
                const double u = dx * std::cos(theta) + dy * std::sin(theta);
                const double v = -dx * std::sin(theta) + dy * std::cos(theta);
                return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
            }
            case ShapeKind::rectangle: return std::abs(dx) <= a && std::abs(dy) <= b;
            case ShapeKind::blob: {
                const double ang = std::atan2(dy, dx);
                double r = 1.0;
                for (int k = 0; k < 3; ++k) r += amp[static_cast<std::size_t>(k)] * std::sin((k + 2) * ang + phase[static_cast<std::size_t>(k)]);
                return std::hypot(dx, dy) <= a * r;
            }
        }
        return false;
    }
};

struct SyntheticSpec {
    std::uint64_t seed = 7;
    int count = 8;
    int resolution = 64;
    std::vector<ShapeKind> kinds{ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::blob};
    std::vector<Background> backgrounds{Background::flat, Background::gradient, Background::noise};
};

struct SyntheticLayout {
    Background background = Background::flat;
    std::array<double, 3> bg_color{};
    std::array<double, 3> bg_color2{};  // far end of the gradient
    double gradient_angle = 0;
    double noise_amp = 0;
    std::array<double, 3> fg_color{};
    std::vector<ShapeParams> shapes;  // 1 or 2
};

inline void validate(const SyntheticSpec& spec) {
    if (spec.count < 1) throw ConfigError("synthetic count must be >= 1, got " + std::to_string(spec.count));
    if (spec.resolution < 16)
        throw ConfigError("synthetic resolution must be >= 16, got " + std::to_string(spec.resolution));
    if (spec.kinds.empty() || spec.backgrounds.empty()) throw ConfigError("synthetic spec needs shape and background kinds");
}

// Layout of sample `index`; a pure function of (seed, index, resolution).
inline SyntheticLayout synthetic_layout(const SyntheticSpec& spec, int index) {
    validate(spec);
    Rng rng(derive_seed(spec.seed, "synthetic", static_cast<std::uint64_t>(index)));
    const double r = spec.resolution;
    SyntheticLayout L;
    L.background = spec.backgrounds[rng.below(spec.backgrounds.size())];
    // Dark background with a bright foreground, or the reverse.
    const bool bright_fg = rng.uniform() < 0.5;
    for (std::size_t c = 0; c < 3; ++c) {
        const double bg = rng.uniform(0.05, 0.3);
        const double fg = rng.uniform(0.7, 0.95);
        L.bg_color[c] = bright_fg ? bg : fg;
        L.fg_color[c] = bright_fg ? fg : bg;
        L.bg_color2[c] = std::clamp(L.bg_color[c] + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    }
    L.gradient_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    L.noise_amp = rng.uniform(0.03, 0.08);
    const int n_shapes = rng.uniform() < 0.5 ? 1 : 2;
    for (int k = 0; k < n_shapes; ++k) {
        ShapeParams s;
        s.kind = spec.kinds[rng.below(spec.kinds.size())];
        const double scale = n_shapes == 1 ? 1.0 : 0.7;
        s.a = rng.uniform(0.12, 0.28) * r * scale;
        s.b = rng.uniform(0.12, 0.28) * r * scale;
        const double margin = std::max(s.a, s.b) * 1.2;
        s.cx = rng.uniform(std::min(margin, r / 2), std::max(r - margin, r / 2));
        s.cy = rng.uniform(std::min(margin, r / 2), std::max(r - margin, r / 2));
        s.theta = rng.uniform(0.0, std::numbers::pi);
        for (std::size_t h = 0; h < 3; ++h) {
            s.amp[h] = rng.uniform(0.0, 0.12);
            s.phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        L.shapes.push_back(s);
    }
    return L;
}

// Renders a layout; the mask is the exact union of the shape supports.
inline Sample render_synthetic(const SyntheticSpec& spec, int index) {
    const SyntheticLayout L = synthetic_layout(spec, index);
    const int r = spec.resolution;
    Rng noise(derive_seed(spec.seed, "synthetic_noise", static_cast<std::uint64_t>(index)));
    Sample s;
    s.image = cv::Mat(r, r, CV_8UC3);
    s.mask = cv::Mat(r, r, CV_8UC1);
    s.id = "synth_" + std::to_string(index);
    const double gx = std::cos(L.gradient_angle), gy = std::sin(L.gradient_angle);
    for (int y = 0; y < r; ++y) {
        auto* ip = s.image.ptr<cv::Vec3b>(y);
        auto* mp = s.mask.ptr<std::uint8_t>(y);
        for (int x = 0; x < r; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            bool fg = false;
            for (const auto& sh : L.shapes) fg = fg || sh.contains(px, py);
            mp[x] = fg ? 1 : 0;
            double t = 0.5 + ((px / r - 0.5) * gx + (py / r - 0.5) * gy);
            t = std::clamp(t, 0.0, 1.0);
            const double jitter = L.background == Background::noise ? noise.uniform(-1.0, 1.0) * L.noise_amp : 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                double v = L.bg_color[c];
                if (L.background == Background::gradient) v = L.bg_color[c] * (1 - t) + L.bg_color2[c] * t;
                if (fg) v = L.fg_color[c];
                v = std::clamp(v + jitter, 0.0, 1.0);
                ip[x][static_cast<int>(c)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return s;
}

inline std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) out.push_back(render_synthetic(spec, i));
    return out;
}

inline void write_png(const std::filesystem::path& path, const cv::Mat& m) {
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write '" + path.string() + "'");
}

// 8-bit grayscale PNG, round(255 * saliency). `map` is 1x1xHxW.
template <class T>
void save_saliency_png(const std::filesystem::path& path, const Tensor<T>& map) {
    const Shape s = map.shape();
    if (s.n != 1 || s.c != 1) throw ShapeError("save_saliency_png: expected 1x1xHxW, got " + s.str());
    cv::Mat out(s.h, s.w, CV_8UC1);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            const double v = std::clamp(static_cast<double>(map.at(0, 0, y, x)), 0.0, 1.0);
            out.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(255.0 * v));
        }
    write_png(path, out);
}

// Writes root/images/<id>.png and root/masks/<id>.png (mask as 0/255).
inline void save_sample(const std::filesystem::path& root, const Sample& s) {
    std::filesystem::create_directories(root / "images");
    std::filesystem::create_directories(root / "masks");
    cv::Mat bgr;
    cv::cvtColor(s.image, bgr, cv::COLOR_RGB2BGR);
    write_png(root / "images" / (s.id + ".png"), bgr);
    write_png(root / "masks" / (s.id + ".png"), s.mask * 255);
}

// Grayscale PNG as a [0, 1] tensor (1x1xHxW).
template <class T>
Tensor<T> read_gray_png(const std::filesystem::path& path) {
    cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (g.empty()) throw IoError("cannot read '" + path.string() + "'");
    Tensor<T> out(Shape{1, 1, g.rows, g.cols});
    for (int y = 0; y < g.rows; ++y)
        for (int x = 0; x < g.cols; ++x) out.at(0, 0, y, x) = static_cast<T>(g.at<std::uint8_t>(y, x) / 255.0);
    return out;
}

}  // namespace rmmdf
