#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "rmmdf/data.hpp"

using namespace rmmdf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("rmmdf_data_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_pair(const fs::path& root, const std::string& stem, int size, std::uint8_t mask_value) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(10, 20, 30));
    cv::Mat mask(size, size, CV_8UC1, cv::Scalar(0));
    mask(cv::Rect(0, 0, size / 2, size)).setTo(mask_value);
    write_png(root / "images" / (stem + ".png"), img);
    write_png(root / "masks" / (stem + ".png"), mask);
}

}  // namespace

TEST(LoadDataset, PairsByStemAndRejectsOrphans) {
    const auto root = temp_dir("pairs");
    write_pair(root, "b", 16, 255);
    write_pair(root, "a", 16, 200);
    write_pair(root, "c", 8, 127);
    write_png(root / "images" / "orphan.png", cv::Mat(8, 8, CV_8UC3, cv::Scalar(0)));
    const auto d = load_dataset(root);
    ASSERT_EQ(d.samples.size(), 3u);
    EXPECT_EQ(d.samples[0].id, "a");
    EXPECT_EQ(d.samples[2].id, "c");
    ASSERT_EQ(d.rejects.size(), 1u);
    EXPECT_NE(d.rejects[0].find("orphan"), std::string::npos);
    EXPECT_EQ(cv::countNonZero(d.samples[0].mask), 8 * 16);  // 200 counts as foreground
    EXPECT_EQ(cv::countNonZero(d.samples[2].mask), 0);       // 127 does not
    double mx = 0;
    cv::minMaxLoc(d.samples[1].mask, nullptr, &mx);
    EXPECT_EQ(mx, 1.0);
    // BGR scalar (10,20,30) is stored as RGB.
    EXPECT_EQ(d.samples[0].image.at<cv::Vec3b>(0, 0), cv::Vec3b(30, 20, 10));
    fs::remove_all(root);
}

TEST(LoadDataset, EmptyAndMissingRoots) {
    const auto root = temp_dir("empty");
    const auto d = load_dataset(root);
    EXPECT_TRUE(d.samples.empty());
    EXPECT_EQ(d.warnings.size(), 1u);
    EXPECT_THROW(load_dataset(root / "nope"), IoError);
    fs::remove_all(root);
}

TEST(Preprocess, ResizesToTargetAndKeepsMaskBinary) {
    Sample s;
    s.image = cv::Mat(512, 512, CV_8UC3, cv::Scalar(128, 64, 255));
    s.mask = cv::Mat(512, 512, CV_8UC1, cv::Scalar(0));
    cv::circle(s.mask, {256, 256}, 100, cv::Scalar(1), -1);
    const auto p = preprocess<double>(s, 256);
    EXPECT_EQ(p.image.shape(), (Shape{1, 3, 256, 256}));
    EXPECT_EQ(p.mask.shape(), (Shape{1, 1, 256, 256}));
    for (double v : p.mask.vec()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_NEAR(p.image.at(0, 0, 5, 5), 128 / 255.0 - 0.5, 1e-12);
    EXPECT_NEAR(p.image.at(0, 2, 5, 5), 255 / 255.0 - 0.5, 1e-12);
    EXPECT_EQ(p.mask.at(0, 0, 128, 128), 1.0);
    EXPECT_EQ(p.mask.at(0, 0, 0, 0), 0.0);
}

TEST(Preprocess, SameSizeIsExactAndMeansCancel) {
    Sample s;
    s.image = cv::Mat(32, 32, CV_8UC3);
    cv::randu(s.image, 0, 256);
    s.mask = cv::Mat(32, 32, CV_8UC1, cv::Scalar(1));
    const std::array<double, 3> zero{0, 0, 0};
    const auto p = preprocess<double>(s, 32, zero);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c)
                EXPECT_EQ(p.image.at(0, c, y, x), s.image.at<cv::Vec3b>(y, x)[c] / 255.0);
    EXPECT_THROW(preprocess<double>(s, 40), ConfigError);
    EXPECT_THROW(preprocess<double>(s, 0), ConfigError);
}

TEST(Synthetic, DeterministicPerSeedAndIndex) {
    SyntheticSpec spec;
    spec.count = 4;
    const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(cv::norm(a[i].image, b[i].image, cv::NORM_INF), 0.0);
        EXPECT_EQ(cv::norm(a[i].mask, b[i].mask, cv::NORM_INF), 0.0);
        EXPECT_GT(cv::countNonZero(a[i].mask), 0);
    }
    spec.seed = 8;
    const auto c = generate_synthetic(spec);
    EXPECT_GT(cv::norm(a[0].image, c[0].image, cv::NORM_INF), 0.0);
    // Sample i does not depend on how many are generated.
    spec.seed = 7;
    spec.count = 1;
    EXPECT_EQ(cv::norm(generate_synthetic(spec)[0].mask, a[0].mask, cv::NORM_INF), 0.0);
}

TEST(Synthetic, EllipseMaskMatchesConicOracle) {
    SyntheticSpec spec;
    spec.kinds = {ShapeKind::ellipse};
    spec.resolution = 48;
    for (int index = 0; index < 6; ++index) {
        const auto layout = synthetic_layout(spec, index);
        const auto s = render_synthetic(spec, index);
        int mismatches = 0;
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                bool in = false;
                for (const auto& e : layout.shapes)
                    in = in || oracle::in_ellipse(x + 0.5, y + 0.5, e.cx, e.cy, e.a, e.b, e.theta);
                mismatches += in != (s.mask.at<std::uint8_t>(y, x) == 1);
            }
        EXPECT_EQ(mismatches, 0) << "index " << index;
    }
}

TEST(Synthetic, RejectsBadSpecs) {
    SyntheticSpec spec;
    spec.count = 0;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec.count = 2;
    spec.resolution = 8;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Synthetic, SaveAndReloadKeepsMaskBinary) {
    const auto root = temp_dir("roundtrip");
    SyntheticSpec spec;
    spec.count = 3;
    const auto samples = generate_synthetic(spec);
    for (const auto& s : samples) save_sample(root, s);
    const auto d = load_dataset(root);
    ASSERT_EQ(d.samples.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(cv::norm(d.samples[i].mask, samples[i].mask, cv::NORM_INF), 0.0);
        EXPECT_EQ(cv::norm(d.samples[i].image, samples[i].image, cv::NORM_INF), 0.0);
    }
    fs::remove_all(root);
}

TEST(SaliencyPng, RoundsToEightBits) {
    const auto root = temp_dir("png");
    const Tensor<double> m(Shape{1, 1, 1, 3}, std::vector<double>{0.0, 0.5, 1.0});
    save_saliency_png(root / "m.png", m);
    const auto back = read_gray_png<double>(root / "m.png");
    EXPECT_EQ(back[0], 0.0);
    EXPECT_NEAR(back[1], 128 / 255.0, 1e-12);
    EXPECT_EQ(back[2], 1.0);
    EXPECT_THROW(read_gray_png<double>(root / "none.png"), IoError);
    fs::remove_all(root);
}
