#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "rmmdf/cli.hpp"

using namespace rmmdf;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "rmmdf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    testing::internal::CaptureStderr();
    testing::internal::CaptureStdout();
    const int code = cli::run(static_cast<int>(argv.size()), argv.data());
    testing::internal::GetCapturedStdout();
    const std::string e = testing::internal::GetCapturedStderr();
    if (err) *err = e;
    return code;
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) out.insert(fs::relative(e.path(), dir).string());
    return out;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

class Cli : public testing::Test {
protected:
    void SetUp() override {
        root = fs::temp_directory_path() /
               ("rmmdf_cli_" + std::string(testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
                std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
        old_cwd = fs::current_path();
        fs::current_path(root);
    }
    void TearDown() override {
        fs::current_path(old_cwd);
        fs::remove_all(root);
    }

    fs::path write_config(int iterations, double lr = 1e-2) {
        nlohmann::json j{{"preset", "micro"},
                         {"network", {{"resolution", 32}, {"width_multiplier", 1.0 / 32.0}, {"sdf_channels", 2}}},
                         {"optimizer", {{"iterations", iterations}, {"lr", lr}, {"batch_size", 2}}}};
        const auto p = root / ("cfg_" + std::to_string(iterations) + ".json");
        std::ofstream(p) << j.dump(2);
        return p;
    }

    fs::path root, old_cwd;
};

}  // namespace

TEST_F(Cli, SynthTrainPredictWithStageDump) {
    ASSERT_EQ(run_cli({"synth", "--out", "data", "--count", "2", "--resolution", "40"}), 0);
    EXPECT_EQ(listing(root / "data" / "images").size(), 2u);
    const auto cfg = write_config(3);
    ASSERT_EQ(run_cli({"train", "--out", "run", "--config", cfg.string(), "--data", "data", "--stages", "3"}), 0);
    for (const char* f : {"manifest.json", "config.json", "train_log.csv", "checkpoint.cbor", "report.json",
                          "report.csv", "pr_curve.csv", "pr_curve.png", "f_curve.png"})
        EXPECT_TRUE(fs::exists(root / "run" / f)) << f;
    EXPECT_EQ(read_json(root / "run" / "manifest.json").at("config").at("network").at("stages"), 3);

    ASSERT_EQ(run_cli({"predict", "--out", "pred", "--checkpoint", "run/checkpoint.cbor", "--data", "data",
                       "--dump-stages"}),
              0);
    const auto files = listing(root / "pred");
    int pngs = 0;
    for (const auto& f : files) pngs += fs::path(f).extension() == ".png";
    EXPECT_EQ(pngs, 2 * 4);  // final map plus M1..M3 per input
    const auto m3 = read_gray_png<double>(root / "pred" / "synth_0_M3.png");
    EXPECT_EQ(m3.shape(), (Shape{1, 1, 40, 40}));  // back at the source size
    for (double v : m3.vec()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }

    ASSERT_EQ(run_cli({"predict", "--out", "pred1", "--checkpoint", "run/checkpoint.cbor", "--data", "data"}), 0);
    int plain = 0;
    for (const auto& f : listing(root / "pred1")) plain += fs::path(f).extension() == ".png";
    EXPECT_EQ(plain, 2);
}

TEST_F(Cli, EvalOfGroundTruthIsPerfect) {
    ASSERT_EQ(run_cli({"synth", "--out", "data", "--count", "3", "--resolution", "24"}), 0);
    fs::create_directories(root / "gt255");
    for (const auto& e : fs::directory_iterator(root / "data" / "masks")) {
        cv::Mat m = cv::imread(e.path().string(), cv::IMREAD_GRAYSCALE);
        write_png(root / "gt255" / e.path().filename(), m);
    }
    ASSERT_EQ(run_cli({"eval", "--out", "ev", "--pred", "gt255", "--gt", "data/masks"}), 0);
    const auto j = read_json(root / "ev" / "report.json");
    EXPECT_DOUBLE_EQ(j.at("max_f").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(j.at("mae").get<double>(), 0.0);
    std::ifstream csv(root / "ev" / "pr_curve.csv");
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 256);
}

TEST_F(Cli, EvalMatchesOracleOnHandMadeMaps) {
    fs::create_directories(root / "p");
    fs::create_directories(root / "g");
    std::vector<Tensor<double>> preds, gts;
    for (int i = 0; i < 3; ++i) {
        cv::Mat p(4, 4, CV_8UC1), g(4, 4, CV_8UC1, cv::Scalar(0));
        Tensor<double> pt(Shape{1, 1, 4, 4}), gt(Shape{1, 1, 4, 4});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const int v = (37 * (y * 4 + x) + 51 * i) % 256;
                p.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(v);
                pt.at(0, 0, y, x) = v / 255.0;
                const bool fg = (x + y + i) % 3 == 0;
                g.at<std::uint8_t>(y, x) = fg ? 255 : 0;
                gt.at(0, 0, y, x) = fg ? 1.0 : 0.0;
            }
        write_png(root / "p" / ("im" + std::to_string(i) + ".png"), p);
        write_png(root / "g" / ("im" + std::to_string(i) + ".png"), g);
        preds.push_back(pt);
        gts.push_back(gt);
    }
    ASSERT_EQ(run_cli({"eval", "--out", "ev", "--pred", "p", "--gt", "g"}), 0);
    const auto j = read_json(root / "ev" / "report.json");
    const auto want = oracle::summarize(preds, gts);
    EXPECT_NEAR(j.at("max_f").get<double>(), want.max_f, 1e-9);
    EXPECT_NEAR(j.at("avg_f").get<double>(), want.avg_f, 1e-9);
    EXPECT_NEAR(j.at("mae").get<double>(), want.mae, 1e-12);
}

TEST_F(Cli, MissingConfigKeyIsUsageError) {
    std::ofstream("bad.json") << R"({"network": {"resolution": 32, "width_multiplier": 0.03125},
                                    "optimizer": {"lr": 0.01, "batch_size": 2, "iterations": 2}})";
    std::string err;
    EXPECT_EQ(run_cli({"train", "--out", "run", "--config", "bad.json", "--synthetic", "2"}, &err), 1);
    EXPECT_NE(err.find("network.stages"), std::string::npos) << err;
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({}), 1);
    EXPECT_EQ(run_cli({"train", "--out", "run"}), 1);  // no data source
    EXPECT_EQ(run_cli({"train", "--out", "run", "--data", "x", "--synthetic", "2"}), 1);
    EXPECT_EQ(run_cli({"train", "--out", "run", "--synthetic", "2", "--resolution", "48"}), 1);
}

TEST_F(Cli, CheckpointMismatchNamesParameter) {
    const auto cfg = write_config(1);
    ASSERT_EQ(run_cli({"train", "--out", "run", "--config", cfg.string(), "--synthetic", "2"}), 0);
    std::string err;
    EXPECT_EQ(run_cli({"predict", "--out", "pred", "--checkpoint", "run/checkpoint.cbor", "--synthetic", "1",
                       "--width-mult", "0.0625"},
                      &err),
              1);
    EXPECT_NE(err.find("checkpoint mismatch at parameter '"), std::string::npos) << err;
}

TEST_F(Cli, DivergenceExitsWithNumericalCode) {
    const auto cfg = write_config(5, 1e12);
    std::string err;
    EXPECT_EQ(run_cli({"train", "--out", "run", "--config", cfg.string(), "--synthetic", "2"}, &err), 2);
    EXPECT_NE(err.find("first non-finite gradient"), std::string::npos) << err;
    EXPECT_TRUE(fs::exists(root / "run" / "manifest.json"));
}

TEST_F(Cli, AblateWritesFiveRowsAndStaysInOutputDir) {
    const auto cfg = write_config(2);
    const auto before = listing(root);
    ASSERT_EQ(run_cli({"ablate", "--out", "abl", "--config", cfg.string(), "--synthetic", "2", "--stages", "2"}), 0);
    std::ifstream csv(root / "abl" / "ablation.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "variant,ave_p,ave_r,avg_f,max_f,mae");
    std::vector<std::string> names;
    while (std::getline(csv, line)) names.push_back(line.substr(0, line.find(',')));
    EXPECT_EQ(names, (std::vector<std::string>{"vgg_only", "resnet_only", "drm", "drm_dam", "full"}));
    for (const auto& n : names) EXPECT_TRUE(fs::exists(root / "abl" / n / "report.json")) << n;
    for (const auto& f : listing(root))
        if (!before.count(f)) EXPECT_EQ(f.rfind("abl", 0), 0u) << f;
}
