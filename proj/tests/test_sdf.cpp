#include <gtest/gtest.h>

#include <cmath>

#include "rmmdf/sdf.hpp"

using namespace rmmdf;

namespace {

NetworkConfig cfg_at(int res, double wm = 1.0 / 16.0) {
    NetworkConfig c;
    c.resolution = res;
    c.width_multiplier = wm;
    c.sdf_channels = 4;
    return c;
}

std::vector<AggregatedMap<double>> constant_aggregates(int m_size, int channels, const double* values) {
    std::vector<AggregatedMap<double>> out;
    for (int i = 1; i <= kLevels; ++i) {
        AggregatedMap<double> a;
        a.source_level = i;
        a.stage = 3;
        const int s = std::max(1, m_size >> i);
        a.data = Var<double>::constant(Tensor<double>(Shape{1, channels, s, s}, values ? values[i - 1] : 0.3));
        out.push_back(a);
    }
    return out;
}

SaliencyMap<double> constant_map(int size, double v) {
    return SaliencyMap<double>(Var<double>::constant(Tensor<double>(Shape{1, 1, size, size}, v)));
}

void zero_params(ParameterStore<double>& store, const std::string& prefix) {
    for (const auto& [name, _] : store.params())
        if (name.rfind(prefix, 0) == 0) store.param(name).mutable_value().fill(0.0);
}

}  // namespace

TEST(Fuse, ZeroConvsReturnM) {
    ParameterStore<double> store(1);
    const auto cfg = cfg_at(64);
    SelectiveFusion<double> sdf(store, cfg);
    zero_params(store, "sdf.fuse");
    Rng rng(3);
    Tensor<double> m(Shape{1, 1, 64, 64});
    for (auto& v : m.vec()) v = rng.uniform();
    const auto s = sdf.fuse(constant_aggregates(64, cfg.agg_channels(), nullptr), SaliencyMap<double>(Var<double>::constant(m)));
    EXPECT_EQ(s.data.value().vec(), m.vec());
    EXPECT_EQ(s.constituents.back(), "M");
    EXPECT_EQ(s.constituents.size(), 6u);
}

TEST(Fuse, ConstantInputsClosedForm) {
    ParameterStore<double> store(2);
    const auto cfg = cfg_at(64);
    SelectiveFusion<double> sdf(store, cfg);
    for (int i = 1; i <= kLevels; ++i) {
        auto conv = sdf.fuse_conv(i);
        auto& w = conv.weight.mutable_value();
        w.fill(0.0);
        w.at(0, 0, 1, 1) = 1.0;  // identity on the first channel
        conv.bias.mutable_value().fill(0.0);
    }
    const double c[] = {0.1, 0.2, -0.3, 0.4, 0.05};
    const auto s = sdf.fuse(constant_aggregates(64, cfg.agg_channels(), c), constant_map(64, 0.25));
    for (double v : s.data.value().vec()) EXPECT_NEAR(v, 0.25 + 0.1 + 0.2 - 0.3 + 0.4 + 0.05, 1e-12);
}

TEST(Fuse, ResizesEverythingToM) {
    ParameterStore<double> store(3);
    const auto cfg = cfg_at(256);
    SelectiveFusion<double> sdf(store, cfg);
    const auto aggs = constant_aggregates(256, cfg.agg_channels(), nullptr);
    EXPECT_EQ(aggs[0].size(), (Size2{128, 128}));
    EXPECT_EQ(aggs[4].size(), (Size2{8, 8}));
    const auto s = sdf.fuse(aggs, constant_map(256, 0.5));
    EXPECT_EQ(spatial(s.data.shape()), (Size2{256, 256}));
}

TEST(Fuse, RejectsMissingLevelAndOversize) {
    ParameterStore<double> store(4);
    auto cfg = cfg_at(64);
    cfg.max_resolution = 64;
    SelectiveFusion<double> sdf(store, cfg);
    auto aggs = constant_aggregates(64, cfg.agg_channels(), nullptr);
    auto missing = aggs;
    missing.pop_back();
    EXPECT_THROW(sdf.fuse(missing, constant_map(64, 0.5)), ConfigError);
    auto dup = aggs;
    dup[4].source_level = 4;
    EXPECT_THROW(sdf.fuse(dup, constant_map(64, 0.5)), ConfigError);
    aggs[0].data = Var<double>::constant(Tensor<double>(Shape{1, cfg.agg_channels(), 128, 128}));
    EXPECT_THROW(sdf.fuse(aggs, constant_map(64, 0.5)), ShapeError);
}

TEST(SdfForward, TraceAtSixtyFour) {
    ParameterStore<double> store(5);
    const auto cfg = cfg_at(64);
    SelectiveFusion<double> sdf(store, cfg);
    FusedFeature<double> s{Var<double>::constant(Tensor<double>(Shape{1, 1, 64, 64}, 0.3)), {}};
    const auto out = sdf.forward(s, false);
    const char* names[] = {"Conv1", "Conv2", "Conv3", "Conv4", "DeC.4", "DeC.3", "DeC.2", "DeC.1", "ConvC."};
    const int sizes[] = {64, 32, 16, 8, 8, 16, 32, 64, 64};
    ASSERT_EQ(out.trace.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(out.trace[i].name, names[i]);
        EXPECT_EQ(out.trace[i].shape.h, sizes[i]);
        EXPECT_EQ(out.trace[i].shape.c, i == 8 ? 2 : 4);
    }
    EXPECT_EQ(out.logits.shape(), (Shape{1, 2, 64, 64}));
}

TEST(SdfForward, EncoderHasThirteenConvs) {
    ParameterStore<double> store(5);
    SelectiveFusion<double> sdf(store, cfg_at(64));
    int convs = 0;
    for (const auto& [name, _] : store.params())
        if (name.rfind("sdf.enc", 0) == 0 && name.find(".weight") != std::string::npos) ++convs;
    EXPECT_EQ(convs, 13);
}

TEST(SdfForward, RejectsBadInput) {
    ParameterStore<double> store(6);
    SelectiveFusion<double> sdf(store, cfg_at(64));
    EXPECT_THROW(sdf.forward({Var<double>::constant(Tensor<double>(Shape{1, 1, 40, 40})), {}}, false), ShapeError);
    EXPECT_THROW(sdf.forward({Var<double>::constant(Tensor<double>(Shape{1, 2, 64, 64})), {}}, false), ShapeError);
}

TEST(SdfForward, ZeroWeightsGiveHalf) {
    ParameterStore<double> store(7);
    SelectiveFusion<double> sdf(store, cfg_at(32));
    zero_params(store, "sdf.enc");
    zero_params(store, "sdf.dec");
    zero_params(store, "sdf.classifier");
    FusedFeature<double> s{Var<double>::constant(Tensor<double>(Shape{1, 1, 32, 32}, 0.8)), {}};
    const auto p = saliency_from_logits(sdf.forward(s, false).logits);
    for (double v : p.value().vec()) EXPECT_EQ(v, 0.5);
}

TEST(SaliencyFromLogits, ComplementSumsToOneAndRejectsChannels) {
    Rng rng(1);
    Tensor<double> logits(Shape{1, 2, 4, 4});
    for (auto& v : logits.vec()) v = rng.uniform(-15.0, 15.0);
    const auto p = saliency_from_logits(Var<double>::constant(logits)).value();
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const double fg = p.at(0, 0, y, x);
            const double bg = 1 / (1 + std::exp(logits.at(0, 1, y, x) - logits.at(0, 0, y, x)));
            EXPECT_GT(fg, 0.0);
            EXPECT_LT(fg, 1.0);
            EXPECT_LT(std::fabs(fg + bg - 1.0), 1e-9);
        }
    EXPECT_THROW(saliency_from_logits(Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}))), ShapeError);
    EXPECT_THROW(saliency_from_logits(Var<double>::constant(Tensor<double>(Shape{1, 3, 2, 2}))), ShapeError);
}

// No activation in the decoder: decode(a*x) = a*decode(x) + (1-a)*decode(0).
TEST(SdfDecoder, IsAffine) {
    ParameterStore<double> store(8);
    SelectiveFusion<double> sdf(store, cfg_at(64));
    Rng rng(2);
    Tensor<double> x(Shape{1, 4, 4, 4});
    for (auto& v : x.vec()) v = rng.uniform(-1.0, 1.0);
    const double alpha = 2.5;
    Tensor<double> ax = x;
    for (auto& v : ax.vec()) v *= alpha;
    const auto d0 = sdf.decode(Var<double>::constant(Tensor<double>(Shape{1, 4, 4, 4}))).value();
    const auto d1 = sdf.decode(Var<double>::constant(x)).value();
    const auto da = sdf.decode(Var<double>::constant(ax)).value();
    for (std::size_t i = 0; i < d1.size(); ++i) EXPECT_NEAR(da[i], alpha * d1[i] + (1 - alpha) * d0[i], 1e-9);
}
