#include <gtest/gtest.h>

#include <random>

#include "rmmdf/backbones.hpp"

using namespace rmmdf;

namespace {

NetworkConfig small(double wm, int res = 32) {
    NetworkConfig c;
    c.resolution = res;
    c.width_multiplier = wm;
    c.depth_multiplier = 1.0 / 3.0;
    return c;
}

Var<double> random_image(int n, int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> t(Shape{n, 3, size, size});
    for (auto& v : t.vec()) v = rng.uniform(-0.5, 0.5);
    return Var<double>::constant(t);
}

void zero_all(ParameterStore<double>& store) {
    for (const auto& [name, _] : store.params()) store.param(name).mutable_value().fill(0.0);
}

}  // namespace

TEST(Vgg, ChannelPatternAtMinimumWidth) {
    auto cfg = small(1.0 / 64.0);
    ParameterStore<double> store(1);
    VggStream<double> vgg(store, cfg);
    const auto x = vgg.forward(random_image(1, 32, 2));
    const int channels[] = {1, 2, 4, 8, 8};
    for (int i = 1; i <= kLevels; ++i) {
        EXPECT_EQ(x.channels(i), channels[i - 1]);
        EXPECT_EQ(x.size(i), (Size2{32 >> i, 32 >> i}));
    }
}

TEST(Vgg, LayerCountsFollowSixteenLayerLayout) {
    ParameterStore<double> store(1);
    VggStream<double> vgg(store, small(1.0 / 16.0));
    const int layers[] = {2, 2, 3, 3, 3};
    for (int i = 0; i < kLevels; ++i) EXPECT_EQ(static_cast<int>(vgg.blocks()[static_cast<std::size_t>(i)].size()), layers[i]);
    EXPECT_TRUE(store.params().count("vgg.block5.conv3.weight"));
}

TEST(Vgg, ZeroImageGivesZeroPyramid) {
    ParameterStore<double> store(3);
    VggStream<double> vgg(store, small(1.0 / 16.0));
    const auto x = vgg.forward(Var<double>::constant(Tensor<double>(Shape{1, 3, 32, 32})));
    for (int i = 1; i <= kLevels; ++i)
        for (double v : x[i].value().vec()) EXPECT_EQ(v, 0.0);
}

TEST(Vgg, RejectsBadInputs) {
    ParameterStore<double> store(3);
    auto cfg = small(1.0 / 16.0);
    cfg.max_resolution = 64;
    VggStream<double> vgg(store, cfg);
    EXPECT_THROW(vgg.forward(random_image(1, 48, 1)), ShapeError);
    EXPECT_THROW(vgg.forward(random_image(1, 96, 1)), ShapeError);
    EXPECT_THROW(vgg.forward(Var<double>::constant(Tensor<double>(Shape{1, 1, 32, 32}))), ShapeError);
    EXPECT_THROW(Tensor<double>(Shape{0, 3, 32, 32}), ShapeError);
}

TEST(ResNet, LevelSizesMatchVgg) {
    for (double wm : {1.0 / 16.0, 1.0 / 8.0}) {
        ParameterStore<double> store(4);
        const auto cfg = small(wm, 64);
        VggStream<double> vgg(store, cfg);
        ResNetStream<double> resnet(store, cfg);
        const auto img = random_image(2, 64, 5);
        const auto x = vgg.forward(img);
        const auto f = resnet.forward(img);
        for (int i = 1; i <= kLevels; ++i) {
            EXPECT_EQ(x.size(i), f.size(i)) << "level " << i;
            EXPECT_EQ(f.channels(i), cfg.resnet_channels(i));
        }
        EXPECT_EQ(f.size(5), (Size2{2, 2}));
    }
}

TEST(ResNet, BottleneckOnlyAtWideConfigs) {
    EXPECT_FALSE(small(1.0 / 16.0).resnet_bottleneck());
    EXPECT_TRUE(small(1.0).resnet_bottleneck());
    NetworkConfig full;
    full.width_multiplier = 1.0;
    EXPECT_EQ(full.resnet_channels(5), 2048);
    EXPECT_EQ(full.resnet_channels(2), 256);
    full.depth_multiplier = 1.0;
    EXPECT_EQ(full.resnet_blocks(2), 6);
}

TEST(ResNet, ZeroBranchUnitIsIdentity) {
    ParameterStore<double> store(6);
    for (bool bottleneck : {false, true}) {
        ResidualUnit<double> unit(store, bottleneck ? "b" : "p", 4, 2, 4, 1, bottleneck);
        auto last = unit.branch().back();  // shares the parameter nodes
        last.weight.mutable_value().fill(0.0);
        last.bias.mutable_value().fill(0.0);
        Rng rng(2);
        Tensor<double> x(Shape{1, 4, 4, 4});
        for (auto& v : x.vec()) v = rng.uniform(0.0, 1.0);  // post-ReLU input
        const auto y = unit(Var<double>::constant(x)).value();
        EXPECT_EQ(y.vec(), x.vec());
    }
}

TEST(Decoder, ZeroWeightsGiveHalf) {
    ParameterStore<double> store(7);
    const auto cfg = small(1.0 / 16.0);
    ResNetStream<double> resnet(store, cfg);
    ResNetDecoder<double> dec(store, cfg);
    zero_all(store);
    const auto m = dec.decode(resnet.forward(random_image(1, 32, 1)));
    EXPECT_EQ(m.resolution(), (Size2{32, 32}));
    for (double v : m.value().vec()) EXPECT_EQ(v, 0.5);
}

TEST(Decoder, SingleCellTopLevelGivesThirtyTwo) {
    ParameterStore<double> store(8);
    const auto cfg = small(1.0 / 16.0);
    ResNetDecoder<double> dec(store, cfg);
    FeaturePyramid<double> f;
    for (int i = 1; i <= kLevels; ++i)
        f[i] = Var<double>::constant(Tensor<double>(Shape{1, cfg.resnet_channels(i), 32 >> i, 32 >> i}, 0.1));
    const auto m = dec.decode(f);
    EXPECT_EQ(m.resolution(), (Size2{32, 32}));
    EXPECT_EQ(m.var().shape().c, 1);
}

TEST(Decoder, RejectsOverflowAndMisalignment) {
    ParameterStore<double> store(8);
    auto cfg = small(1.0 / 16.0);
    cfg.max_resolution = 32;
    ResNetDecoder<double> dec(store, cfg);
    FeaturePyramid<double> f;
    for (int i = 1; i <= kLevels; ++i)
        f[i] = Var<double>::constant(Tensor<double>(Shape{1, cfg.resnet_channels(i), 64 >> i, 64 >> i}));
    EXPECT_THROW(dec.decode(f), ShapeError);
    for (int i = 1; i <= kLevels; ++i)
        f[i] = Var<double>::constant(Tensor<double>(Shape{1, cfg.resnet_channels(i), 32 >> i, 32 >> i}));
    f[3] = Var<double>::constant(Tensor<double>(Shape{1, cfg.resnet_channels(3), 3, 3}));
    EXPECT_THROW(dec.decode(f), ShapeError);
}

TEST(SaliencyMapType, EnforcesRangeAndChannels) {
    EXPECT_THROW(SaliencyMap<double>(Var<double>::constant(Tensor<double>(Shape{1, 2, 2, 2}, 0.5))), ShapeError);
    EXPECT_THROW(SaliencyMap<double>(Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.5))), NumericalError);
    EXPECT_NO_THROW(SaliencyMap<double>(Var<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0))));
}

TEST(Backbones, ForwardIsDeterministicAndFinite) {
    ParameterStore<double> store(9);
    const auto cfg = small(1.0 / 16.0);
    VggStream<double> vgg(store, cfg);
    ResNetStream<double> resnet(store, cfg);
    const auto img = random_image(1, 32, 3);
    const auto a = resnet.forward(img), b = resnet.forward(img);
    const auto xa = vgg.forward(img);
    for (int i = 1; i <= kLevels; ++i) {
        EXPECT_EQ(a[i].value().vec(), b[i].value().vec());
        EXPECT_TRUE(a[i].value().all_finite());
        EXPECT_TRUE(xa[i].value().all_finite());
    }
}

TEST(ConvBlock, SpecValidation) {
    ConvBlockSpec s{3, 8, 2, 1, 1, true, true};
    EXPECT_THROW(s.validate(), ConfigError);
    s.kernel = 3;
    s.stride = 3;
    EXPECT_THROW(s.validate(), ConfigError);
    s.stride = 2;
    EXPECT_NO_THROW(s.validate());
}
