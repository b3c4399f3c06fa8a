#include <random>

#include <gtest/gtest.h>

#include "coneboot/segnet/adam.hpp"
#include "coneboot/segnet/train.hpp"
#include "coneboot/segnet/weights_io.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace coneboot;
using namespace coneboot::segnet;

namespace {

NetConfig tiny(int size, int depth, int channels, int convs) { return {size, depth, channels, convs}; }

Tensor3<double> random_input(int size, std::mt19937_64& rng) {
    Tensor3<double> t(1, size, size);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : t.data) v = u(rng);
    return t;
}

} // namespace

TEST(UNet, LayoutNamesAndChannels) {
    const auto specs = conv_layout(tiny(16, 2, 4, 2));
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(s.name);
    const std::vector<std::string> expected{"enc0.conv0", "enc0.conv1", "enc1.conv0", "enc1.conv1",
                                            "bottleneck.conv0", "bottleneck.conv1", "dec1.up", "dec1.conv0",
                                            "dec1.conv1", "dec0.up", "dec0.conv0", "dec0.conv1", "head"};
    EXPECT_EQ(names, expected);
    EXPECT_EQ(specs[4].shape.in_channels, 8);
    EXPECT_EQ(specs[4].shape.out_channels, 16);
    EXPECT_EQ(specs[7].shape.in_channels, 16); // [skip; up] at level 1
    EXPECT_EQ(specs.back().shape.kernel, 1);
    EXPECT_FALSE(specs.back().relu);
}

TEST(UNet, RejectsIndivisibleInput) {
    EXPECT_THROW(conv_layout(tiny(20, 3, 2, 1)), Error);
}

TEST(UNet, ZeroWeightsGiveOneHalf) {
    const NetConfig cfg = tiny(32, 2, 2, 1);
    const UNet<double> net(cfg);
    const auto w = zero_weights<double>(cfg);
    std::mt19937_64 rng(1);
    const auto p = net.forward(w, random_input(32, rng));
    for (double v : p.data) EXPECT_EQ(v, 0.5);
    Frame f(32, 32, 0.3, PixelScale::unit);
    EXPECT_EQ(predict_mask(net, w, f).count(), 32u * 32u); // 0.5 rounds to foreground
}

TEST(UNet, BottleneckShape) {
    const NetConfig cfg = tiny(64, 3, 2, 1);
    const UNet<double> net(cfg);
    ForwardCache<double> cache;
    std::mt19937_64 rng(2);
    const auto out = net.forward(init_weights<double>(cfg, 3), random_input(64, rng), cache);
    EXPECT_EQ(out.height, 64);
    EXPECT_EQ(out.width, 64);
    const auto& bottleneck = cache.convs[3].output;
    EXPECT_EQ(bottleneck.height, 8);
    EXPECT_EQ(bottleneck.channels, 16);
}

TEST(UNet, RejectsWrongInputSize) {
    const NetConfig cfg = tiny(16, 1, 2, 1);
    const UNet<double> net(cfg);
    std::mt19937_64 rng(3);
    EXPECT_THROW(net.forward(zero_weights<double>(cfg), random_input(32, rng)), Error);
}

TEST(UNet, ForwardMatchesNestedLoopOracle) {
    std::mt19937_64 rng(4);
    for (const NetConfig& cfg : {tiny(8, 1, 2, 1), tiny(16, 2, 3, 2), tiny(32, 3, 2, 1)}) {
        const auto w = init_weights<double>(cfg, 11);
        const auto in = random_input(cfg.input_size, rng);
        const auto got = UNet<double>(cfg).forward(w, in);
        const auto want = oracle::unet_forward(w, {in.data.begin(), in.data.end()}, cfg.input_size);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.data[i], want[i], 1e-12);
    }
}

TEST(UNet, FloatTracksDouble) {
    const NetConfig cfg = tiny(16, 2, 2, 1);
    const auto wd = init_weights<double>(cfg, 5);
    const auto wf = cast_weights<double, float>(wd);
    std::mt19937_64 rng(5);
    const auto in = random_input(16, rng);
    Tensor3<float> inf(1, 16, 16);
    for (std::size_t i = 0; i < in.size(); ++i) inf.data[i] = static_cast<float>(in.data[i]);
    const auto pd = UNet<double>(cfg).forward(wd, in);
    const auto pf = UNet<float>(cfg).forward(wf, inf);
    for (std::size_t i = 0; i < pd.size(); ++i) EXPECT_NEAR(pf.data[i], pd.data[i], 1e-5);
}

TEST(Layers, MaxPoolRoutesGradientToWinner) {
    Tensor3<double> in(1, 2, 4);
    in.data = {1, 5, 7, 7, 3, 2, 7, 0};
    Tensor3<double> out;
    std::vector<std::size_t> argmax;
    maxpool_forward(in, out, argmax);
    EXPECT_EQ(out.data, (AlignedVector<double>{5, 7}));
    EXPECT_EQ(argmax, (std::vector<std::size_t>{1, 2})); // first 7 wins the tie
    Tensor3<double> g(1, 1, 2);
    g.data = {0.5, -2.0};
    Tensor3<double> gin;
    maxpool_backward(g, argmax, 2, 4, gin);
    EXPECT_EQ(gin.data, (AlignedVector<double>{0, 0.5, -2.0, 0, 0, 0, 0, 0}));
}

TEST(Layers, SigmoidStaysOpen) {
    EXPECT_GT(sigmoid(-1000.0), 0.0);
    EXPECT_LT(sigmoid(1000.0), 1.0);
    EXPECT_EQ(sigmoid(0.0), 0.5);
}

TEST(Loss, MseValues) {
    Tensor3<double> a(1, 4, 4, 0.5);
    Tensor3<double> b(1, 4, 4, 1.0);
    EXPECT_EQ(mse_loss(a, a), 0.0);
    EXPECT_EQ(mse_loss(a, b), 0.25);
    std::mt19937_64 rng(6);
    const auto p = random_input(8, rng);
    const auto t = random_input(8, rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::pow(p.data[i] - t.data[i], 2);
    EXPECT_NEAR(mse_loss(p, t), sum / 64.0, 1e-15);
}

TEST(Loss, ExactPredictionGivesZeroGradient) {
    std::mt19937_64 rng(7);
    const auto p = random_input(8, rng);
    for (double v : mse_gradient(p, p, 3).data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesCentralDifferences) {
    for (const NetConfig& cfg : {tiny(8, 1, 2, 1), tiny(8, 2, 2, 2), tiny(16, 1, 3, 2)}) {
        const auto r = coneboot::testing::gradient_check(cfg, 21);
        EXPECT_GT(r.gradient_norm, 0.0);
        EXPECT_LT(r.worst_tensor_error, 1e-4) << "depth " << cfg.depth;
    }
}

TEST(Adam, ZeroGradientLeavesWeights) {
    const NetConfig cfg = tiny(8, 1, 2, 1);
    auto w = init_weights<double>(cfg, 8);
    const auto before = w;
    auto state = AdamState<double>::like(w);
    adam_step(w, Gradients<double>::like(w), state, AdamConfig{});
    EXPECT_EQ(w, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    const NetConfig cfg = tiny(8, 1, 1, 1);
    auto w = zero_weights<double>(cfg);
    auto g = Gradients<double>::like(w);
    for (auto& v : g.values) std::fill(v.begin(), v.end(), 1.0);
    auto state = AdamState<double>::like(w);
    adam_step(w, g, state, AdamConfig{1e-3, 0.9, 0.999, 1e-8});
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    for (const auto& p : w.params) {
        for (double v : p.values) EXPECT_NEAR(v, -1e-3 / (1.0 + 1e-8), 1e-18);
    }
}

TEST(Adam, Deterministic) {
    const NetConfig cfg = tiny(8, 1, 2, 1);
    auto run = [&] {
        auto w = init_weights<double>(cfg, 9);
        auto state = AdamState<double>::like(w);
        std::mt19937_64 rng(10);
        std::normal_distribution<double> d;
        for (int s = 0; s < 5; ++s) {
            auto g = Gradients<double>::like(w);
            for (auto& v : g.values) {
                for (double& x : v) x = d(rng);
            }
            adam_step(w, g, state, AdamConfig{});
        }
        return w;
    };
    EXPECT_EQ(run(), run());
}

TEST(Train, ZeroEpochsReturnsInitialWeights) {
    const NetConfig cfg = tiny(8, 1, 2, 1);
    std::vector<TrainPair> pairs{{Frame(8, 8, 0.5, PixelScale::unit), BinaryMask(8, 8)}};
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 12;
    const auto r = train<double>(cfg, pairs, {}, tc);
    EXPECT_EQ(r.weights, init_weights<double>(cfg, 12));
    EXPECT_TRUE(r.curve.empty());
}

TEST(Train, LearnsBrightRegion) {
    // Foreground is the bright disc; a small net picks it up quickly.
    const NetConfig cfg = tiny(16, 1, 4, 1);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TrainPair> pairs;
    std::vector<EvalItem> test;
    for (int i = 0; i < 24; ++i) {
        Frame f(16, 16, 0.0, PixelScale::unit);
        BinaryMask m(16, 16);
        const double cx = 4 + 8 * u(rng), cy = 4 + 8 * u(rng);
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                const bool in = std::hypot(x - cx, y - cy) < 4.0;
                m.set(x, y, in);
                f.at(x, y) = (in ? 0.8 : 0.1) + 0.1 * u(rng);
            }
        }
        if (i < 20) pairs.push_back({f, m});
        else test.push_back({f, m});
    }
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.batch_size = 4;
    tc.epochs = 40;
    tc.eval_every = 10;
    tc.seed = 1;
    const auto r = train<double>(cfg, pairs, test, tc);
    ASSERT_EQ(r.curve.size(), 4u);
    EXPECT_EQ(r.curve.back().epoch, 40);
    EXPECT_LT(r.curve.back().train_loss, r.curve.front().train_loss);
    EXPECT_GT(r.curve.back().test_accuracy, 0.95);
}

TEST(Train, CurveIncludesFinalEpoch) {
    const NetConfig cfg = tiny(8, 1, 1, 1);
    std::vector<TrainPair> pairs(3, TrainPair{Frame(8, 8, 0.5, PixelScale::unit), BinaryMask(8, 8)});
    TrainConfig tc;
    tc.epochs = 7;
    tc.eval_every = 3;
    const auto r = train<double>(cfg, pairs, {}, tc);
    std::vector<int> epochs;
    for (const auto& p : r.curve) epochs.push_back(p.epoch);
    EXPECT_EQ(epochs, (std::vector<int>{3, 6, 7}));
}

TEST(Train, SplitValidationIsSeededPartition) {
    const auto [a_train, a_val] = split_validation(20, 0.2, 5);
    const auto [b_train, b_val] = split_validation(20, 0.2, 5);
    EXPECT_EQ(a_val, b_val);
    EXPECT_EQ(a_val.size(), 4u);
    std::vector<std::size_t> all = a_train;
    all.insert(all.end(), a_val.begin(), a_val.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(all[i], i);
}

TEST(Threshold, HalfIsForeground) {
    Tensor3<double> p(1, 1, 3);
    p.data = {0.49, 0.5, 0.51};
    const auto m = threshold_probabilities(p);
    EXPECT_FALSE(m.at(0, 0));
    EXPECT_TRUE(m.at(1, 0));
    EXPECT_TRUE(m.at(2, 0));
}

TEST(WeightsIo, RoundTripBothPrecisions) {
    coneboot::testing::TempDir dir;
    const NetConfig cfg = tiny(16, 2, 2, 1);
    const auto wd = init_weights<double>(cfg, 14);
    save_weights(wd, dir / "d.cbw");
    EXPECT_EQ(load_weights<double>(dir / "d.cbw"), wd);
    const auto wf = cast_weights<double, float>(wd);
    save_weights(wf, dir / "f.cbw");
    EXPECT_EQ(load_weights<float>(dir / "f.cbw"), wf);
}

TEST(WeightsIo, RejectsCorruptData) {
    const NetConfig cfg = tiny(8, 1, 1, 1);
    auto w = init_weights<double>(cfg, 15);
    std::string data = encode_weights(w);
    EXPECT_THROW(decode_weights<double>(data.substr(0, data.size() - 3)), Error);
    EXPECT_THROW(decode_weights<double>(data + "x"), Error);
    w.params[0].values[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        decode_weights<double>(encode_weights(w));
        FAIL() << "NaN weights accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_finite);
    }
}
