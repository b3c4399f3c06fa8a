#include <random>

#include <gtest/gtest.h>

#include "coneboot/metrics.hpp"
#include "oracles.hpp"

using namespace coneboot;
using namespace coneboot::metrics;

TEST(Confusion, AllForeground) {
    const BinaryMask a(4, 4, true);
    const auto c = confusion_counts(a, a);
    EXPECT_EQ(c.tp, 16u);
    EXPECT_EQ(c.tn + c.fp + c.fn, 0u);
}

TEST(Confusion, Complement) {
    std::mt19937_64 rng(1);
    const auto t = oracle::random_mask(9, 7, 0.4, rng);
    const auto c = confusion_counts(complement(t), t);
    EXPECT_EQ(c.tp, 0u);
    EXPECT_EQ(c.tn, 0u);
    EXPECT_EQ(c.total(), 63u);
}

TEST(Confusion, MatchesPerPixelLoop) {
    std::mt19937_64 rng(2);
    const auto p = oracle::random_mask(32, 32, 0.5, rng);
    const auto t = oracle::random_mask(32, 32, 0.5, rng);
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool a = p.at(x, y);
            const bool b = t.at(x, y);
            tp += a && b;
            tn += !a && !b;
            fp += a && !b;
            fn += !a && b;
        }
    }
    EXPECT_EQ(confusion_counts(p, t), (ConfusionCounts{tp, tn, fp, fn}));
}

TEST(Confusion, DimensionMismatch) {
    EXPECT_THROW(confusion_counts(BinaryMask(2, 2), BinaryMask(3, 2)), Error);
}

TEST(PixelAccuracy, IdenticalAndComplementary) {
    std::mt19937_64 rng(3);
    const auto m = oracle::random_mask(16, 16, 0.3, rng);
    EXPECT_EQ(pixel_accuracy(m, m), 1.0);
    EXPECT_EQ(pixel_accuracy(m, complement(m)), 0.0);
}

TEST(PixelAccuracy, ExactMismatchCount) {
    std::mt19937_64 rng(4);
    const auto truth = oracle::random_mask(256, 256, 0.5, rng);
    BinaryMask pred = truth;
    std::vector<std::size_t> idx(pred.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < 5243; ++k) pred.bits[idx[k]] ^= 1;
    EXPECT_DOUBLE_EQ(pixel_accuracy(pred, truth), 1.0 - 5243.0 / 65536.0);
    EXPECT_NEAR(pixel_accuracy(pred, truth), 0.92000, 5e-5);
}

TEST(PixelAccuracy, SymmetryAndComplementSum) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = oracle::random_mask(12, 10, 0.5, rng);
        const auto b = oracle::random_mask(12, 10, 0.3, rng);
        EXPECT_EQ(pixel_accuracy(a, b), pixel_accuracy(b, a));
        EXPECT_NEAR(pixel_accuracy(a, b) + pixel_accuracy(a, complement(b)), 1.0, 1e-15);
    }
}

TEST(PixelAccuracy, UpsamplesPredictionToTruth) {
    BinaryMask pred(2, 2);
    pred.set(0, 0, true);
    BinaryMask truth(4, 4);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) truth.set(x, y, true);
    }
    EXPECT_EQ(pixel_accuracy_at_truth(pred, truth), 1.0);
}

TEST(ApplyMask, Definitions) {
    const Frame f(6, 4, 100.0);
    EXPECT_EQ(apply_mask(f, BinaryMask(6, 4, true)), f);
    for (double v : apply_mask(f, BinaryMask(6, 4, false)).pixels) EXPECT_EQ(v, 0.0);
    BinaryMask half(6, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 3; ++x) half.set(x, y, true);
    }
    const Frame out = apply_mask(f, half);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) EXPECT_EQ(out.at(x, y), x < 3 ? 100.0 : 0.0);
    }
    EXPECT_EQ(apply_mask(out, half), out);
}

TEST(Deid, Leakage) {
    BinaryMask sensitive(8, 8);
    for (int x = 0; x < 4; ++x) sensitive.set(x, 0, true);
    BinaryMask mask(8, 8);
    for (int y = 2; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) mask.set(x, y, true);
    }
    EXPECT_EQ(deid_leakage(mask, sensitive), 0.0);
    EXPECT_TRUE(deid_passes(mask, sensitive));
    EXPECT_EQ(deid_leakage(BinaryMask(8, 8, true), sensitive), 1.0);
    mask.set(1, 0, true);
    EXPECT_EQ(deid_leakage(mask, sensitive), 0.25);
    EXPECT_FALSE(deid_passes(mask, sensitive));
    EXPECT_EQ(deid_leakage(mask, BinaryMask(8, 8)), 0.0);
}

TEST(MeanAccuracy, UnweightedMean) {
    const std::vector<double> v{0.5, 1.0, 0.75};
    EXPECT_DOUBLE_EQ(mean_accuracy(v), 0.75);
}
