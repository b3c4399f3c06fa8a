#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "coneboot/maskgen.hpp"
#include "coneboot/synthcone.hpp"

using namespace coneboot;

namespace {

/// Cone fully inside the frame so the closed-form area applies.
synth::SynthParams interior_cone() {
    synth::SynthParams p;
    p.width = 256;
    p.height = 256;
    p.apex_x = 128.0;
    p.apex_y = 20.0;
    p.radius = 200.0;
    p.half_angle_deg = 35.0;
    p.text_regions.clear();
    return p;
}

} // namespace

TEST(Synth, TruthMatchesSectorArea) {
    const auto p = interior_cone();
    const double theta = 2.0 * p.half_angle_deg * std::numbers::pi / 180.0;
    const double area = 0.5 * p.radius * p.radius * theta;
    const double count = static_cast<double>(synth::truth_mask(p).count());
    EXPECT_NEAR(count / area, 1.0, 0.02);
}

TEST(Synth, DefaultTruthCountsOnlySectorPixels) {
    const synth::SynthParams p;
    const auto truth = synth::truth_mask(p);
    const double half = p.half_angle_deg * std::numbers::pi / 180.0;
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            const double dx = x - p.apex_x;
            const double dy = y - p.apex_y;
            const bool inside = std::hypot(dx, dy) <= p.radius && std::abs(std::atan2(dx, dy)) <= half;
            EXPECT_EQ(truth.at(x, y), inside) << x << "," << y;
        }
    }
}

TEST(Synth, SameSeedIsBitIdentical) {
    const synth::SynthParams p;
    const auto a = synth::generate_sequence(p, 7);
    const auto b = synth::generate_sequence(p, 7);
    ASSERT_EQ(a.sequence.frames.size(), b.sequence.frames.size());
    for (std::size_t i = 0; i < a.sequence.frames.size(); ++i) EXPECT_EQ(a.sequence.frames[i], b.sequence.frames[i]);
    EXPECT_EQ(a.truth, b.truth);
    EXPECT_EQ(a.text_mask, b.text_mask);
}

TEST(Synth, TruthIgnoresSeedAndNoise) {
    synth::SynthParams p;
    const auto a = synth::generate_sequence(p, 1);
    p.speckle_amplitude = 0.1;
    p.motion_amplitude = 0.3;
    p.near_intensity = 90;
    const auto b = synth::generate_sequence(p, 99);
    EXPECT_EQ(a.truth, b.truth);
}

TEST(Synth, NoSpeckleMeansStaticFrames) {
    synth::SynthParams p;
    p.speckle_amplitude = 0.0;
    p.ekg_enabled = false;
    const auto s = synth::generate_sequence(p, 3);
    for (const auto& f : s.sequence.frames) EXPECT_EQ(f, s.sequence.frames.front());
    const Frame mean = maskgen::mean_image(maskgen::frame_differences(s.sequence));
    for (double v : mean.pixels) EXPECT_EQ(v, 0.0);
}

TEST(Synth, ChangeConfinedToCone) {
    const synth::SynthParams p;
    const auto s = synth::generate_sequence(p, 11);
    const Frame mean = maskgen::mean_image(maskgen::frame_differences(s.sequence));
    double inside = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (s.truth.bits[i]) inside += mean.pixels[i];
        else EXPECT_EQ(mean.pixels[i], 0.0);
    }
    EXPECT_GT(inside, 0.0);
}

TEST(Synth, EkgTraceMovesOutsideTheCone) {
    synth::SynthParams p;
    p.ekg_enabled = true;
    const auto s = synth::generate_sequence(p, 5);
    EXPECT_GT(s.ekg_mask.count(), 0u);
    bool moved = false;
    for (std::size_t i = 0; i < s.ekg_mask.size(); ++i) {
        if (!s.ekg_mask.bits[i]) continue;
        for (const auto& f : s.sequence.frames) moved |= f.pixels[i] != s.sequence.frames[0].pixels[i];
    }
    EXPECT_TRUE(moved);
    EXPECT_EQ(s.text_truth_overlap, 0u);
}

TEST(Synth, ReportsConfiguredOverlap) {
    synth::SynthParams p;
    p.text_regions = {{60, 20, 10, 10}}; // inside the default cone
    const auto s = synth::generate_sequence(p, 5);
    EXPECT_EQ(s.text_truth_overlap, 100u);
}

TEST(Synth, OcclusionRemovesTruth) {
    synth::SynthParams p;
    p.occlusion = synth::Rect{100, 0, 28, 96};
    const auto truth = synth::truth_mask(p);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 100; x < 128; ++x) EXPECT_FALSE(truth.at(x, y));
    }
}

TEST(Synth, RejectsDegenerateSector) {
    synth::SynthParams p;
    p.radius = 0.0;
    EXPECT_THROW(synth::generate_sequence(p, 1), Error);
    p = {};
    p.half_angle_deg = 0.0;
    EXPECT_THROW(synth::generate_sequence(p, 1), Error);
    p = {};
    p.n_frames = 1;
    EXPECT_THROW(synth::generate_sequence(p, 1), Error);
}

TEST(Synth, CorpusPlanIsSeededAndSized) {
    const synth::CorpusRecipe recipe;
    const auto a = synth::corpus_plan(recipe, 2024);
    const auto b = synth::corpus_plan(recipe, 2024);
    ASSERT_EQ(a.size(), 72u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_EQ(synth::truth_mask(a[i].params), synth::truth_mask(b[i].params));
    }
}
