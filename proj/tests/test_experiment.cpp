#include <set>

#include <gtest/gtest.h>

#include "coneboot/experiment.hpp"
#include "coneboot/report.hpp"
#include "support.hpp"

using namespace coneboot;
using namespace coneboot::experiment;

namespace {

FrameSequence counting_sequence(const std::string& id, int n) {
    FrameSequence s;
    s.id = id;
    for (int i = 0; i < n; ++i) s.frames.emplace_back(2, 2, static_cast<double>(i));
    return s;
}

ExperimentPlan tiny_plan() {
    ExperimentPlan plan = desk_plan();
    plan.synth = synth::CorpusRecipe{};
    plan.synth->training_sequences = 30;
    plan.synth->test_sequences = 6;
    plan.replicates = 2;
    plan.representative_size = 6;
    plan.bad_mask_size = 2;
    plan.frames_per_sequence = 2;
    plan.net = {32, 2, 2, 1};
    plan.base_train.epochs = 2;
    plan.base_train.eval_every = 1;
    plan.refine_train.epochs = 1;
    return plan;
}

RunResult sample_result(Stage stage, int replicate, double acc) {
    RunResult r;
    r.algorithm = Algorithm::filled;
    r.stage = stage;
    r.replicate = replicate;
    r.seed = 1234567890123ULL + static_cast<std::uint64_t>(replicate);
    r.representative_accuracy = acc;
    r.bad_accuracy = acc / 3.0;
    r.deid_pass = 3;
    r.deid_total = 10;
    r.deid_static_pass = 2;
    r.deid_static_total = 4;
    if (stage != Stage::cv_only) r.curve = {{5, 0.1, 0.2, 0.7}, {10, 1.0 / 3.0, 0.05, acc}};
    return r;
}

} // namespace

TEST(SelectFrames, DistinctSortedAndSeeded) {
    const auto s = counting_sequence("a", 12);
    const auto idx = select_frame_indices(s, 10, 5);
    ASSERT_EQ(idx.size(), 10u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 10u);
    EXPECT_EQ(idx, select_frame_indices(s, 10, 5));
    EXPECT_LT(idx.back(), 12u);
}

TEST(SelectFrames, ShortClipGivesEveryFrame) {
    const auto idx = select_frame_indices(counting_sequence("a", 10), 10, 5);
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    EXPECT_EQ(select_frame_indices(counting_sequence("a", 4), 10, 5).size(), 4u);
    EXPECT_EQ(select_frames(counting_sequence("a", 3), 2, 1).size(), 2u);
}

TEST(SelectFrames, DependsOnSequenceId) {
    int differs = 0;
    for (int i = 0; i < 10; ++i) {
        differs += select_frame_indices(counting_sequence("a" + std::to_string(i), 40), 5, 1) !=
                   select_frame_indices(counting_sequence("b" + std::to_string(i), 40), 5, 1);
    }
    EXPECT_GT(differs, 5);
}

TEST(FoldGroups, PartitionWithoutLeakage) {
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) ids.push_back("t" + std::to_string(i));
    const auto groups = fold_groups(ids, 3, 7);
    ASSERT_EQ(groups.size(), 3u);
    std::multiset<std::string> seen;
    for (const auto& g : groups) {
        EXPECT_EQ(g.size(), 4u);
        seen.insert(g.begin(), g.end());
    }
    EXPECT_EQ(seen, std::multiset<std::string>(ids.begin(), ids.end()));
    std::vector<std::string> reversed(ids.rbegin(), ids.rend());
    EXPECT_EQ(fold_groups(reversed, 3, 7), groups);
    EXPECT_THROW(fold_groups(std::vector<std::string>{"a", "b"}, 3, 7), Error);
}

TEST(ResultsCsv, EmptyIsHeaderOnly) {
    EXPECT_EQ(results_csv({}), std::string(results_header) + "\n");
    EXPECT_TRUE(parse_results_csv(results_csv({})).empty());
}

TEST(ResultsCsv, RoundTripIsExact) {
    std::vector<RunResult> rs{sample_result(Stage::cv_only, 0, 0.875), sample_result(Stage::base, 0, 0.1),
                              sample_result(Stage::fold_2, 1, 2.0 / 3.0)};
    rs[1].curve.push_back({11, 1e-300, 0.0, 0.5});
    const auto back = parse_results_csv(results_csv(rs));
    ASSERT_EQ(back.size(), rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_TRUE(back[i].same_outcome(rs[i])) << i;
    EXPECT_EQ(results_csv(back), results_csv(rs));
}

TEST(ResultsCsv, RejectsBadHeader) {
    EXPECT_THROW(parse_results_csv("kind,algorithm\n"), Error);
}

TEST(Plan, JsonRoundTrip) {
    ExperimentPlan plan = tiny_plan();
    plan.seeds = {3, 9};
    plan.mask_params.hull_on_largest_component = true;
    const auto back = plan_from_json(plan_to_json(plan));
    EXPECT_EQ(plan_to_json(back), plan_to_json(plan));
    EXPECT_EQ(back.net, plan.net);
    EXPECT_EQ(back.replicate_seeds(), plan.replicate_seeds());
}

TEST(Plan, ValidateRejectsBadValues) {
    ExperimentPlan plan = desk_plan();
    plan.replicates = 1;
    EXPECT_THROW(plan.validate(), Error);
    plan = desk_plan();
    plan.folds = 4;
    EXPECT_THROW(plan.validate(), Error);
    plan = desk_plan();
    plan.seeds = {1, 1, 2, 3, 4, 5};
    EXPECT_THROW(plan.validate(), Error);
    EXPECT_NO_THROW(desk_plan().validate());
}

TEST(Plan, DeskDefaults) {
    const auto plan = desk_plan();
    EXPECT_EQ(plan.replicates, 6);
    EXPECT_EQ(plan.folds, 3);
    EXPECT_EQ(plan.representative_size, 12);
    EXPECT_EQ(plan.frames_per_sequence, 10);
    EXPECT_EQ(plan.replicate_seeds().size(), 6u);
}

TEST(Score, CvMaskEqualToTruthScoresOne) {
    Corpus c;
    auto s = synth::generate_sequence(synth::SynthParams{}, 3, "only");
    c.sequences.push_back({s.sequence, s.truth, synth::sensitive_mask(s), false, {}});
    finish_corpus(c, maskgen::MaskAlgorithm{});
    c.sequences[0].masks.hull = c.sequences[0].truth;
    ExperimentPlan plan = tiny_plan();
    const auto frames = sample_frames(plan, c, {"only"}, 1);
    const auto score =
        score_frames(frames, c, [&](const SampledFrame& f) { return c.at(f.sequence_id).masks.hull; });
    EXPECT_EQ(score.accuracy, 1.0);
}

TEST(Run, TinyPlanEndToEnd) {
    const ExperimentPlan plan = tiny_plan();
    const auto prep = prepare(plan, corpus_for(plan));
    EXPECT_EQ(prep.representative.size(), 6u);
    EXPECT_EQ(prep.bad_set.size(), 2u);
    for (std::size_t f = 0; f < prep.fold_groups.size(); ++f) {
        const auto refine = refine_ids(prep, static_cast<int>(f));
        for (const auto& id : prep.fold_groups[f]) EXPECT_FALSE(std::binary_search(refine.begin(), refine.end(), id));
        for (const auto& id : refine) {
            for (Algorithm a : plan.mask_algorithms) {
                const auto& t = prep.training.at(a);
                EXPECT_EQ(std::count(t.begin(), t.end(), id), 0) << "test sequence used for training";
            }
        }
    }
    const auto results = run_plan(plan, prep);
    // 3 cv rows + 3 algorithms x 2 replicates x (base + 3 folds)
    EXPECT_EQ(results.size(), 3u + 3u * 2u * 4u);
    EXPECT_TRUE(std::is_sorted(results.begin(), results.end(), result_order));
    for (const auto& r : results) {
        EXPECT_GE(r.representative_accuracy, 0.0);
        EXPECT_LE(r.representative_accuracy, 1.0);
        if (r.stage == Stage::base) {
            EXPECT_EQ(r.curve.size(), 2u);
        }
    }
    const auto again = run_plan(plan, prep);
    EXPECT_EQ(results_csv(again), results_csv(results));

    const std::string md = report::markdown(results);
    for (const char* heading : {"Table 1", "Table 2", "Table 3", "Table 4"}) {
        EXPECT_NE(md.find(heading), std::string::npos) << heading;
    }
}

TEST(Persist, WritesAndLoads) {
    coneboot::testing::TempDir dir;
    const std::vector<RunResult> rs{sample_result(Stage::base, 0, 0.9), sample_result(Stage::base, 1, 0.8)};
    persist_results(rs, dir / "results.csv");
    const auto back = load_results(dir / "results.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_TRUE(back[1].same_outcome(rs[1]));
}
