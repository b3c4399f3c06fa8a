#ifndef CONEBOOT_EXPERIMENT_HPP
#define CONEBOOT_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/maskgen.hpp"
#include "coneboot/metrics.hpp"
#include "coneboot/parallel.hpp"
#include "coneboot/png_io.hpp"
#include "coneboot/review.hpp"
#include "coneboot/segnet/train.hpp"
#include "coneboot/segnet/unet.hpp"
#include "coneboot/sequence_io.hpp"
#include "coneboot/synthcone.hpp"

namespace coneboot::experiment {

using maskgen::Algorithm;
using Scalar = float;

enum class Stage { cv_only, base, fold_1, fold_2, fold_3 };

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::cv_only: return "cv_only";
        case Stage::base: return "base";
        case Stage::fold_1: return "fold_1";
        case Stage::fold_2: return "fold_2";
        case Stage::fold_3: return "fold_3";
    }
    return "cv_only";
}

inline Stage stage_from_string(const std::string& s) {
    for (Stage v : {Stage::cv_only, Stage::base, Stage::fold_1, Stage::fold_2, Stage::fold_3}) {
        if (s == to_string(v)) return v;
    }
    fail(ErrorCode::malformed_document, "unknown stage '" + s + "'");
}

inline Stage fold_stage(int fold) {
    require(fold >= 0 && fold < 3, ErrorCode::invalid_argument, "results carry at most three fold stages");
    return static_cast<Stage>(static_cast<int>(Stage::fold_1) + fold);
}

struct ExperimentPlan {
    std::vector<Algorithm> mask_algorithms{Algorithm::threshold, Algorithm::filled, Algorithm::hull};
    int replicates = 6;
    int frames_per_sequence = 10;
    int folds = 3;
    std::vector<std::uint64_t> seeds; // one per replicate; filled from split_seed when empty
    int representative_size = 12;
    int bad_mask_size = 6;
    std::uint64_t split_seed = 7;
    maskgen::MaskAlgorithm mask_params;
    review::SimulatedReviewer reviewer;
    segnet::NetConfig net{64, 3, 4, 1};
    segnet::TrainConfig base_train;
    segnet::TrainConfig refine_train;
    int workers = 1;
    bool log_full_set_accuracy = false;
    std::string dataset_root;                      // PNG layout on disk, or
    std::optional<synth::CorpusRecipe> synth;      // an in-memory synthetic corpus
    std::uint64_t synth_seed = 2024;

    std::vector<std::uint64_t> replicate_seeds() const {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> out;
        for (int r = 0; r < replicates; ++r) out.push_back(mix_seed(split_seed, 1000 + static_cast<std::uint64_t>(r)));
        return out;
    }

    void validate() const {
        require(!mask_algorithms.empty(), ErrorCode::invalid_argument, "plan needs at least one mask algorithm");
        require(replicates >= 2, ErrorCode::invalid_argument, "replicates must be >= 2");
        require(folds >= 2 && folds <= 3, ErrorCode::invalid_argument, "folds must be 2 or 3");
        require(frames_per_sequence >= 1, ErrorCode::invalid_argument, "frames_per_sequence must be >= 1");
        const auto s = replicate_seeds();
        require(static_cast<int>(s.size()) == replicates, ErrorCode::invalid_argument, "one seed per replicate");
        require(std::set<std::uint64_t>(s.begin(), s.end()).size() == s.size(), ErrorCode::invalid_argument,
                "replicate seeds must be distinct");
        require(representative_size >= folds, ErrorCode::invalid_argument, "test set smaller than fold count");
        net.validate();
        base_train.validate();
        refine_train.validate();
    }
};

/// Desk-scale defaults sized for a single laptop core.
inline ExperimentPlan desk_plan() {
    ExperimentPlan plan;
    plan.synth = synth::CorpusRecipe{};
    plan.base_train.learning_rate = 2e-3;
    plan.base_train.epochs = 15;
    plan.base_train.eval_every = 5;
    plan.refine_train = plan.base_train;
    plan.refine_train.epochs = 15;
    return plan;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusSequence {
    FrameSequence sequence;
    BinaryMask truth;
    BinaryMask sensitive;
    bool dynamic_clutter = false; // some sensitive pixel changes over time
    maskgen::MaskSet masks;
};

struct Corpus {
    std::vector<CorpusSequence> sequences;
    std::map<std::string, std::size_t> index;

    const CorpusSequence& at(const std::string& id) const {
        auto it = index.find(id);
        require(it != index.end(), ErrorCode::unknown_id, "sequence '" + id + "' not in corpus");
        return sequences[it->second];
    }
};

inline bool has_dynamic_pixels(const FrameSequence& seq, const BinaryMask& region) {
    for (std::size_t i = 0; i < region.size(); ++i) {
        if (!region.bits[i]) continue;
        for (std::size_t f = 1; f < seq.frames.size(); ++f) {
            if (seq.frames[f].pixels[i] != seq.frames[0].pixels[i]) return true;
        }
    }
    return false;
}

inline void finish_corpus(Corpus& c, const maskgen::MaskAlgorithm& params) {
    c.index.clear();
    for (std::size_t i = 0; i < c.sequences.size(); ++i) {
        auto& s = c.sequences[i];
        s.dynamic_clutter = has_dynamic_pixels(s.sequence, s.sensitive);
        s.masks = maskgen::generate_all_masks(s.sequence, params);
        c.index[s.sequence.id] = i;
    }
}

inline Corpus synthesize_corpus(const synth::CorpusRecipe& recipe, std::uint64_t seed,
                                const maskgen::MaskAlgorithm& params) {
    Corpus c;
    for (const auto& item : synth::corpus_plan(recipe, seed)) {
        auto s = synth::generate_sequence(item.params, item.seed, item.id);
        c.sequences.push_back({std::move(s.sequence), std::move(s.truth), synth::sensitive_mask(s), false, {}});
    }
    finish_corpus(c, params);
    return c;
}

/// Loads `<root>/<id>/` sequences; each needs truth_mask.png, and
/// text_mask.png is optional (empty sensitive region when absent).
inline Corpus load_corpus(const fs::path& root, const maskgen::MaskAlgorithm& params) {
    Corpus c;
    for (const auto& e : scan_dataset(root).entries) {
        const fs::path dir = root / e.path;
        CorpusSequence s;
        s.sequence = load_sequence(dir);
        require(fs::exists(dir / truth_mask_name), ErrorCode::missing_path,
                "missing truth mask for '" + e.sequence_id + "'");
        s.truth = png::read_mask(dir / truth_mask_name);
        s.sensitive = fs::exists(dir / text_mask_name) ? png::read_mask(dir / text_mask_name)
                                                        : BinaryMask(s.sequence.width(), s.sequence.height());
        require(s.truth.same_shape(s.sequence.frames.front()) && s.sensitive.same_shape(s.sequence.frames.front()),
                ErrorCode::dimension_mismatch, "masks of '" + e.sequence_id + "' do not match frame size");
        c.sequences.push_back(std::move(s));
    }
    finish_corpus(c, params);
    return c;
}

// ---------------------------------------------------------------------------
// Frame sampling

/// k distinct frames drawn uniformly (returned in clip order); every frame
/// when the clip is shorter than k.
inline std::vector<std::size_t> select_frame_indices(const FrameSequence& seq, int k, std::uint64_t seed) {
    require(!seq.frames.empty(), ErrorCode::too_few_frames, "sequence '" + seq.id + "' is empty");
    require(k >= 1, ErrorCode::invalid_argument, "k must be >= 1");
    std::vector<std::size_t> idx(seq.frames.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (static_cast<std::size_t>(k) >= idx.size()) {
        if (static_cast<std::size_t>(k) > idx.size()) {
            spdlog::warn("sequence '{}' has {} frames, fewer than the {} requested", seq.id, idx.size(), k);
        }
        return idx;
    }
    std::mt19937_64 rng(mix_seed(seed, hash_name(seq.id)));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<Frame> select_frames(const FrameSequence& seq, int k, std::uint64_t seed) {
    std::vector<Frame> out;
    for (std::size_t i : select_frame_indices(seq, k, seed)) out.push_back(seq.frames[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Results

struct RunResult {
    Algorithm algorithm = Algorithm::threshold;
    Stage stage = Stage::cv_only;
    int replicate = 0;
    std::uint64_t seed = 0;
    segnet::LearningCurve curve;
    double representative_accuracy = 0.0; // held-out third for fold stages
    double bad_accuracy = 0.0;
    int deid_pass = 0;
    int deid_total = 0;
    int deid_static_pass = 0;  // frames whose sensitive content is static only
    int deid_static_total = 0;
    double wall_seconds = 0.0; // not persisted in results CSV

    bool same_outcome(const RunResult& o) const {
        return algorithm == o.algorithm && stage == o.stage && replicate == o.replicate && seed == o.seed &&
               curve == o.curve && representative_accuracy == o.representative_accuracy &&
               bad_accuracy == o.bad_accuracy && deid_pass == o.deid_pass && deid_total == o.deid_total &&
               deid_static_pass == o.deid_static_pass && deid_static_total == o.deid_static_total;
    }
};

struct PreparedExperiment {
    Corpus corpus;
    DatasetManifest manifest;
    std::vector<std::string> representative;
    std::vector<std::string> bad_set;
    std::map<Algorithm, std::vector<std::string>> training; // reviewed-good per algorithm
    std::vector<std::vector<std::string>> fold_groups;      // evaluation group per fold
};

/// Seeded partition of test sequences into `folds` groups of near-equal
/// size, by sequence. Each group is sorted.
inline std::vector<std::vector<std::string>> fold_groups(const std::vector<std::string>& ids, int folds,
                                                         std::uint64_t seed) {
    require(folds >= 2, ErrorCode::invalid_argument, "folds must be >= 2");
    require(ids.size() >= static_cast<std::size_t>(folds), ErrorCode::invalid_argument,
            "test set of " + std::to_string(ids.size()) + " sequences is smaller than " + std::to_string(folds) +
                " folds");
    std::vector<std::string> shuffled = ids;
    std::sort(shuffled.begin(), shuffled.end());
    std::mt19937_64 rng(mix_seed(seed, 3));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < shuffled.size(); ++i) groups[i % groups.size()].push_back(shuffled[i]);
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
}

/// Test-set sampling, simulated triage and fold partition. Deterministic in
/// the plan's split_seed.
inline PreparedExperiment prepare(const ExperimentPlan& plan, Corpus corpus) {
    plan.validate();
    PreparedExperiment prep;
    prep.corpus = std::move(corpus);
    for (const auto& s : prep.corpus.sequences) {
        prep.manifest.entries.push_back({s.sequence.id, s.sequence.id, static_cast<int>(s.sequence.frames.size()),
                                         Split::unsorted});
    }
    prep.representative = review::sample_representative(prep.manifest, static_cast<std::size_t>(plan.representative_size),
                                                         plan.split_seed);

    // One triage pass per algorithm. The manifest records a sequence as
    // rejected only when every algorithm's mask failed review.
    std::map<std::string, bool> any_good;
    review::VerdictLog log;
    auto queue = review::build_queue(prep.manifest, {}).queue;
    for (const auto& id : queue.pending) {
        const auto& s = prep.corpus.at(id);
        bool good_somewhere = false;
        for (Algorithm a : plan.mask_algorithms) {
            if (plan.reviewer.judge(s.masks.get(a), s.truth) == review::Decision::good) {
                prep.training[a].push_back(id);
                good_somewhere = true;
            }
        }
        any_good[id] = good_somewhere;
    }
    const std::vector<std::string> pending = queue.pending;
    for (const auto& id : pending) {
        review::record_verdict(queue, {id, any_good[id] ? review::Decision::good : review::Decision::bad, 0, 0, "simulated"},
                               log);
    }
    const auto part = review::partition(prep.manifest, queue);
    spdlog::info("triage: {} of {} sequences usable by at least one algorithm ({:.1f}%)", part.train_good.size(),
                 part.train_good.size() + part.rejected.size(), 100.0 * part.good_fraction());
    prep.bad_set = review::sample_bad_mask(prep.manifest, static_cast<std::size_t>(plan.bad_mask_size),
                                           mix_seed(plan.split_seed, 2));
    for (Algorithm a : plan.mask_algorithms) {
        require(!prep.training[a].empty(), ErrorCode::invalid_argument,
                std::string("no sequence passed review for ") + maskgen::to_string(a));
        spdlog::info("{}: {} training sequences", maskgen::to_string(a), prep.training[a].size());
    }

    prep.fold_groups = fold_groups(prep.representative, plan.folds, plan.split_seed);
    return prep;
}

/// Refinement ids for a fold: every representative sequence outside its
/// evaluation group.
inline std::vector<std::string> refine_ids(const PreparedExperiment& prep, int fold) {
    std::vector<std::string> out;
    for (int g = 0; g < static_cast<int>(prep.fold_groups.size()); ++g) {
        if (g == fold) continue;
        out.insert(out.end(), prep.fold_groups[static_cast<std::size_t>(g)].begin(),
                   prep.fold_groups[static_cast<std::size_t>(g)].end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Selected frames for one replicate, network-ready.
struct SampledFrame {
    std::string sequence_id;
    Frame native;
    Frame input;
};

inline std::vector<SampledFrame> sample_frames(const ExperimentPlan& plan, const Corpus& corpus,
                                               const std::vector<std::string>& ids, std::uint64_t seed) {
    std::vector<SampledFrame> out;
    for (const auto& id : ids) {
        const auto& s = corpus.at(id);
        for (const Frame& f : select_frames(s.sequence, plan.frames_per_sequence, seed)) {
            out.push_back({id, f, segnet::prepare_input(f, plan.net.input_size)});
        }
    }
    return out;
}

inline std::vector<segnet::TrainPair> to_pairs(const std::vector<SampledFrame>& frames, const Corpus& corpus,
                                               const std::function<const BinaryMask&(const CorpusSequence&)>& label,
                                               int input_size) {
    std::vector<segnet::TrainPair> pairs;
    for (const auto& f : frames) {
        pairs.push_back({f.input, resize_nearest(label(corpus.at(f.sequence_id)), input_size, input_size)});
    }
    return pairs;
}

inline std::vector<segnet::EvalItem> to_eval(const std::vector<SampledFrame>& frames, const Corpus& corpus) {
    std::vector<segnet::EvalItem> items;
    for (const auto& f : frames) items.push_back({f.input, corpus.at(f.sequence_id).truth});
    return items;
}

struct SetScore {
    double accuracy = 0.0;
    int deid_pass = 0;
    int deid_total = 0;
    int deid_static_pass = 0;
    int deid_static_total = 0;
};

/// Per-frame accuracy and de-identification outcome for any mask source.
inline SetScore score_frames(const std::vector<SampledFrame>& frames, const Corpus& corpus,
                             const std::function<BinaryMask(const SampledFrame&)>& predict) {
    SetScore score;
    std::vector<double> acc;
    for (const auto& f : frames) {
        const auto& s = corpus.at(f.sequence_id);
        BinaryMask pred = predict(f);
        if (!pred.same_shape(s.truth)) pred = resize_nearest(pred, s.truth.width, s.truth.height);
        acc.push_back(metrics::pixel_accuracy(pred, s.truth));
        const bool pass = metrics::deid_passes(pred, s.sensitive);
        ++score.deid_total;
        score.deid_pass += pass ? 1 : 0;
        if (!s.dynamic_clutter) {
            ++score.deid_static_total;
            score.deid_static_pass += pass ? 1 : 0;
        }
    }
    score.accuracy = metrics::mean_accuracy(acc);
    return score;
}

inline SetScore evaluate_model(const ExperimentPlan& plan, const segnet::ModelWeights<Scalar>& w,
                               const std::vector<SampledFrame>& frames, const Corpus& corpus) {
    segnet::UNet<Scalar> net(plan.net);
    return score_frames(frames, corpus, [&](const SampledFrame& f) { return segnet::predict_mask(net, w, f.input); });
}

/// Evaluates a model on the bad-mask frames: per-frame accuracy and de-id.
inline SetScore evaluate_bad_set(const ExperimentPlan& plan, const segnet::ModelWeights<Scalar>& w,
                                 const std::vector<SampledFrame>& bad_frames, const Corpus& corpus) {
    return evaluate_model(plan, w, bad_frames, corpus);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Computer-vision masks scored directly (stage cv_only).
inline std::vector<RunResult> run_cv_baseline(const ExperimentPlan& plan, const PreparedExperiment& prep, int replicate) {
    const std::uint64_t seed = plan.replicate_seeds()[static_cast<std::size_t>(replicate)];
    const auto rep = sample_frames(plan, prep.corpus, prep.representative, seed);
    const auto bad = sample_frames(plan, prep.corpus, prep.bad_set, mix_seed(seed, 11));
    std::vector<RunResult> out;
    for (Algorithm a : plan.mask_algorithms) {
        const auto t0 = std::chrono::steady_clock::now();
        auto mask_of = [&](const SampledFrame& f) { return prep.corpus.at(f.sequence_id).masks.get(a); };
        const SetScore r = score_frames(rep, prep.corpus, mask_of);
        const SetScore b = score_frames(bad, prep.corpus, mask_of);
        RunResult res;
        res.algorithm = a;
        res.stage = Stage::cv_only;
        res.replicate = replicate;
        res.seed = seed;
        res.representative_accuracy = r.accuracy;
        res.bad_accuracy = b.accuracy;
        res.deid_pass = b.deid_pass;
        res.deid_total = b.deid_total;
        res.deid_static_pass = b.deid_static_pass;
        res.deid_static_total = b.deid_static_total;
        res.wall_seconds = seconds_since(t0);
        out.push_back(std::move(res));
    }
    return out;
}

struct BaseRun {
    RunResult result;
    segnet::ModelWeights<Scalar> weights;
};

/// Trains from scratch on the reviewed-good CV masks of one algorithm.
inline BaseRun run_base(const ExperimentPlan& plan, const PreparedExperiment& prep, Algorithm algorithm, int replicate) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = plan.replicate_seeds()[static_cast<std::size_t>(replicate)];
    const auto train_frames = sample_frames(plan, prep.corpus, prep.training.at(algorithm), seed);
    const auto rep = sample_frames(plan, prep.corpus, prep.representative, seed);
    const auto bad = sample_frames(plan, prep.corpus, prep.bad_set, mix_seed(seed, 11));
    const auto pairs = to_pairs(train_frames, prep.corpus,
                                [&](const CorpusSequence& s) -> const BinaryMask& { return s.masks.get(algorithm); },
                                plan.net.input_size);
    const auto test = to_eval(rep, prep.corpus);
    segnet::TrainConfig cfg = plan.base_train;
    cfg.seed = mix_seed(seed, 100 + static_cast<std::uint64_t>(algorithm));
    auto trained = segnet::train<Scalar>(plan.net, pairs, test, cfg);
    BaseRun run;
    run.result.algorithm = algorithm;
    run.result.stage = Stage::base;
    run.result.replicate = replicate;
    run.result.seed = seed;
    run.result.curve = std::move(trained.curve);
    run.result.representative_accuracy = evaluate_model(plan, trained.weights, rep, prep.corpus).accuracy;
    const SetScore b = evaluate_bad_set(plan, trained.weights, bad, prep.corpus);
    run.result.bad_accuracy = b.accuracy;
    run.result.deid_pass = b.deid_pass;
    run.result.deid_total = b.deid_total;
    run.result.deid_static_pass = b.deid_static_pass;
    run.result.deid_static_total = b.deid_static_total;
    run.weights = std::move(trained.weights);
    run.result.wall_seconds = seconds_since(t0);
    spdlog::info("base {} replicate {}: representative {:.4f}, bad {:.4f} ({:.1f}s)", maskgen::to_string(algorithm),
                 replicate, run.result.representative_accuracy, run.result.bad_accuracy, run.result.wall_seconds);
    return run;
}

/// Continues training the base weights on each fold's refinement two-thirds
/// (hand-quality truth masks) and scores on the held-out third.
inline std::vector<RunResult> run_refinement_folds(const ExperimentPlan& plan, const PreparedExperiment& prep,
                                                   Algorithm algorithm, int replicate,
                                                   const segnet::ModelWeights<Scalar>& base_weights) {
    const std::uint64_t seed = plan.replicate_seeds()[static_cast<std::size_t>(replicate)];
    const auto bad = sample_frames(plan, prep.corpus, prep.bad_set, mix_seed(seed, 11));
    std::vector<RunResult> out;
    for (int fold = 0; fold < plan.folds; ++fold) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto refine = refine_ids(prep, fold);
        const auto& held_out = prep.fold_groups[static_cast<std::size_t>(fold)];
        for (const auto& id : held_out) {
            require(!std::binary_search(refine.begin(), refine.end(), id), ErrorCode::invalid_argument,
                    "fold leakage: '" + id + "' is both refinement and evaluation data");
        }
        const auto refine_frames = sample_frames(plan, prep.corpus, refine, seed);
        const auto eval_frames = sample_frames(plan, prep.corpus, held_out, seed);
        const auto pairs = to_pairs(refine_frames, prep.corpus,
                                    [](const CorpusSequence& s) -> const BinaryMask& { return s.truth; },
                                    plan.net.input_size);
        const auto test = to_eval(eval_frames, prep.corpus);
        segnet::TrainConfig cfg = plan.refine_train;
        cfg.seed = mix_seed(seed, 200 + 10 * static_cast<std::uint64_t>(algorithm) + static_cast<std::uint64_t>(fold));
        auto trained = segnet::train<Scalar>(plan.net, pairs, test, cfg, base_weights);
        RunResult res;
        res.algorithm = algorithm;
        res.stage = fold_stage(fold);
        res.replicate = replicate;
        res.seed = seed;
        res.curve = std::move(trained.curve);
        res.representative_accuracy = evaluate_model(plan, trained.weights, eval_frames, prep.corpus).accuracy;
        if (plan.log_full_set_accuracy) {
            const auto rep = sample_frames(plan, prep.corpus, prep.representative, seed);
            spdlog::info("{} fold {} replicate {}: full representative set {:.4f}", maskgen::to_string(algorithm),
                         fold + 1, replicate, evaluate_model(plan, trained.weights, rep, prep.corpus).accuracy);
        }
        const SetScore b = evaluate_bad_set(plan, trained.weights, bad, prep.corpus);
        res.bad_accuracy = b.accuracy;
        res.deid_pass = b.deid_pass;
        res.deid_total = b.deid_total;
        res.deid_static_pass = b.deid_static_pass;
        res.deid_static_total = b.deid_static_total;
        res.wall_seconds = seconds_since(t0);
        spdlog::info("{} {} replicate {}: held-out {:.4f}, bad {:.4f} ({:.1f}s)", maskgen::to_string(algorithm),
                     to_string(res.stage), replicate, res.representative_accuracy, res.bad_accuracy, res.wall_seconds);
        out.push_back(std::move(res));
    }
    return out;
}

inline bool result_order(const RunResult& a, const RunResult& b) {
    if (a.algorithm != b.algorithm) return a.algorithm < b.algorithm;
    if (a.stage != b.stage) return a.stage < b.stage;
    return a.replicate < b.replicate;
}

/// Full method: CV baseline, base models and refinement folds for every
/// (algorithm, replicate) job. Jobs run on `plan.workers` threads; results
/// come back sorted by (algorithm, stage, replicate).
inline std::vector<RunResult> run_plan(const ExperimentPlan& plan, const PreparedExperiment& prep) {
    plan.validate();
    // CV masks are fixed per sequence, so every frame draw scores the same;
    // one cv_only row per algorithm suffices.
    std::vector<RunResult> results = run_cv_baseline(plan, prep, 0);
    struct Job {
        Algorithm algorithm;
        int replicate;
    };
    std::vector<Job> jobs;
    for (Algorithm a : plan.mask_algorithms) {
        for (int r = 0; r < plan.replicates; ++r) jobs.push_back({a, r});
    }
    std::vector<std::vector<RunResult>> slots(jobs.size());
    run_indexed(jobs.size(), plan.workers, [&](std::size_t i) {
        const Job& job = jobs[i];
        BaseRun base = run_base(plan, prep, job.algorithm, job.replicate);
        slots[i].push_back(base.result);
        auto folds = run_refinement_folds(plan, prep, job.algorithm, job.replicate, base.weights);
        slots[i].insert(slots[i].end(), folds.begin(), folds.end());
    });
    for (auto& s : slots) results.insert(results.end(), s.begin(), s.end());
    std::stable_sort(results.begin(), results.end(), result_order);
    return results;
}

inline Corpus corpus_for(const ExperimentPlan& plan) {
    if (!plan.dataset_root.empty()) return load_corpus(plan.dataset_root, plan.mask_params);
    require(plan.synth.has_value(), ErrorCode::invalid_argument, "plan needs dataset_root or a synth recipe");
    return synthesize_corpus(*plan.synth, plan.synth_seed, plan.mask_params);
}

inline std::vector<RunResult> run_experiment(const ExperimentPlan& plan) {
    return run_plan(plan, prepare(plan, corpus_for(plan)));
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* results_header =
    "kind,algorithm,stage,replicate,seed,epoch,train_loss,val_loss,test_acc,rep_acc,bad_acc,deid_pass,deid_total,"
    "deid_static_pass,deid_static_total";

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One `summary` row per RunResult followed by one `curve` row per
/// learning-curve evaluation. Reals carry 17 significant digits.
inline std::string results_csv(const std::vector<RunResult>& results) {
    std::string out = std::string(results_header) + "\n";
    for (const auto& r : results) {
        const std::string prefix = std::string(maskgen::to_string(r.algorithm)) + "," + to_string(r.stage) + "," +
                                   std::to_string(r.replicate) + "," + std::to_string(r.seed) + ",";
        const int final_epoch = r.curve.empty() ? 0 : r.curve.back().epoch;
        out += "summary," + prefix + std::to_string(final_epoch) + ",,,," + format_real(r.representative_accuracy) +
               "," + format_real(r.bad_accuracy) + "," + std::to_string(r.deid_pass) + "," +
               std::to_string(r.deid_total) + "," + std::to_string(r.deid_static_pass) + "," +
               std::to_string(r.deid_static_total) + "\n";
        for (const auto& p : r.curve) {
            out += "curve," + prefix + std::to_string(p.epoch) + "," + format_real(p.train_loss) + "," +
                   format_real(p.validation_loss) + "," + format_real(p.test_accuracy) + ",,,,,,\n";
        }
    }
    return out;
}

inline void persist_results(const std::vector<RunResult>& results, const fs::path& path) {
    write_text_atomic(path, results_csv(results));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_real(const std::string& s, int line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(!s.empty() && end == s.c_str() + s.size(), ErrorCode::malformed_document,
            "line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& s, int line_no) {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    require(!s.empty() && end == s.c_str() + s.size(), ErrorCode::malformed_document,
            "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& s, int line_no) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    require(!s.empty() && end == s.c_str() + s.size(), ErrorCode::malformed_document,
            "line " + std::to_string(line_no) + ": bad seed '" + s + "'");
    return v;
}

} // namespace detail

inline std::vector<RunResult> parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == results_header, ErrorCode::malformed_document,
            "results file lacks the expected header");
    std::vector<RunResult> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c = detail::split_csv_line(line);
        require(c.size() == 15, ErrorCode::malformed_document,
                "line " + std::to_string(line_no) + ": expected 15 fields, got " + std::to_string(c.size()));
        const Algorithm alg = [&] {
            try {
                return maskgen::algorithm_from_string(c[1]);
            } catch (const Error&) {
                fail(ErrorCode::malformed_document, "line " + std::to_string(line_no) + ": bad algorithm");
            }
        }();
        const Stage stage = stage_from_string(c[2]);
        const int replicate = static_cast<int>(detail::parse_int(c[3], line_no));
        const std::uint64_t seed = detail::parse_u64(c[4], line_no);
        if (c[0] == "summary") {
            RunResult r;
            r.algorithm = alg;
            r.stage = stage;
            r.replicate = replicate;
            r.seed = seed;
            r.representative_accuracy = detail::parse_real(c[9], line_no);
            r.bad_accuracy = detail::parse_real(c[10], line_no);
            r.deid_pass = static_cast<int>(detail::parse_int(c[11], line_no));
            r.deid_total = static_cast<int>(detail::parse_int(c[12], line_no));
            r.deid_static_pass = static_cast<int>(detail::parse_int(c[13], line_no));
            r.deid_static_total = static_cast<int>(detail::parse_int(c[14], line_no));
            out.push_back(std::move(r));
        } else if (c[0] == "curve") {
            require(!out.empty() && out.back().algorithm == alg && out.back().stage == stage &&
                        out.back().replicate == replicate,
                    ErrorCode::malformed_document, "line " + std::to_string(line_no) + ": curve row without summary");
            out.back().curve.push_back({static_cast<int>(detail::parse_int(c[5], line_no)),
                                        detail::parse_real(c[6], line_no), detail::parse_real(c[7], line_no),
                                        detail::parse_real(c[8], line_no)});
        } else {
            fail(ErrorCode::malformed_document, "line " + std::to_string(line_no) + ": unknown row kind '" + c[0] + "'");
        }
    }
    return out;
}

inline std::vector<RunResult> load_results(const fs::path& path) { return parse_results_csv(read_text(path)); }

inline std::string timings_csv(const std::vector<RunResult>& results) {
    std::string out = "algorithm,stage,replicate,wall_seconds\n";
    for (const auto& r : results) {
        out += std::string(maskgen::to_string(r.algorithm)) + "," + to_string(r.stage) + "," +
               std::to_string(r.replicate) + "," + format_real(r.wall_seconds) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plan files

inline nlohmann::json train_to_json(const segnet::TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
            {"validation_fraction", t.validation_fraction}, {"epochs", t.epochs},
            {"eval_every", t.eval_every}, {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2}, {"adam_epsilon", t.adam_epsilon},
            {"keep_best_validation", t.keep_best_validation}};
}

inline segnet::TrainConfig train_from_json(const nlohmann::json& j, segnet::TrainConfig t) {
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.validation_fraction = j.value("validation_fraction", t.validation_fraction);
    t.epochs = j.value("epochs", t.epochs);
    t.eval_every = j.value("eval_every", t.eval_every);
    t.adam_beta1 = j.value("adam_beta1", t.adam_beta1);
    t.adam_beta2 = j.value("adam_beta2", t.adam_beta2);
    t.adam_epsilon = j.value("adam_epsilon", t.adam_epsilon);
    t.keep_best_validation = j.value("keep_best_validation", t.keep_best_validation);
    return t;
}

inline nlohmann::json net_to_json(const segnet::NetConfig& n) {
    return {{"input_size", n.input_size}, {"depth", n.depth}, {"base_channels", n.base_channels},
            {"convs_per_block", n.convs_per_block}};
}

inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
    nlohmann::json j;
    j["mask_algorithms"] = nlohmann::json::array();
    for (Algorithm a : p.mask_algorithms) j["mask_algorithms"].push_back(maskgen::to_string(a));
    j["replicates"] = p.replicates;
    j["frames_per_sequence"] = p.frames_per_sequence;
    j["folds"] = p.folds;
    j["seeds"] = p.replicate_seeds();
    j["representative_size"] = p.representative_size;
    j["bad_mask_size"] = p.bad_mask_size;
    j["split_seed"] = p.split_seed;
    j["mask"] = {{"block", p.mask_params.threshold_block},
                 {"offset", p.mask_params.threshold_offset},
                 {"hull_on_largest_component", p.mask_params.hull_on_largest_component}};
    j["reviewer"] = {{"min_cone_coverage", p.reviewer.min_cone_coverage},
                     {"max_background_spill", p.reviewer.max_background_spill}};
    j["net"] = net_to_json(p.net);
    j["base_train"] = train_to_json(p.base_train);
    j["refine_train"] = train_to_json(p.refine_train);
    j["workers"] = p.workers;
    j["log_full_set_accuracy"] = p.log_full_set_accuracy;
    if (!p.dataset_root.empty()) j["dataset_root"] = p.dataset_root;
    if (p.synth) {
        j["synth"] = {{"training_sequences", p.synth->training_sequences},
                      {"test_sequences", p.synth->test_sequences},
                      {"ekg_probability", p.synth->ekg_probability},
                      {"static_wedge_probability", p.synth->static_wedge_probability},
                      {"occlusion_probability", p.synth->occlusion_probability},
                      {"min_frames", p.synth->min_frames},
                      {"max_frames", p.synth->max_frames},
                      {"seed", p.synth_seed}};
    }
    return j;
}

/// Missing keys fall back to the desk-scale plan.
inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
    ExperimentPlan p = desk_plan();
    try {
        if (j.contains("mask_algorithms")) {
            p.mask_algorithms.clear();
            for (const auto& a : j.at("mask_algorithms")) p.mask_algorithms.push_back(maskgen::algorithm_from_string(a.get<std::string>()));
        }
        p.replicates = j.value("replicates", p.replicates);
        p.frames_per_sequence = j.value("frames_per_sequence", p.frames_per_sequence);
        p.folds = j.value("folds", p.folds);
        if (j.contains("seeds")) p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        p.representative_size = j.value("representative_size", p.representative_size);
        p.bad_mask_size = j.value("bad_mask_size", p.bad_mask_size);
        p.split_seed = j.value("split_seed", p.split_seed);
        if (j.contains("mask")) {
            const auto& m = j.at("mask");
            p.mask_params.threshold_block = m.value("block", p.mask_params.threshold_block);
            p.mask_params.threshold_offset = m.value("offset", p.mask_params.threshold_offset);
            p.mask_params.hull_on_largest_component =
                m.value("hull_on_largest_component", p.mask_params.hull_on_largest_component);
        }
        if (j.contains("reviewer")) {
            p.reviewer.min_cone_coverage = j.at("reviewer").value("min_cone_coverage", p.reviewer.min_cone_coverage);
            p.reviewer.max_background_spill =
                j.at("reviewer").value("max_background_spill", p.reviewer.max_background_spill);
        }
        if (j.contains("net")) {
            const auto& n = j.at("net");
            p.net.input_size = n.value("input_size", p.net.input_size);
            p.net.depth = n.value("depth", p.net.depth);
            p.net.base_channels = n.value("base_channels", p.net.base_channels);
            p.net.convs_per_block = n.value("convs_per_block", p.net.convs_per_block);
        }
        if (j.contains("base_train")) p.base_train = train_from_json(j.at("base_train"), p.base_train);
        if (j.contains("refine_train")) p.refine_train = train_from_json(j.at("refine_train"), p.refine_train);
        p.workers = j.value("workers", p.workers);
        p.log_full_set_accuracy = j.value("log_full_set_accuracy", p.log_full_set_accuracy);
        p.dataset_root = j.value("dataset_root", std::string{});
        if (!p.dataset_root.empty()) p.synth.reset();
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            synth::CorpusRecipe r;
            r.training_sequences = s.value("training_sequences", r.training_sequences);
            r.test_sequences = s.value("test_sequences", r.test_sequences);
            r.ekg_probability = s.value("ekg_probability", r.ekg_probability);
            r.static_wedge_probability = s.value("static_wedge_probability", r.static_wedge_probability);
            r.occlusion_probability = s.value("occlusion_probability", r.occlusion_probability);
            r.min_frames = s.value("min_frames", r.min_frames);
            r.max_frames = s.value("max_frames", r.max_frames);
            p.synth = r;
            p.synth_seed = s.value("seed", p.synth_seed);
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::malformed_document, std::string("plan: ") + ex.what());
    }
    p.validate();
    return p;
}

inline ExperimentPlan load_plan(const fs::path& path) {
    try {
        return plan_from_json(nlohmann::json::parse(read_text(path)));
    } catch (const nlohmann::json::parse_error& ex) {
        fail(ErrorCode::malformed_document, path.string() + ": " + ex.what());
    }
}

} // namespace coneboot::experiment

#endif
