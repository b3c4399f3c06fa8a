// coneboot command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "coneboot/error.hpp"
#include "coneboot/experiment.hpp"
#include "coneboot/log.hpp"
#include "coneboot/maskgen.hpp"
#include "coneboot/metrics.hpp"
#include "coneboot/png_io.hpp"
#include "coneboot/report.hpp"
#include "coneboot/review.hpp"
#include "coneboot/review_server.hpp"
#include "coneboot/segnet/train.hpp"
#include "coneboot/segnet/unet.hpp"
#include "coneboot/segnet/weights_io.hpp"
#include "coneboot/sequence_io.hpp"
#include "coneboot/synthcone.hpp"

namespace fs = std::filesystem;
using namespace coneboot;

namespace {

constexpr const char* manifest_name = "manifest.json";
constexpr const char* config_snapshot_name = "effective_config.json";

/// Every option of a subcommand (defaults included) as JSON.
nlohmann::json option_snapshot(const CLI::App& cmd) {
    nlohmann::json opts = nlohmann::json::object();
    for (const CLI::Option* opt : cmd.get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
        std::string name = opt->get_name(false, true);
        while (!name.empty() && name.front() == '-') name.erase(0, 1);
        const auto& results = opt->results();
        if (results.empty()) {
            opts[name] = opt->get_default_str();
        } else if (results.size() == 1) {
            opts[name] = results.front();
        } else {
            opts[name] = results;
        }
    }
    return opts;
}

void write_snapshot(const fs::path& dir, const std::string& command, nlohmann::json config) {
    fs::create_directories(dir);
    nlohmann::json doc{{"command", command}, {"config", std::move(config)}};
    write_text_atomic(dir / config_snapshot_name, doc.dump(2) + "\n");
}

DatasetManifest manifest_for(const fs::path& root) {
    const fs::path path = root / manifest_name;
    return fs::exists(path) ? load_manifest(path) : scan_dataset(root);
}

std::vector<maskgen::Algorithm> parse_algorithms(const std::string& s) {
    if (s == "all") return {maskgen::all_algorithms.begin(), maskgen::all_algorithms.end()};
    return {maskgen::algorithm_from_string(s)};
}

struct NetFlags {
    segnet::NetConfig net;
    segnet::TrainConfig train;
    int frames = 10;
    std::uint64_t seed = 0;
};

/// Refinement inherits the architecture from its weights, so it omits the
/// shape flags.
void add_net_flags(CLI::App* cmd, NetFlags& f, bool shape) {
    if (shape) {
        cmd->add_option("--input-size", f.net.input_size, "Network input side length")->capture_default_str();
        cmd->add_option("--depth", f.net.depth, "Encoder levels")->capture_default_str();
        cmd->add_option("--channels", f.net.base_channels, "Channels at the first level")->capture_default_str();
        cmd->add_option("--convs", f.net.convs_per_block, "3x3 convolutions per block")->capture_default_str();
    }
    cmd->add_option("--epochs", f.train.epochs)->capture_default_str();
    cmd->add_option("--lr", f.train.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", f.train.batch_size)->capture_default_str();
    cmd->add_option("--val", f.train.validation_fraction, "Validation fraction")->capture_default_str();
    cmd->add_option("--eval-every", f.train.eval_every)->capture_default_str();
    cmd->add_option("--frames", f.frames, "Frames sampled per sequence")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Seed for frame sampling, initialization and shuffling")->capture_default_str();
}

/// (frame, label) pairs from sequence directories. `label_file` names the
/// per-sequence mask PNG used as the target.
std::vector<segnet::TrainPair> load_pairs(const fs::path& root, const DatasetManifest& m,
                                          const std::vector<std::string>& ids, const std::string& label_file,
                                          const NetFlags& f) {
    std::vector<segnet::TrainPair> pairs;
    for (const auto& id : ids) {
        const fs::path dir = root / m.find(id)->path;
        const FrameSequence seq = load_sequence(dir);
        const BinaryMask label =
            resize_nearest(png::read_mask(dir / label_file), f.net.input_size, f.net.input_size);
        for (const Frame& frame : experiment::select_frames(seq, f.frames, f.seed)) {
            pairs.push_back({segnet::prepare_input(frame, f.net.input_size), label});
        }
    }
    return pairs;
}

std::vector<segnet::EvalItem> load_eval(const fs::path& root, const DatasetManifest& m,
                                        const std::vector<std::string>& ids, const NetFlags& f) {
    std::vector<segnet::EvalItem> items;
    for (const auto& id : ids) {
        const fs::path dir = root / m.find(id)->path;
        if (!fs::exists(dir / truth_mask_name)) {
            spdlog::warn("'{}' has no {}; left out of evaluation", id, truth_mask_name);
            continue;
        }
        const FrameSequence seq = load_sequence(dir);
        const BinaryMask truth = png::read_mask(dir / truth_mask_name);
        for (const Frame& frame : experiment::select_frames(seq, f.frames, f.seed)) {
            items.push_back({segnet::prepare_input(frame, f.net.input_size), truth});
        }
    }
    return items;
}

nlohmann::json training_snapshot(const CLI::App& cmd, const NetFlags& f) {
    nlohmann::json j = option_snapshot(cmd);
    j["net"] = experiment::net_to_json(f.net);
    j["train"] = experiment::train_to_json(f.train);
    j["train"]["seed"] = f.train.seed;
    return j;
}

void save_training(const fs::path& out, const segnet::TrainResult<float>& result) {
    fs::create_directories(out);
    segnet::save_weights(result.weights, out / "weights.cbw");
    write_text_atomic(out / "curve.csv", segnet::curve_csv(result.curve));
    if (!result.curve.empty()) {
        const auto& last = result.curve.back();
        std::cout << "epoch " << last.epoch << ": train loss " << last.train_loss << ", validation loss "
                  << last.validation_loss << ", test accuracy " << last.test_accuracy << "\n";
    }
}

int run_report(const fs::path& results, const std::optional<fs::path>& out) {
    const std::string md = report::markdown(experiment::load_results(results));
    if (out) {
        write_text_atomic(*out, md);
    } else {
        std::cout << md;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coneboot: bootstrap ultrasound cone segmentation labels from computer-vision masks"};
    app.require_subcommand(1);
    std::string log_level;
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off (default: $CONEBOOT_LOG or info)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with truth and text masks");
    fs::path synth_out;
    std::uint64_t synth_seed = 2024;
    synth::CorpusRecipe recipe;
    synth_cmd->add_option("--out", synth_out, "Dataset root to create")->required();
    synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
    synth_cmd->add_option("--train", recipe.training_sequences, "Training-pool sequences")->capture_default_str();
    synth_cmd->add_option("--test", recipe.test_sequences, "Additional sequences for the test pools")
        ->capture_default_str();
    synth_cmd->add_option("--ekg", recipe.ekg_probability, "Probability of an EKG trace")->capture_default_str();
    synth_cmd->add_option("--wedge", recipe.static_wedge_probability, "Probability of a motionless wedge")
        ->capture_default_str();
    synth_cmd->add_option("--occlusion", recipe.occlusion_probability)->capture_default_str();
    synth_cmd->add_option("--min-frames", recipe.min_frames)->capture_default_str();
    synth_cmd->add_option("--max-frames", recipe.max_frames)->capture_default_str();

    // maskgen
    auto* mask_cmd = app.add_subcommand("maskgen", "Write mask_<algo>.png for every sequence");
    fs::path mask_root;
    std::string mask_algo = "all";
    maskgen::MaskAlgorithm mask_params;
    mask_cmd->add_option("root", mask_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
    mask_cmd->add_option("--algo", mask_algo, "threshold, filled, hull or all")
        ->capture_default_str()
        ->check(CLI::IsMember({"threshold", "filled", "hull", "all"}));
    mask_cmd->add_option("--block", mask_params.threshold_block, "Adaptive threshold block size (odd)")
        ->capture_default_str();
    mask_cmd->add_option("--offset", mask_params.threshold_offset, "Added to the local mean")->capture_default_str();
    mask_cmd->add_flag("--largest-component", mask_params.hull_on_largest_component,
                       "Hull only the largest connected component");

    // review
    auto* review_cmd = app.add_subcommand("review", "Triage masks");
    review_cmd->require_subcommand(1);
    auto* serve_cmd = review_cmd->add_subcommand("serve", "Serve the review HTTP API");
    review::ServerConfig serve_cfg;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    fs::path ui_dir;
    serve_cmd->add_option("root", serve_cfg.dataset_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--algo", serve_cfg.mask_algorithm, "Mask shown to the reviewer")->capture_default_str();
    serve_cmd->add_option("--host", serve_host)->capture_default_str();
    serve_cmd->add_option("--port", serve_port)->capture_default_str();
    serve_cmd->add_option("--ui", ui_dir, "Static UI directory served at /")->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--reviewer", serve_cfg.reviewer)->capture_default_str();

    auto* partition_cmd = review_cmd->add_subcommand("partition", "Write train_good / rejected splits");
    fs::path partition_root;
    bool allow_partial = false;
    partition_cmd->add_option("root", partition_root)->required()->check(CLI::ExistingDirectory);
    partition_cmd->add_flag("--allow-partial", allow_partial, "Partition even with pending sequences");

    auto* simulate_cmd =
        review_cmd->add_subcommand("simulate", "Record verdicts from truth masks instead of a human reviewer");
    fs::path simulate_root;
    std::string simulate_algo = "hull";
    review::SimulatedReviewer simulated;
    simulate_cmd->add_option("root", simulate_root)->required()->check(CLI::ExistingDirectory);
    simulate_cmd->add_option("--algo", simulate_algo)->capture_default_str();
    simulate_cmd->add_option("--min-coverage", simulated.min_cone_coverage)->capture_default_str();
    simulate_cmd->add_option("--max-spill", simulated.max_background_spill)->capture_default_str();

    // testset
    auto* testset_cmd = app.add_subcommand("testset", "Hand-labeled test sets");
    testset_cmd->require_subcommand(1);
    auto* sample_cmd = testset_cmd->add_subcommand("sample", "Sample the representative and bad-mask test sets");
    fs::path sample_root;
    std::size_t sample_n = 33;
    std::uint64_t sample_seed = 0;
    std::string sample_which = "both";
    sample_cmd->add_option("root", sample_root)->required()->check(CLI::ExistingDirectory);
    sample_cmd->add_option("--n", sample_n, "Sequences per test set")->capture_default_str();
    sample_cmd->add_option("--seed", sample_seed)->capture_default_str();
    sample_cmd->add_option("--set", sample_which, "representative, bad or both")
        ->capture_default_str()
        ->check(CLI::IsMember({"representative", "bad", "both"}));

    // train
    auto* train_cmd = app.add_subcommand("train", "Train segmentation models");
    train_cmd->require_subcommand(1);
    auto* base_cmd = train_cmd->add_subcommand("base", "Train from scratch on reviewed-good CV masks");
    fs::path base_root;
    fs::path base_out;
    std::string base_algo = "hull";
    NetFlags base_flags;
    base_cmd->add_option("root", base_root)->required()->check(CLI::ExistingDirectory);
    base_cmd->add_option("--algo", base_algo, "Mask algorithm used as labels")->capture_default_str();
    base_cmd->add_option("--out", base_out, "Output directory")->required();
    add_net_flags(base_cmd, base_flags, true);

    auto* refine_cmd = train_cmd->add_subcommand("refine", "Continue training on hand-labeled test sequences");
    fs::path refine_root;
    fs::path refine_out;
    fs::path refine_weights;
    int refine_fold = 1;
    int refine_folds = 3;
    std::uint64_t refine_split_seed = 7;
    NetFlags refine_flags;
    refine_cmd->add_option("root", refine_root)->required()->check(CLI::ExistingDirectory);
    refine_cmd->add_option("--weights", refine_weights, "Base model weights")->required()->check(CLI::ExistingFile);
    refine_cmd->add_option("--out", refine_out)->required();
    refine_cmd->add_option("--fold", refine_fold, "Held-out group (1-based)")->capture_default_str();
    refine_cmd->add_option("--folds", refine_folds)->capture_default_str();
    refine_cmd->add_option("--split-seed", refine_split_seed, "Seed of the fold partition")->capture_default_str();
    add_net_flags(refine_cmd, refine_flags, false);

    // experiment / report
    auto* exp_cmd = app.add_subcommand("experiment", "Replicated base + refinement experiment");
    exp_cmd->require_subcommand(1);
    auto* run_cmd = exp_cmd->add_subcommand("run", "Run a plan");
    fs::path plan_path;
    fs::path run_out = "experiment_out";
    std::optional<int> run_workers;
    std::optional<std::uint64_t> run_seed;
    run_cmd->add_option("--plan", plan_path, "Plan JSON; missing keys use the desk-scale plan")
        ->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run_out)->capture_default_str();
    run_cmd->add_option("--workers", run_workers, "Parallel (algorithm, replicate) jobs");
    run_cmd->add_option("--seed", run_seed, "Overrides the plan's split seed");

    fs::path report_results;
    std::optional<fs::path> report_out;
    auto* exp_report_cmd = exp_cmd->add_subcommand("report", "Markdown tables from a results CSV");
    exp_report_cmd->add_option("--results", report_results)->required()->check(CLI::ExistingFile);
    exp_report_cmd->add_option("--out", report_out, "Write here instead of stdout");
    auto* report_cmd = app.add_subcommand("report", "Same as `experiment report`");
    report_cmd->add_option("--results", report_results)->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out", report_out, "Write here instead of stdout");

    // deid
    auto* deid_cmd = app.add_subcommand("deid", "De-identify frames");
    deid_cmd->require_subcommand(1);
    auto* apply_cmd = deid_cmd->add_subcommand("apply", "Zero every pixel outside the predicted cone");
    fs::path deid_weights;
    fs::path deid_in;
    fs::path deid_out;
    bool deid_save_masks = false;
    apply_cmd->add_option("--weights", deid_weights)->required()->check(CLI::ExistingFile);
    apply_cmd->add_option("--in", deid_in, "Directory of PNG frames (searched recursively)")
        ->required()
        ->check(CLI::ExistingDirectory);
    apply_cmd->add_option("--out", deid_out)->required();
    apply_cmd->add_flag("--save-masks", deid_save_masks, "Also write the predicted masks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    configure_logging(log_level);

    try {
        if (*synth_cmd) {
            recipe.training_sequences = std::max(0, recipe.training_sequences);
            fs::create_directories(synth_out);
            for (const auto& item : synth::corpus_plan(recipe, synth_seed)) {
                synth::write_synthetic(synth_out, synth::generate_sequence(item.params, item.seed, item.id));
            }
            DatasetManifest m = scan_dataset(synth_out);
            m.seed_log.push_back({"synth", synth_seed});
            write_manifest(m, synth_out / manifest_name);
            write_snapshot(synth_out, "synth", option_snapshot(*synth_cmd));
            std::cout << "wrote " << m.entries.size() << " sequences to " << synth_out.string() << "\n";
        } else if (*mask_cmd) {
            const auto algos = parse_algorithms(mask_algo);
            const DatasetManifest m = manifest_for(mask_root);
            for (const auto& e : m.entries) {
                const fs::path dir = mask_root / e.path;
                const auto masks = maskgen::generate_all_masks(load_sequence(dir), mask_params);
                for (auto a : algos) png::write_mask(dir / mask_file_name(maskgen::to_string(a)), masks.get(a));
            }
            write_snapshot(mask_root, "maskgen", option_snapshot(*mask_cmd));
            std::cout << "masked " << m.entries.size() << " sequences\n";
        } else if (*serve_cmd) {
            if (!ui_dir.empty()) serve_cfg.ui_dir = ui_dir;
            review::ReviewServer server(serve_cfg, manifest_for(serve_cfg.dataset_root));
            spdlog::info("review API on http://{}:{}/api/queue", serve_host, serve_port);
            server.listen(serve_host, serve_port);
        } else if (*partition_cmd) {
            DatasetManifest m = manifest_for(partition_root);
            auto built = review::build_queue(m, review::VerdictLog::read(partition_root / review::verdict_log_name));
            for (const auto& id : built.skipped_unknown) spdlog::warn("unknown sequence '{}' in verdict log", id);
            const auto part = review::partition(m, built.queue, allow_partial);
            write_manifest(m, partition_root / manifest_name);
            std::cout << "train_good " << part.train_good.size() << ", rejected " << part.rejected.size()
                      << ", good fraction " << part.good_fraction() << "\n";
        } else if (*simulate_cmd) {
            const DatasetManifest m = manifest_for(simulate_root);
            review::VerdictLog log(simulate_root / review::verdict_log_name);
            auto queue = review::build_queue(m, log.entries()).queue;
            const std::vector<std::string> pending = queue.pending;
            for (const auto& id : pending) {
                const fs::path dir = simulate_root / m.find(id)->path;
                const auto mask = png::read_mask(dir / mask_file_name(simulate_algo));
                const auto truth = png::read_mask(dir / truth_mask_name);
                review::record_verdict(queue, {id, simulated.judge(mask, truth), review::now_utc_ms(), 0, "simulated"},
                                       log);
            }
            std::cout << "recorded " << pending.size() << " verdicts (" << queue.count(review::Decision::good)
                      << " good overall)\n";
        } else if (*sample_cmd) {
            DatasetManifest m = manifest_for(sample_root);
            if (sample_which == "representative" || sample_which == "both") {
                if (m.ids_in(Split::representative_test).empty()) {
                    review::sample_representative(m, sample_n, sample_seed);
                } else if (sample_which == "representative") {
                    fail(ErrorCode::invalid_argument, "representative test set already sampled");
                }
            }
            if (sample_which == "bad" || sample_which == "both") review::sample_bad_mask(m, sample_n, sample_seed + 1);
            write_manifest(m, sample_root / manifest_name);
            std::cout << "representative " << m.ids_in(Split::representative_test).size() << ", bad-mask "
                      << m.ids_in(Split::bad_mask_test).size() << "\n";
        } else if (*base_cmd) {
            const DatasetManifest m = manifest_for(base_root);
            const auto good = m.ids_in(Split::train_good);
            require(!good.empty(), ErrorCode::invalid_argument, "manifest has no train_good sequences; run review first");
            const auto pairs = load_pairs(base_root, m, good, mask_file_name(base_algo), base_flags);
            const auto test = load_eval(base_root, m, m.ids_in(Split::representative_test), base_flags);
            base_flags.train.seed = base_flags.seed;
            const auto result = segnet::train<float>(base_flags.net, pairs, test, base_flags.train);
            save_training(base_out, result);
            write_snapshot(base_out, "train base", training_snapshot(*base_cmd, base_flags));
        } else if (*refine_cmd) {
            const DatasetManifest m = manifest_for(refine_root);
            auto weights = segnet::load_weights<float>(refine_weights);
            refine_flags.net = weights.config;
            require(refine_fold >= 1 && refine_fold <= refine_folds, ErrorCode::invalid_argument,
                    "--fold must lie in 1.." + std::to_string(refine_folds));
            const auto groups =
                experiment::fold_groups(m.ids_in(Split::representative_test), refine_folds, refine_split_seed);
            std::vector<std::string> refine_ids;
            for (int g = 0; g < refine_folds; ++g) {
                if (g + 1 == refine_fold) continue;
                refine_ids.insert(refine_ids.end(), groups[g].begin(), groups[g].end());
            }
            const auto pairs = load_pairs(refine_root, m, refine_ids, truth_mask_name, refine_flags);
            const auto test = load_eval(refine_root, m, groups[refine_fold - 1], refine_flags);
            refine_flags.train.seed = refine_flags.seed;
            const auto result =
                segnet::train<float>(refine_flags.net, pairs, test, refine_flags.train, std::move(weights));
            save_training(refine_out, result);
            write_snapshot(refine_out, "train refine", training_snapshot(*refine_cmd, refine_flags));
        } else if (*run_cmd) {
            experiment::ExperimentPlan plan =
                plan_path.empty() ? experiment::desk_plan() : experiment::load_plan(plan_path);
            if (run_workers) plan.workers = *run_workers;
            if (run_seed) plan.split_seed = *run_seed;
            plan.validate();
            fs::create_directories(run_out);
            write_snapshot(run_out, "experiment run", experiment::plan_to_json(plan));
            const auto results = experiment::run_experiment(plan);
            experiment::persist_results(results, run_out / "results.csv");
            write_text_atomic(run_out / "timings.csv", experiment::timings_csv(results));
            write_text_atomic(run_out / "report.md", report::markdown(results));
            std::cout << "results in " << (run_out / "results.csv").string() << ", report in "
                      << (run_out / "report.md").string() << "\n";
        } else if (*exp_report_cmd || *report_cmd) {
            return run_report(report_results, report_out);
        } else if (*apply_cmd) {
            const auto weights = segnet::load_weights<float>(deid_weights);
            const segnet::UNet<float> net(weights.config);
            std::size_t count = 0;
            std::vector<fs::path> inputs;
            for (const auto& entry : fs::recursive_directory_iterator(deid_in)) {
                if (entry.is_regular_file() && entry.path().extension() == ".png") inputs.push_back(entry.path());
            }
            std::sort(inputs.begin(), inputs.end());
            for (const auto& path : inputs) {
                const Frame frame = png::read_gray(path);
                const BinaryMask mask = segnet::predict_mask(
                    net, weights, segnet::prepare_input(frame, weights.config.input_size), frame.width, frame.height);
                const fs::path target = deid_out / fs::relative(path, deid_in);
                fs::create_directories(target.parent_path());
                png::write_frame(target, metrics::apply_mask(frame, mask));
                if (deid_save_masks) {
                    fs::path mask_path = target;
                    mask_path.replace_extension(".mask.png");
                    png::write_mask(mask_path, mask);
                }
                ++count;
            }
            write_snapshot(deid_out, "deid apply", option_snapshot(*apply_cmd));
            std::cout << "de-identified " << count << " frames\n";
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
