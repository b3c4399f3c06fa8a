#ifndef CONEBOOT_REPORT_HPP
#define CONEBOOT_REPORT_HPP

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coneboot/experiment.hpp"
#include "coneboot/stats.hpp"

namespace coneboot::report {

using experiment::RunResult;
using experiment::Stage;
using maskgen::Algorithm;

inline constexpr std::array<Stage, 4> model_stages{Stage::base, Stage::fold_1, Stage::fold_2, Stage::fold_3};

inline const char* stage_label(Stage s) {
    switch (s) {
        case Stage::cv_only: return "CV masks";
        case Stage::base: return "Base";
        case Stage::fold_1: return "1st ref.";
        case Stage::fold_2: return "2nd ref.";
        case Stage::fold_3: return "3rd ref.";
    }
    return "";
}

inline const char* algorithm_label(Algorithm a) {
    switch (a) {
        case Algorithm::threshold: return "Threshold";
        case Algorithm::filled: return "Filled Threshold";
        case Algorithm::hull: return "Hull";
    }
    return "";
}

struct DeidCount {
    int pass = 0;
    int total = 0;
    int static_pass = 0;
    int static_total = 0;

    double rate() const { return total ? static_cast<double>(pass) / total : 0.0; }
    double static_rate() const { return static_total ? static_cast<double>(static_pass) / static_total : 0.0; }
};

/// Replicate distributions for one algorithm.
struct AlgorithmSummary {
    std::optional<double> cv_representative;
    std::optional<double> cv_bad;
    DeidCount cv_deid;
    std::map<Stage, stats::SampleSet> representative;
    std::map<Stage, stats::SampleSet> bad;
    std::map<Stage, DeidCount> deid;

    bool complete() const {
        for (Stage s : model_stages) {
            auto it = representative.find(s);
            if (it == representative.end() || it->second.values.size() < 2) return false;
        }
        return true;
    }

    double mean(Stage s, bool bad_set = false) const {
        const auto& m = bad_set ? bad : representative;
        return stats::mean_var(m.at(s)).mean;
    }

    /// Base / 1st / 2nd / 3rd pairwise family, Holm-corrected together.
    stats::ComparisonReport comparisons(bool bad_set) const {
        const auto& m = bad_set ? bad : representative;
        std::vector<stats::SampleSet> sets;
        for (Stage s : model_stages) sets.push_back(m.at(s));
        return stats::compare_all_pairs(sets);
    }
};

struct Summary {
    std::map<Algorithm, AlgorithmSummary> algorithms;

    const AlgorithmSummary* find(Algorithm a) const {
        auto it = algorithms.find(a);
        return it == algorithms.end() ? nullptr : &it->second;
    }
};

inline Summary summarize(const std::vector<RunResult>& results) {
    Summary out;
    for (const auto& r : results) {
        auto& a = out.algorithms[r.algorithm];
        if (r.stage == Stage::cv_only) {
            a.cv_representative = r.representative_accuracy;
            a.cv_bad = r.bad_accuracy;
            a.cv_deid = {r.deid_pass, r.deid_total, r.deid_static_pass, r.deid_static_total};
            continue;
        }
        auto& rep = a.representative[r.stage];
        auto& bad = a.bad[r.stage];
        rep.label = bad.label = stage_label(r.stage);
        rep.values.push_back(r.representative_accuracy);
        bad.values.push_back(r.bad_accuracy);
        auto& d = a.deid[r.stage];
        d.pass += r.deid_pass;
        d.total += r.deid_total;
        d.static_pass += r.deid_static_pass;
        d.static_total += r.deid_static_total;
    }
    return out;
}

inline std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

inline std::string format_p(double p, bool significant) {
    char buf[32];
    if (p < 1e-8) std::snprintf(buf, sizeof buf, "<1e-08");
    else std::snprintf(buf, sizeof buf, "%.2e", p);
    return std::string(buf) + (significant ? "*" : "");
}

namespace detail {

inline std::vector<Algorithm> complete_algorithms(const Summary& s) {
    std::vector<Algorithm> out;
    for (const auto& [a, sum] : s.algorithms) {
        if (sum.complete()) out.push_back(a);
    }
    return out;
}

inline void accuracy_table(std::string& md, const Summary& s, const std::vector<Algorithm>& algs, bool bad_set) {
    md += "| Model |";
    for (Algorithm a : algs) md += std::string(" ") + algorithm_label(a) + " mean acc | 95% CI |";
    md += "\n|---|";
    for (std::size_t i = 0; i < algs.size(); ++i) md += "---:|---|";
    md += "\n| " + std::string(stage_label(Stage::cv_only)) + " |";
    for (Algorithm a : algs) {
        const auto& sum = s.algorithms.at(a);
        const auto& cv = bad_set ? sum.cv_bad : sum.cv_representative;
        md += " " + (cv ? percent(*cv) : std::string("n/a")) + " | |";
    }
    md += "\n";
    for (Stage st : model_stages) {
        md += std::string("| ") + stage_label(st) + " |";
        for (Algorithm a : algs) {
            const auto& set = (bad_set ? s.algorithms.at(a).bad : s.algorithms.at(a).representative).at(st);
            const auto ci = stats::confidence_interval_95(set);
            md += " " + percent(stats::mean_var(set).mean) + " | (" + percent(ci.low) + ", " + percent(ci.high) + ") |";
        }
        md += "\n";
    }
}

inline void significance_table(std::string& md, const Summary& s, const std::vector<Algorithm>& algs, bool bad_set) {
    md += "| Model comparison |";
    for (Algorithm a : algs) md += std::string(" ") + algorithm_label(a) + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < algs.size(); ++i) md += "---|";
    md += "\n";
    std::vector<stats::ComparisonReport> reports;
    for (Algorithm a : algs) reports.push_back(s.algorithms.at(a).comparisons(bad_set));
    const std::size_t pairs = reports.empty() ? 0 : reports.front().pairs.size();
    for (std::size_t i = 0; i < pairs; ++i) {
        md += "| " + reports.front().pairs[i].label_a + " vs. " + reports.front().pairs[i].label_b + " |";
        for (const auto& r : reports) md += " " + format_p(r.pairs[i].test.p, r.significant[i]) + " |";
        md += "\n";
    }
    if (!reports.empty()) {
        char alpha[24];
        std::snprintf(alpha, sizeof alpha, "%g", reports.front().alpha);
        md += std::string("\nHolm-Bonferroni thresholds (alpha ") + alpha + "):";
        for (double t : reports.front().holm_thresholds) {
            char buf[24];
            std::snprintf(buf, sizeof buf, " %.2e", t);
            md += buf;
        }
        md += "\n";
    }
}

} // namespace detail

/// Markdown report: accuracy and significance tables for the representative
/// and bad-mask test sets, followed by de-identification counts.
inline std::string markdown(const std::vector<RunResult>& results) {
    const Summary s = summarize(results);
    const auto algs = detail::complete_algorithms(s);
    std::string md = "# Experiment report\n\n";
    if (algs.empty()) {
        md += "No algorithm has at least two replicates for every model stage.\n";
        return md;
    }
    const std::size_t n = s.algorithms.at(algs.front()).representative.at(Stage::base).values.size();
    md += "Accuracies are mean per-frame pixel accuracy in percent over n=" + std::to_string(n) +
          " replicates. p-values come from two-sided pooled-variance Student t-tests; `*` marks comparisons that "
          "survive Holm-Bonferroni correction across the six comparisons in each column.\n\n";
    md += "## Table 1. Representative test set accuracy\n\n";
    detail::accuracy_table(md, s, algs, false);
    md += "\n## Table 2. Significance on the representative test set\n\n";
    detail::significance_table(md, s, algs, false);
    md += "\n## Table 3. Bad-mask test set accuracy\n\n";
    detail::accuracy_table(md, s, algs, true);
    md += "\n## Table 4. Significance on the bad-mask test set\n\n";
    detail::significance_table(md, s, algs, true);
    md += "\n## De-identification on the bad-mask test set\n\n";
    md += "A frame passes when its predicted mask excludes every sensitive pixel. Static-only frames carry no moving "
          "clutter in their sensitive region.\n\n";
    md += "| Algorithm | Model | Frames passed | Rate | Static-only passed | Static-only rate |\n";
    md += "|---|---|---:|---:|---:|---:|\n";
    for (Algorithm a : algs) {
        const auto& sum = s.algorithms.at(a);
        auto row = [&](Stage st, const DeidCount& d) {
            md += std::string("| ") + algorithm_label(a) + " | " + stage_label(st) + " | " + std::to_string(d.pass) +
                  "/" + std::to_string(d.total) + " | " + percent(d.rate()) + "% | " + std::to_string(d.static_pass) +
                  "/" + std::to_string(d.static_total) + " | " + percent(d.static_rate()) + "% |\n";
        };
        if (sum.cv_representative) row(Stage::cv_only, sum.cv_deid);
        for (Stage st : model_stages) row(st, sum.deid.at(st));
    }
    return md;
}

} // namespace coneboot::report

#endif
