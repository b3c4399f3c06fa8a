#ifndef CONEBOOT_REVIEW_HPP
#define CONEBOOT_REVIEW_HPP

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coneboot/error.hpp"
#include "coneboot/metrics.hpp"
#include "coneboot/sequence_io.hpp"

namespace coneboot::review {

enum class Decision { good, bad };

inline const char* to_string(Decision d) { return d == Decision::good ? "good" : "bad"; }

inline Decision decision_from_string(const std::string& s) {
    if (s == "good") return Decision::good;
    if (s == "bad") return Decision::bad;
    fail(ErrorCode::invalid_argument, "decision must be 'good' or 'bad', got '" + s + "'");
}

struct Verdict {
    std::string sequence_id;
    Decision decision = Decision::good;
    std::int64_t timestamp_ms = 0; // UTC
    std::int64_t elapsed_ms = 0;
    std::string reviewer;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

inline std::int64_t now_utc_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline std::string to_line(const Verdict& v) {
    nlohmann::json j{{"sequence_id", v.sequence_id},
                     {"decision", to_string(v.decision)},
                     {"timestamp", v.timestamp_ms},
                     {"elapsed_ms", v.elapsed_ms},
                     {"reviewer", v.reviewer}};
    return j.dump();
}

inline Verdict verdict_from_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        return {j.at("sequence_id").get<std::string>(), decision_from_string(j.at("decision").get<std::string>()),
                j.at("timestamp").get<std::int64_t>(), j.value("elapsed_ms", std::int64_t{0}),
                j.value("reviewer", std::string{})};
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::malformed_document, "verdict line: " + std::string(ex.what()));
    }
}

/// Append-only verdict log, one JSON record per line. With a path, each
/// append is flushed and fsync'd before it returns; without one the log
/// lives in memory only.
class VerdictLog {
public:
    VerdictLog() = default;
    explicit VerdictLog(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) entries_ = read(path_);
    }

    static std::vector<Verdict> read(const std::filesystem::path& path) {
        std::vector<Verdict> out;
        std::ifstream in(path);
        if (!in) return out;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            out.push_back(verdict_from_line(line));
        }
        return out;
    }

    void append(const Verdict& v) {
        std::lock_guard lock(mutex_);
        if (!path_.empty()) {
            std::FILE* f = std::fopen(path_.c_str(), "a");
            if (f == nullptr) fail(ErrorCode::storage_failure, "cannot open " + path_.string());
            const std::string line = to_line(v) + "\n";
            const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
                            ::fsync(::fileno(f)) == 0;
            std::fclose(f);
            if (!ok) fail(ErrorCode::storage_failure, "append to " + path_.string() + " failed");
        }
        entries_.push_back(v);
    }

    const std::vector<Verdict>& entries() const { return entries_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::vector<Verdict> entries_;
    std::mutex mutex_;
};

inline bool under_review(Split s) {
    return s == Split::unsorted || s == Split::train_good || s == Split::rejected;
}

struct ReviewQueue {
    std::vector<std::string> pending; // manifest order
    std::map<std::string, Verdict> done;
    std::int64_t last_timestamp_ms = 0;

    bool knows(const std::string& id) const {
        return done.contains(id) || std::find(pending.begin(), pending.end(), id) != pending.end();
    }
    std::size_t total() const { return pending.size() + done.size(); }
    std::size_t count(Decision d) const {
        return static_cast<std::size_t>(
            std::count_if(done.begin(), done.end(), [&](const auto& kv) { return kv.second.decision == d; }));
    }
};

struct QueueBuild {
    ReviewQueue queue;
    std::vector<std::string> skipped_unknown; // log ids not in the manifest
};

/// Replays the log over the manifest's reviewable entries; the last verdict
/// for an id wins.
inline QueueBuild build_queue(const DatasetManifest& manifest, const std::vector<Verdict>& log) {
    QueueBuild out;
    std::set<std::string> reviewable;
    for (const auto& e : manifest.entries) {
        if (under_review(e.split)) reviewable.insert(e.sequence_id);
    }
    for (const auto& v : log) {
        if (!reviewable.contains(v.sequence_id)) {
            out.skipped_unknown.push_back(v.sequence_id);
            continue;
        }
        out.queue.done[v.sequence_id] = v;
        out.queue.last_timestamp_ms = std::max(out.queue.last_timestamp_ms, v.timestamp_ms);
    }
    for (const auto& e : manifest.entries) {
        if (under_review(e.split) && !out.queue.done.contains(e.sequence_id)) {
            out.queue.pending.push_back(e.sequence_id);
        }
    }
    return out;
}

/// Durable append first, then the in-memory move pending -> done. Timestamps
/// are clamped so the log stays nondecreasing.
inline void record_verdict(ReviewQueue& queue, Verdict verdict, VerdictLog& log) {
    require(queue.knows(verdict.sequence_id), ErrorCode::unknown_id,
            "no sequence '" + verdict.sequence_id + "' under review");
    verdict.timestamp_ms = std::max(verdict.timestamp_ms, queue.last_timestamp_ms);
    log.append(verdict);
    queue.last_timestamp_ms = verdict.timestamp_ms;
    std::erase(queue.pending, verdict.sequence_id);
    queue.done[verdict.sequence_id] = verdict;
}

struct PartitionResult {
    std::vector<std::string> train_good;
    std::vector<std::string> rejected;

    double good_fraction() const {
        const std::size_t n = train_good.size() + rejected.size();
        return n ? static_cast<double>(train_good.size()) / static_cast<double>(n) : 0.0;
    }
};

/// Writes train_good / rejected splits for every decided id.
inline PartitionResult partition(DatasetManifest& manifest, const ReviewQueue& queue, bool allow_partial = false) {
    require(queue.pending.empty() || allow_partial, ErrorCode::unresolved_queue,
            std::to_string(queue.pending.size()) + " sequence(s) still pending review");
    PartitionResult out;
    for (auto& e : manifest.entries) {
        auto it = queue.done.find(e.sequence_id);
        if (it == queue.done.end() || !under_review(e.split)) continue;
        if (it->second.decision == Decision::good) {
            e.split = Split::train_good;
            out.train_good.push_back(e.sequence_id);
        } else {
            e.split = Split::rejected;
            out.rejected.push_back(e.sequence_id);
        }
    }
    return out;
}

/// Seeded draw of n ids without replacement, returned in pool order.
inline std::vector<std::string> sample_ids(std::vector<std::string> pool, std::size_t n, std::uint64_t seed) {
    require(pool.size() >= n, ErrorCode::pool_too_small,
            "need " + std::to_string(n) + " sequences, pool holds " + std::to_string(pool.size()));
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
}

/// Test-set disjointness holds by construction (one split per entry); this
/// re-checks the counts after sampling.
inline void check_testsets(const DatasetManifest& manifest) {
    check_unique_ids(manifest);
    std::set<std::string> rep;
    for (const auto& id : manifest.ids_in(Split::representative_test)) rep.insert(id);
    for (const auto& id : manifest.ids_in(Split::bad_mask_test)) {
        require(!rep.contains(id), ErrorCode::invalid_argument, "test sets overlap at '" + id + "'");
    }
}

/// Draws the representative test set from every sequence not yet in a test
/// set, before any training use.
inline std::vector<std::string> sample_representative(DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
    std::vector<std::string> pool;
    for (const auto& e : manifest.entries) {
        if (under_review(e.split)) pool.push_back(e.sequence_id);
    }
    auto picked = sample_ids(pool, n, seed);
    for (const auto& id : picked) manifest.find(id)->split = Split::representative_test;
    manifest.seed_log.push_back({"representative_test", seed});
    check_testsets(manifest);
    return picked;
}

/// Draws the bad-mask test set from rejected sequences only.
inline std::vector<std::string> sample_bad_mask(DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
    auto picked = sample_ids(manifest.ids_in(Split::rejected), n, seed);
    for (const auto& id : picked) manifest.find(id)->split = Split::bad_mask_test;
    manifest.seed_log.push_back({"bad_mask_test", seed});
    check_testsets(manifest);
    return picked;
}

/// Both test sets. The representative draw is skipped when one already
/// exists (it is taken before sorting).
inline void sample_testsets(DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
    if (manifest.ids_in(Split::representative_test).empty()) sample_representative(manifest, n, seed);
    sample_bad_mask(manifest, n, seed + 1);
}

/// Stand-in for the human reviewer in automated runs: a mask is good when it
/// covers the majority of the cone and spills onto little background.
struct SimulatedReviewer {
    double min_cone_coverage = 0.5;
    double max_background_spill = 0.05; // false-positive pixels relative to cone size

    Decision judge(const BinaryMask& mask, const BinaryMask& truth) const {
        const auto c = metrics::confusion_counts(mask, truth);
        const double cone = static_cast<double>(c.tp + c.fn);
        if (cone == 0.0) return Decision::bad;
        const bool covers = static_cast<double>(c.tp) / cone > min_cone_coverage;
        const bool clean = static_cast<double>(c.fp) / cone <= max_background_spill;
        return covers && clean ? Decision::good : Decision::bad;
    }
};

} // namespace coneboot::review

#endif
