#ifndef CONEBOOT_SEQUENCE_IO_HPP
#define CONEBOOT_SEQUENCE_IO_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/png_io.hpp"

namespace coneboot {

namespace fs = std::filesystem;

/// One ultrasound clip. Frames share dimensions; at least two frames.
struct FrameSequence {
    std::string id;
    std::vector<Frame> frames;
    int source_width = 0;
    int source_height = 0;

    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }
};

inline constexpr const char* truth_mask_name = "truth_mask.png";
inline constexpr const char* text_mask_name = "text_mask.png";

inline std::string mask_file_name(std::string_view algorithm) {
    return "mask_" + std::string(algorithm) + ".png";
}

/// PNG files in a sequence directory that hold frames: every *.png except
/// truth_mask.png, text_mask.png and mask_*.png, in lexicographic order.
inline std::vector<fs::path> frame_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") {
            continue;
        }
        const std::string name = entry.path().filename().string();
        if (name == truth_mask_name || name == text_mask_name || name.rfind("mask_", 0) == 0) {
            continue;
        }
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline FrameSequence load_sequence(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorCode::missing_path, dir.string());
    const auto files = frame_files(dir);
    require(files.size() >= 2, ErrorCode::too_few_frames,
            dir.string() + " holds " + std::to_string(files.size()) + " frame(s)");
    FrameSequence seq;
    seq.id = dir.filename().string();
    seq.frames.reserve(files.size());
    for (const auto& file : files) {
        Frame f = png::read_gray(file);
        if (!seq.frames.empty() && !f.same_shape(seq.frames.front())) {
            fail(ErrorCode::mixed_dimensions,
                 file.string() + " is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                     ", expected " + std::to_string(seq.frames.front().width) + "x" +
                     std::to_string(seq.frames.front().height));
        }
        seq.frames.push_back(std::move(f));
    }
    seq.source_width = seq.width();
    seq.source_height = seq.height();
    return seq;
}

inline void write_sequence(const fs::path& dir, const FrameSequence& seq) {
    fs::create_directories(dir);
    const int digits = std::max<int>(3, static_cast<int>(std::to_string(seq.frames.size()).size()));
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(digits) << std::setfill('0') << i << ".png";
        png::write_frame(dir / name.str(), seq.frames[i]);
    }
}

enum class Split { unsorted, train_good, rejected, representative_test, bad_mask_test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::unsorted: return "unsorted";
        case Split::train_good: return "train_good";
        case Split::rejected: return "rejected";
        case Split::representative_test: return "representative_test";
        case Split::bad_mask_test: return "bad_mask_test";
    }
    return "unsorted";
}

inline Split split_from_string(const std::string& s) {
    for (Split v : {Split::unsorted, Split::train_good, Split::rejected, Split::representative_test,
                    Split::bad_mask_test}) {
        if (s == to_string(v)) {
            return v;
        }
    }
    fail(ErrorCode::malformed_document, "unknown split '" + s + "'");
}

struct ManifestEntry {
    std::string sequence_id;
    std::string path; // relative to the dataset root
    int frame_count = 0;
    Split split = Split::unsorted;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SeedRecord {
    std::string purpose;
    std::uint64_t seed = 0;

    friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<SeedRecord> seed_log;

    const ManifestEntry* find(std::string_view id) const {
        auto it = std::find_if(entries.begin(), entries.end(),
                               [&](const ManifestEntry& e) { return e.sequence_id == id; });
        return it == entries.end() ? nullptr : &*it;
    }
    ManifestEntry* find(std::string_view id) {
        auto it = std::find_if(entries.begin(), entries.end(),
                               [&](const ManifestEntry& e) { return e.sequence_id == id; });
        return it == entries.end() ? nullptr : &*it;
    }

    std::vector<std::string> ids_in(Split s) const {
        std::vector<std::string> ids;
        for (const auto& e : entries) {
            if (e.split == s) {
                ids.push_back(e.sequence_id);
            }
        }
        return ids;
    }

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline void check_unique_ids(const DatasetManifest& m) {
    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        require(seen.insert(e.sequence_id).second, ErrorCode::duplicate_id,
                "sequence id '" + e.sequence_id + "' appears twice");
    }
}

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["entries"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        doc["entries"].push_back({{"sequence_id", e.sequence_id},
                                  {"path", e.path},
                                  {"frame_count", e.frame_count},
                                  {"split", to_string(e.split)}});
    }
    doc["seed_log"] = nlohmann::json::array();
    for (const auto& s : m.seed_log) {
        doc["seed_log"].push_back({{"purpose", s.purpose}, {"seed", s.seed}});
    }
    return doc;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& doc) {
    DatasetManifest m;
    try {
        require(doc.at("version").get<int>() == 1, ErrorCode::malformed_document,
                "unsupported manifest version");
        for (const auto& e : doc.at("entries")) {
            m.entries.push_back({e.at("sequence_id").get<std::string>(), e.at("path").get<std::string>(),
                                 e.at("frame_count").get<int>(),
                                 split_from_string(e.at("split").get<std::string>())});
        }
        if (doc.contains("seed_log")) {
            for (const auto& s : doc.at("seed_log")) {
                m.seed_log.push_back({s.at("purpose").get<std::string>(), s.at("seed").get<std::uint64_t>()});
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::malformed_document, ex.what());
    }
    check_unique_ids(m);
    return m;
}

/// Writes text atomically: a reader sees either the old or the new document.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::storage_failure, "cannot write " + tmp.string());
        out << text;
        out.flush();
        require(static_cast<bool>(out), ErrorCode::storage_failure, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorCode::storage_failure, "rename to " + path.string() + ": " + ec.message());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::missing_path, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Entry paths are checked relative to `root` (defaults to the manifest's
/// directory).
inline void write_manifest(const DatasetManifest& m, const fs::path& path,
                           std::optional<fs::path> root = std::nullopt) {
    check_unique_ids(m);
    const fs::path base = root ? *root : path.parent_path();
    for (const auto& e : m.entries) {
        require(fs::exists(base / e.path), ErrorCode::missing_path,
                "manifest entry '" + e.sequence_id + "' points at missing " + (base / e.path).string());
    }
    write_text_atomic(path, to_json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const fs::path& path) {
    const std::string text = read_text(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::malformed_document, path.string() + ": " + ex.what());
    }
    return manifest_from_json(doc);
}

/// Builds an all-unsorted manifest from `<root>/<id>/` sequence directories.
inline DatasetManifest scan_dataset(const fs::path& root) {
    require(fs::is_directory(root), ErrorCode::missing_path, root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    DatasetManifest m;
    for (const auto& dir : dirs) {
        const auto files = frame_files(dir);
        if (files.size() < 2) {
            continue;
        }
        m.entries.push_back({dir.filename().string(), dir.filename().string(),
                             static_cast<int>(files.size()), Split::unsorted});
    }
    return m;
}

} // namespace coneboot

#endif
