#ifndef CONEBOOT_SYNTHCONE_HPP
#define CONEBOOT_SYNTHCONE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/sequence_io.hpp"

namespace coneboot::synth {

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool contains(int px, int py) const { return px >= x && py >= y && px < x + width && py < y + height; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Geometry fields (size, apex, angle, radius, rotation, occlusion) alone
/// determine the truth mask. Intensity and motion fields only shape frames.
struct SynthParams {
    int width = 128;
    int height = 96;
    double apex_x = 64.0;
    double apex_y = 4.0;
    double half_angle_deg = 35.0;
    double radius = 80.0;
    double rotation_deg = 0.0; // 0 points the cone axis down the image
    double speckle_amplitude = 0.6;
    double motion_amplitude = 0.85; // probability a near-field cone pixel changes between frames
    double far_field_dropout = 0.7; // relative loss of motion toward the far arc
    std::optional<std::pair<double, double>> static_wedge; // fraction of the angular span with no motion
    double near_intensity = 200.0;
    double far_intensity = 120.0;
    int n_frames = 12;
    std::vector<Rect> text_regions{{2, 2, 22, 8}, {104, 2, 22, 8}};
    bool ekg_enabled = false;
    Rect ekg_band{8, 86, 112, 8};
    int ekg_speed = 3; // pixels per frame
    std::optional<Rect> occlusion;

    void validate() const {
        require(width >= 1 && height >= 1, ErrorCode::invalid_argument, "synthetic image size");
        require(radius > 0.0 && half_angle_deg > 0.0, ErrorCode::invalid_argument,
                "degenerate cone sector (radius and half-angle must be > 0)");
        require(half_angle_deg < 90.0, ErrorCode::invalid_argument, "half-angle must be below 90 degrees");
        require(n_frames >= 2, ErrorCode::invalid_argument, "n_frames must be >= 2");
        require(speckle_amplitude >= 0.0 && speckle_amplitude <= 1.0 && motion_amplitude >= 0.0 &&
                    motion_amplitude <= 1.0 && far_field_dropout >= 0.0 && far_field_dropout <= 1.0,
                ErrorCode::invalid_argument, "amplitudes must lie in [0, 1]");
    }
};

struct SyntheticSequence {
    FrameSequence sequence;
    BinaryMask truth;
    BinaryMask text_mask;
    BinaryMask ekg_mask;
    std::size_t text_truth_overlap = 0; // pixels where text or EKG meets the cone
};

/// Position of a pixel center relative to the cone: normalized radius and
/// signed angle as a fraction of the half-angle, or nullopt outside.
struct SectorCoord {
    double rho = 0.0;
    double angle_fraction = 0.0; // -1 .. 1 across the sector
};

inline std::optional<SectorCoord> sector_coord(const SynthParams& p, double x, double y) {
    const double dx = x - p.apex_x;
    const double dy = y - p.apex_y;
    const double r = std::hypot(dx, dy);
    if (r > p.radius) return std::nullopt;
    if (r == 0.0) return SectorCoord{0.0, 0.0};
    const double rot = p.rotation_deg * std::numbers::pi / 180.0;
    const double ax = std::sin(rot);
    const double ay = std::cos(rot);
    const double along = (dx * ax + dy * ay) / r;
    const double across = (dx * ay - dy * ax) / r;
    const double angle = std::atan2(across, along);
    const double half = p.half_angle_deg * std::numbers::pi / 180.0;
    if (std::abs(angle) > half) return std::nullopt;
    return SectorCoord{r / p.radius, angle / half};
}

/// Cone sector clipped to the image, minus the occlusion.
inline BinaryMask truth_mask(const SynthParams& p) {
    p.validate();
    BinaryMask truth(p.width, p.height);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            if (p.occlusion && p.occlusion->contains(x, y)) continue;
            truth.set(x, y, sector_coord(p, x, y).has_value());
        }
    }
    return truth;
}

inline BinaryMask rect_mask(int w, int h, const std::vector<Rect>& rects) {
    BinaryMask m(w, h);
    for (const Rect& r : rects) {
        for (int y = std::max(0, r.y); y < std::min(h, r.y + r.height); ++y) {
            for (int x = std::max(0, r.x); x < std::min(w, r.x + r.width); ++x) m.set(x, y, true);
        }
    }
    return m;
}

/// Vertical position of the EKG trace at column x, for a trace shifted by
/// `phase` pixels.
inline int ekg_row(const Rect& band, int x, int phase) {
    const int period = 28;
    const int t = ((x + phase) % period + period) % period;
    const int mid = band.y + band.height / 2;
    if (t == 10) return band.y;                     // R spike
    if (t == 11) return band.y + band.height - 1;   // S dip
    if (t >= 18 && t <= 22) return mid - 1;         // T wave
    return mid;
}

inline SyntheticSequence generate_sequence(const SynthParams& p, std::uint64_t seed, std::string id = "synthetic") {
    p.validate();
    SyntheticSequence out;
    out.truth = truth_mask(p);
    out.text_mask = rect_mask(p.width, p.height, p.text_regions);
    out.ekg_mask = BinaryMask(p.width, p.height);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = static_cast<std::size_t>(p.width) * p.height;

    // Per-pixel static state: base intensity, whether it moves, frozen speckle.
    std::vector<double> base(n, 0.0);
    std::vector<std::uint8_t> dynamic(n, 0);
    std::vector<double> frozen(n, 0.0);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * p.width + x;
            const double u_dyn = unit(rng);
            const double u_frozen = unit(rng);
            if (!out.truth.bits[i]) continue;
            const SectorCoord c = *sector_coord(p, x, y);
            base[i] = p.near_intensity * (1.0 - c.rho) + p.far_intensity * c.rho;
            const double far = std::clamp((c.rho - 0.65) / 0.35, 0.0, 1.0);
            double p_dyn = p.motion_amplitude * (1.0 - p.far_field_dropout * far);
            if (p.static_wedge) {
                const double a = 0.5 * (c.angle_fraction + 1.0);
                if (a >= p.static_wedge->first && a <= p.static_wedge->second) p_dyn = 0.0;
            }
            dynamic[i] = u_dyn < p_dyn ? 1 : 0;
            frozen[i] = u_frozen;
        }
    }
    // Glyph dithering inside text blocks is fixed for the whole clip.
    std::vector<double> text_value(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = unit(rng);
        if (out.text_mask.bits[i]) text_value[i] = u < 0.65 ? 235.0 + 20.0 * unit(rng) : 40.0;
    }

    out.sequence.id = std::move(id);
    out.sequence.source_width = p.width;
    out.sequence.source_height = p.height;
    for (int f = 0; f < p.n_frames; ++f) {
        Frame frame(p.width, p.height);
        for (std::size_t i = 0; i < n; ++i) {
            if (out.truth.bits[i]) {
                const double u = dynamic[i] ? unit(rng) : frozen[i];
                frame.pixels[i] = std::round(base[i] * (1.0 - p.speckle_amplitude * u));
            }
            if (out.text_mask.bits[i]) frame.pixels[i] = std::round(text_value[i]);
        }
        if (p.ekg_enabled) {
            const Rect& band = p.ekg_band;
            for (int x = std::max(0, band.x); x < std::min(p.width, band.x + band.width); ++x) {
                const int y0 = ekg_row(band, x, f * p.ekg_speed);
                const int y1 = ekg_row(band, x + 1, f * p.ekg_speed);
                for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
                    if (y < 0 || y >= p.height) continue;
                    frame.at(x, y) = 230.0;
                    out.ekg_mask.set(x, y, true);
                }
            }
        }
        out.sequence.frames.push_back(std::move(frame));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (out.truth.bits[i] && (out.text_mask.bits[i] || out.ekg_mask.bits[i])) ++out.text_truth_overlap;
    }
    return out;
}

/// Sensitive pixels for de-identification checks: burned-in text plus any
/// dynamic EKG trace.
inline BinaryMask sensitive_mask(const SyntheticSequence& s) {
    BinaryMask m = s.text_mask;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (s.ekg_mask.bits[i]) m.bits[i] = 1;
    }
    return m;
}

struct CorpusRecipe {
    int training_sequences = 60;
    int test_sequences = 12;
    double ekg_probability = 0.15;
    double static_wedge_probability = 0.25;
    double occlusion_probability = 0.10;
    int min_frames = 12;
    int max_frames = 16;
};

struct CorpusItem {
    SynthParams params;
    std::uint64_t seed = 0;
    std::string id;
};

/// Seeded per-sequence parameter draws. Cones vary in scale, position,
/// rotation, opening angle and brightness; some clips carry an EKG trace, a
/// motionless wedge that defeats the difference-based masks, or an occluder.
inline std::vector<CorpusItem> corpus_plan(const CorpusRecipe& recipe, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    static constexpr std::pair<int, int> sizes[] = {{128, 96}, {112, 84}, {120, 100}};
    std::vector<CorpusItem> items;
    const int total = recipe.training_sequences + recipe.test_sequences;
    for (int k = 0; k < total; ++k) {
        CorpusItem item;
        SynthParams& p = item.params;
        const auto [w, h] = sizes[static_cast<std::size_t>(rng() % 3)];
        p.width = w;
        p.height = h;
        p.apex_x = w * between(0.42, 0.58);
        p.apex_y = h * between(0.0, 0.06);
        p.half_angle_deg = between(28.0, 40.0);
        p.radius = h * between(0.70, 0.80);
        p.rotation_deg = between(-10.0, 10.0);
        p.speckle_amplitude = between(0.5, 0.7);
        p.motion_amplitude = between(0.8, 0.92);
        p.far_field_dropout = between(0.6, 0.85);
        p.near_intensity = between(180.0, 220.0);
        p.far_intensity = between(100.0, 140.0);
        p.n_frames = recipe.min_frames + static_cast<int>(rng() % static_cast<std::uint64_t>(recipe.max_frames - recipe.min_frames + 1));
        const int tw = static_cast<int>(w * between(0.14, 0.2));
        p.text_regions = {{2, 2, tw, 7}, {w - tw - 2, 2, tw, 7}};
        if (unit(rng) < 0.5) p.text_regions.push_back({2, h - 10, static_cast<int>(w * 0.18), 7});
        const double u_ekg = unit(rng);
        const double u_wedge = unit(rng);
        const double u_occ = unit(rng);
        const double wedge_len = between(0.6, 0.75);
        const bool wedge_left = unit(rng) < 0.5;
        const double occ_w = between(0.08, 0.14);
        p.ekg_enabled = u_ekg < recipe.ekg_probability;
        p.ekg_band = {static_cast<int>(w * 0.25), h - 9, static_cast<int>(w * 0.7), 7};
        if (u_wedge < recipe.static_wedge_probability) {
            p.static_wedge = wedge_left ? std::make_pair(0.0, wedge_len) : std::make_pair(1.0 - wedge_len, 1.0);
        }
        if (u_occ < recipe.occlusion_probability) {
            const int ow = static_cast<int>(w * occ_w);
            p.occlusion = Rect{w - ow, 0, ow, h};
        }
        // Keep overlays off the cone: drop any text block or EKG band that
        // would touch the sector.
        const BinaryMask truth = truth_mask(p);
        auto touches = [&](const Rect& r) {
            for (int y = std::max(0, r.y); y < std::min(h, r.y + r.height); ++y) {
                for (int x = std::max(0, r.x); x < std::min(w, r.x + r.width); ++x) {
                    if (truth.at(x, y)) return true;
                }
            }
            return false;
        };
        std::erase_if(p.text_regions, touches);
        if (p.ekg_enabled && touches(p.ekg_band)) p.ekg_enabled = false;
        item.seed = rng();
        char name[32];
        std::snprintf(name, sizeof name, "seq_%04d", k);
        item.id = name;
        items.push_back(std::move(item));
    }
    return items;
}

/// Writes `<root>/<id>/frame_*.png`, `truth_mask.png` and `text_mask.png`.
/// The text mask includes the EKG trace pixels.
inline void write_synthetic(const fs::path& root, const SyntheticSequence& s) {
    const fs::path dir = root / s.sequence.id;
    write_sequence(dir, s.sequence);
    png::write_mask(dir / truth_mask_name, s.truth);
    png::write_mask(dir / text_mask_name, sensitive_mask(s));
}

} // namespace coneboot::synth

#endif
