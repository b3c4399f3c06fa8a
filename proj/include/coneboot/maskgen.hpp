#ifndef CONEBOOT_MASKGEN_HPP
#define CONEBOOT_MASKGEN_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/sequence_io.hpp"

namespace coneboot::maskgen {

enum class Algorithm { threshold, filled, hull };

inline constexpr std::array<Algorithm, 3> all_algorithms{Algorithm::threshold, Algorithm::filled,
                                                         Algorithm::hull};

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::threshold: return "threshold";
        case Algorithm::filled: return "filled";
        case Algorithm::hull: return "hull";
    }
    return "threshold";
}

inline Algorithm algorithm_from_string(std::string_view s) {
    if (s == "threshold") return Algorithm::threshold;
    if (s == "filled" || s == "filled_threshold") return Algorithm::filled;
    if (s == "hull") return Algorithm::hull;
    fail(ErrorCode::invalid_argument, "unknown mask algorithm '" + std::string(s) + "'");
}

struct MaskAlgorithm {
    Algorithm kind = Algorithm::hull;
    int threshold_block = 51;
    double threshold_offset = 4.0;
    bool hull_on_largest_component = false;
};

inline void check_block(int block) {
    require(block >= 3 && block % 2 == 1, ErrorCode::invalid_argument,
            "threshold block must be odd and >= 3, got " + std::to_string(block));
}

/// |frame[i+1] - frame[i]| for consecutive pairs.
inline std::vector<Frame> frame_differences(const FrameSequence& seq) {
    require(seq.frames.size() >= 2, ErrorCode::too_few_frames,
            "sequence '" + seq.id + "' needs at least 2 frames");
    std::vector<Frame> out;
    out.reserve(seq.frames.size() - 1);
    for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) {
        const Frame& a = seq.frames[i];
        const Frame& b = seq.frames[i + 1];
        require(a.same_shape(b), ErrorCode::mixed_dimensions, "sequence '" + seq.id + "'");
        Frame d(a.width, a.height, 0.0, a.scale);
        for (std::size_t p = 0; p < d.size(); ++p) {
            d.pixels[p] = std::abs(b.pixels[p] - a.pixels[p]);
        }
        out.push_back(std::move(d));
    }
    return out;
}

inline Frame mean_image(std::span<const Frame> frames) {
    require(!frames.empty(), ErrorCode::invalid_argument, "mean of an empty frame list");
    Frame out(frames.front().width, frames.front().height, 0.0, frames.front().scale);
    for (const Frame& f : frames) {
        require(f.same_shape(out), ErrorCode::mixed_dimensions, "mean_image");
        for (std::size_t p = 0; p < out.size(); ++p) {
            out.pixels[p] += f.pixels[p];
        }
    }
    const double n = static_cast<double>(frames.size());
    for (double& v : out.pixels) {
        v /= n;
    }
    return out;
}

/// Foreground iff img(p) > mean of the block x block window around p + offset.
/// Borders are replicated. Window sums come from a summed-area table over the
/// padded image.
inline BinaryMask adaptive_threshold(const Frame& img, int block, double offset) {
    check_block(block);
    const int r = block / 2;
    const int pw = img.width + 2 * r;
    const int ph = img.height + 2 * r;
    // sat has one extra leading row/column of zeros.
    std::vector<double> sat(static_cast<std::size_t>(pw + 1) * (ph + 1), 0.0);
    auto sat_at = [&](int x, int y) -> double& { return sat[static_cast<std::size_t>(y) * (pw + 1) + x]; };
    for (int y = 0; y < ph; ++y) {
        const int sy = std::clamp(y - r, 0, img.height - 1);
        double row = 0.0;
        for (int x = 0; x < pw; ++x) {
            const int sx = std::clamp(x - r, 0, img.width - 1);
            row += img.at(sx, sy);
            sat_at(x + 1, y + 1) = sat_at(x + 1, y) + row;
        }
    }
    const double area = static_cast<double>(block) * block;
    BinaryMask mask(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            // Padded window covers [x, x + block) x [y, y + block).
            const double sum = sat_at(x + block, y + block) - sat_at(x, y + block) -
                               sat_at(x + block, y) + sat_at(x, y);
            mask.set(x, y, img.at(x, y) > sum / area + offset);
        }
    }
    return mask;
}

/// Background regions not 4-connected to the border become foreground.
inline BinaryMask fill_holes(const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    std::vector<std::uint8_t> outside(mask.size(), 0);
    std::deque<std::pair<int, int>> frontier;
    auto seed = [&](int x, int y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!mask.bits[i] && !outside[i]) {
            outside[i] = 1;
            frontier.emplace_back(x, y);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!frontier.empty()) {
        auto [x, y] = frontier.front();
        frontier.pop_front();
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    BinaryMask out(w, h);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.bits[i] = (mask.bits[i] || !outside[i]) ? 1 : 0;
    }
    return out;
}

struct Point {
    std::int64_t x = 0;
    std::int64_t y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

inline std::int64_t cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() <= 2) {
        return pts;
    }
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const Point& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// Largest 8-connected foreground component; ties go to the first found in
/// scan order.
inline BinaryMask largest_component(const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    std::vector<int> label(mask.size(), -1);
    int best = -1;
    std::size_t best_size = 0;
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
            if (!mask.bits[i0] || label[i0] >= 0) continue;
            std::size_t size = 0;
            label[i0] = next;
            stack.assign(1, {x0, y0});
            while (!stack.empty()) {
                auto [x, y] = stack.back();
                stack.pop_back();
                ++size;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (mask.bits[ni] && label[ni] < 0) {
                            label[ni] = next;
                            stack.emplace_back(nx, ny);
                        }
                    }
                }
            }
            if (size > best_size) {
                best_size = size;
                best = next;
            }
            ++next;
        }
    }
    BinaryMask out(w, h);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.bits[i] = (best >= 0 && label[i] == best) ? 1 : 0;
    }
    return out;
}

/// Rasterized filled hull of all foreground pixel centers. A pixel is kept iff
/// its center lies on or inside every hull edge.
inline BinaryMask convex_hull_fill(const BinaryMask& mask) {
    std::vector<Point> pts;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) pts.push_back({x, y});
        }
    }
    BinaryMask out(mask.width, mask.height);
    if (pts.empty()) {
        return out;
    }
    const std::vector<Point> hull = convex_hull(std::move(pts));
    std::int64_t x_lo = hull[0].x, x_hi = hull[0].x, y_lo = hull[0].y, y_hi = hull[0].y;
    for (const Point& p : hull) {
        x_lo = std::min(x_lo, p.x);
        x_hi = std::max(x_hi, p.x);
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
    }
    for (std::int64_t y = y_lo; y <= y_hi; ++y) {
        for (std::int64_t x = x_lo; x <= x_hi; ++x) {
            const Point p{x, y};
            bool inside = true;
            for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                const Point& a = hull[i];
                const Point& b = hull[(i + 1) % hull.size()];
                if (hull.size() == 1) {
                    inside = (p == a);
                } else {
                    inside = cross(a, b, p) >= 0;
                }
            }
            if (inside) {
                out.set(static_cast<int>(x), static_cast<int>(y), true);
            }
        }
    }
    return out;
}

/// One mask per sequence: threshold of the mean difference image, then
/// optionally hole filling and hull filling.
inline BinaryMask generate_mask(const FrameSequence& seq, const MaskAlgorithm& algo) {
    check_block(algo.threshold_block);
    const std::vector<Frame> diffs = frame_differences(seq);
    const Frame base = mean_image(diffs);
    BinaryMask mask = adaptive_threshold(base, algo.threshold_block, algo.threshold_offset);
    if (algo.kind == Algorithm::threshold) {
        return mask;
    }
    mask = fill_holes(mask);
    if (algo.kind == Algorithm::filled) {
        return mask;
    }
    if (algo.hull_on_largest_component) {
        return convex_hull_fill(largest_component(mask));
    }
    return convex_hull_fill(mask);
}

/// All three fidelity levels from one pass over the difference stack.
struct MaskSet {
    BinaryMask threshold;
    BinaryMask filled;
    BinaryMask hull;

    const BinaryMask& get(Algorithm a) const {
        switch (a) {
            case Algorithm::threshold: return threshold;
            case Algorithm::filled: return filled;
            case Algorithm::hull: return hull;
        }
        return hull;
    }
};

inline MaskSet generate_all_masks(const FrameSequence& seq, const MaskAlgorithm& params) {
    check_block(params.threshold_block);
    const std::vector<Frame> diffs = frame_differences(seq);
    MaskSet set;
    set.threshold = adaptive_threshold(mean_image(diffs), params.threshold_block, params.threshold_offset);
    set.filled = fill_holes(set.threshold);
    set.hull = convex_hull_fill(params.hull_on_largest_component ? largest_component(set.filled) : set.filled);
    return set;
}

} // namespace coneboot::maskgen

#endif
