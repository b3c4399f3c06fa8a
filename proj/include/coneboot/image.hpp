#ifndef CONEBOOT_IMAGE_HPP
#define CONEBOOT_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coneboot/error.hpp"

namespace coneboot {

/// Intensity range of a frame: raw 8-bit range or normalized to [0, 1].
/// Derived frames (means, resamples) keep the range but may hold
/// non-integer values.
enum class PixelScale { byte, unit };

/// Single-channel raster, row-major.
struct Frame {
    int width = 0;
    int height = 0;
    PixelScale scale = PixelScale::byte;
    std::vector<double> pixels;

    Frame() = default;
    Frame(int w, int h, double fill = 0.0, PixelScale s = PixelScale::byte)
        : width(w), height(h), scale(s), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t size() const { return pixels.size(); }
    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const Frame& other) const {
        return width == other.width && height == other.height;
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// Foreground/background raster; true marks the cone.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    std::size_t size() const { return bits.size(); }
    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }

    template <typename Other>
    bool same_shape(const Other& other) const {
        return width == other.width && height == other.height;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

inline BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out = mask;
    for (auto& b : out.bits) {
        b = b ? 0 : 1;
    }
    return out;
}

/// True iff every foreground pixel of `inner` is foreground in `outer`.
inline bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
    require(inner.same_shape(outer), ErrorCode::dimension_mismatch, "is_subset");
    for (std::size_t i = 0; i < inner.size(); ++i) {
        if (inner.bits[i] && !outer.bits[i]) {
            return false;
        }
    }
    return true;
}

/// ITU-R 601 luma, rounded half away from zero.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

/// Bilinear resampling with pixel-center alignment and clamped borders.
inline Frame resize_bilinear(const Frame& in, int out_w, int out_h) {
    require(out_w >= 1 && out_h >= 1, ErrorCode::invalid_argument,
            "resize target must be at least 1x1, got " + std::to_string(out_w) + "x" +
                std::to_string(out_h));
    require(in.width >= 1 && in.height >= 1, ErrorCode::invalid_argument, "resize of empty frame");
    Frame out(out_w, out_h, 0.0, in.scale);
    if (out_w == in.width && out_h == in.height) {
        out.pixels = in.pixels;
        return out;
    }
    const double sx = static_cast<double>(in.width) / out_w;
    const double sy = static_cast<double>(in.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            const double top = in.at(x0, y0) * (1.0 - wx) + in.at(x1, y0) * wx;
            const double bottom = in.at(x0, y1) * (1.0 - wx) + in.at(x1, y1) * wx;
            out.at(x, y) = top * (1.0 - wy) + bottom * wy;
        }
    }
    return out;
}

/// Nearest-neighbor resampling, used for masks in both directions across the
/// network boundary.
inline BinaryMask resize_nearest(const BinaryMask& in, int out_w, int out_h) {
    require(out_w >= 1 && out_h >= 1, ErrorCode::invalid_argument, "resize target must be at least 1x1");
    if (out_w == in.width && out_h == in.height) {
        return in;
    }
    BinaryMask out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(in.height - 1, static_cast<int>((y + 0.5) * in.height / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(in.width - 1, static_cast<int>((x + 0.5) * in.width / out_w));
            out.set(x, y, in.at(sx, sy));
        }
    }
    return out;
}

/// Byte-range frame to [0, 1].
inline Frame normalized(const Frame& in) {
    if (in.scale == PixelScale::unit) {
        return in;
    }
    Frame out(in.width, in.height, 0.0, PixelScale::unit);
    std::transform(in.pixels.begin(), in.pixels.end(), out.pixels.begin(),
                   [](double v) { return v / 255.0; });
    return out;
}

} // namespace coneboot

#endif
