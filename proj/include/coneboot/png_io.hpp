#ifndef CONEBOOT_PNG_IO_HPP
#define CONEBOOT_PNG_IO_HPP

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"

namespace coneboot::png {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // interleaved
};

inline RgbImage read_rgb(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        fail(ErrorCode::decode_failure, path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.rgb.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::decode_failure, path.string() + ": " + msg);
    }
    return out;
}

/// Decodes any PNG to a byte-scale grayscale frame via 601 luma.
inline Frame read_gray(const std::filesystem::path& path) {
    const RgbImage rgb = read_rgb(path);
    Frame frame(rgb.width, rgb.height);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        frame.pixels[i] = luma(rgb.rgb[3 * i], rgb.rgb[3 * i + 1], rgb.rgb[3 * i + 2]);
    }
    return frame;
}

inline void write_gray8(const std::filesystem::path& path, int width, int height,
                        const std::vector<std::uint8_t>& data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
        fail(ErrorCode::encode_failure, path.string() + ": " + image.message);
    }
}

inline void write_rgb8(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
        fail(ErrorCode::encode_failure, path.string() + ": " + image.message);
    }
}

/// Writes a frame as 8-bit gray; unit-scale frames are rescaled, values are
/// rounded and clamped.
inline void write_frame(const std::filesystem::path& path, const Frame& frame) {
    const double k = frame.scale == PixelScale::unit ? 255.0 : 1.0;
    std::vector<std::uint8_t> data(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(frame.pixels[i] * k), 0L, 255L));
    }
    write_gray8(path, frame.width, frame.height, data);
}

/// Masks persist as 0/255.
inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        data[i] = mask.bits[i] ? 255 : 0;
    }
    write_gray8(path, mask.width, mask.height, data);
}

/// Any luma >= 128 reads as foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
    const Frame f = read_gray(path);
    BinaryMask mask(f.width, f.height);
    for (std::size_t i = 0; i < f.size(); ++i) {
        mask.bits[i] = f.pixels[i] >= 128.0 ? 1 : 0;
    }
    return mask;
}

inline std::vector<std::uint8_t> encode_gray8_to_memory(int width, int height,
                                                        const std::vector<std::uint8_t>& data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), 0, nullptr)) {
        fail(ErrorCode::encode_failure, image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, data.data(), 0, nullptr)) {
        fail(ErrorCode::encode_failure, image.message);
    }
    out.resize(size);
    return out;
}

} // namespace coneboot::png

#endif
