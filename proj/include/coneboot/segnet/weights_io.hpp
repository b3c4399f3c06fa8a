#ifndef CONEBOOT_SEGNET_WEIGHTS_IO_HPP
#define CONEBOOT_SEGNET_WEIGHTS_IO_HPP

// Weights container, all integers little-endian:
//   "CBWT"                      magic
//   u32 version                 = 1
//   u32 scalar_bytes            4 (float32) or 8 (float64)
//   u32 input_size, depth, base_channels, convs_per_block
//   u32 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rank, u32 dims[rank],
//               IEEE-754 payload (scalar_bytes each, little-endian)

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/segnet/unet.hpp"

namespace coneboot::segnet {

namespace detail {

static_assert(std::endian::native == std::endian::little, "weights IO assumes a little-endian host");

inline void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        require(pos + n <= data.size(), ErrorCode::malformed_document, "truncated weights file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, data.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace detail

inline constexpr char weights_magic[4] = {'C', 'B', 'W', 'T'};

template <typename T>
std::string encode_weights(const ModelWeights<T>& w) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    require(all_finite(w), ErrorCode::non_finite, "refusing to save non-finite weights");
    std::string out(weights_magic, 4);
    detail::put_u32(out, 1);
    detail::put_u32(out, sizeof(T));
    detail::put_u32(out, static_cast<std::uint32_t>(w.config.input_size));
    detail::put_u32(out, static_cast<std::uint32_t>(w.config.depth));
    detail::put_u32(out, static_cast<std::uint32_t>(w.config.base_channels));
    detail::put_u32(out, static_cast<std::uint32_t>(w.config.convs_per_block));
    detail::put_u32(out, static_cast<std::uint32_t>(w.params.size()));
    for (const auto& p : w.params) {
        detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        detail::put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        const char* raw = reinterpret_cast<const char*>(p.values.data());
        out.append(raw, p.values.size() * sizeof(T));
    }
    return out;
}

/// Decodes into precision T, converting from the stored precision.
template <typename T>
ModelWeights<T> decode_weights(const std::string& data) {
    detail::Reader r{data};
    require(r.bytes(4) == std::string(weights_magic, 4), ErrorCode::malformed_document, "bad weights magic");
    require(r.u32() == 1, ErrorCode::malformed_document, "unsupported weights version");
    const std::uint32_t scalar = r.u32();
    require(scalar == 4 || scalar == 8, ErrorCode::malformed_document, "bad scalar width");
    ModelWeights<T> w;
    w.config.input_size = static_cast<int>(r.u32());
    w.config.depth = static_cast<int>(r.u32());
    w.config.base_channels = static_cast<int>(r.u32());
    w.config.convs_per_block = static_cast<int>(r.u32());
    const ModelWeights<T> expected = zero_weights<T>(w.config);
    const std::uint32_t count = r.u32();
    require(count == expected.params.size(), ErrorCode::malformed_document, "tensor count does not match config");
    for (std::uint32_t i = 0; i < count; ++i) {
        Param<T> p;
        p.name = r.bytes(r.u32());
        const std::uint32_t rank = r.u32();
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            p.shape.push_back(static_cast<int>(r.u32()));
            n *= static_cast<std::size_t>(p.shape.back());
        }
        require(p.name == expected.params[i].name && p.shape == expected.params[i].shape, ErrorCode::malformed_document,
                "unexpected tensor '" + p.name + "'");
        r.need(n * scalar);
        p.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            if (scalar == 4) {
                float v;
                std::memcpy(&v, data.data() + r.pos + 4 * k, 4);
                p.values[k] = static_cast<T>(v);
            } else {
                double v;
                std::memcpy(&v, data.data() + r.pos + 8 * k, 8);
                p.values[k] = static_cast<T>(v);
            }
        }
        r.pos += n * scalar;
        w.params.push_back(std::move(p));
    }
    require(r.pos == data.size(), ErrorCode::malformed_document, "trailing bytes in weights file");
    require(all_finite(w), ErrorCode::non_finite, "weights file holds non-finite values");
    return w;
}

template <typename T>
void save_weights(const ModelWeights<T>& w, const std::filesystem::path& path) {
    const std::string data = encode_weights(w);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::storage_failure, "cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    require(static_cast<bool>(out), ErrorCode::storage_failure, "short write to " + path.string());
}

template <typename T>
ModelWeights<T> load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::missing_path, path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_weights<T>(data);
}

} // namespace coneboot::segnet

#endif
