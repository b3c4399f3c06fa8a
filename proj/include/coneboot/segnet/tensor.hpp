#ifndef CONEBOOT_SEGNET_TENSOR_HPP
#define CONEBOOT_SEGNET_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace coneboot::segnet {

/// Storage aligned to Eigen's widest packet. GEMV and reductions peel
/// unaligned leading elements, so with plain malloc alignment the summation
/// order (and the last bits of the result) would depend on heap state.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Channel-major feature map: index (c, y, x) -> (c * h + y) * w + x.
template <typename T>
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    AlignedVector<T> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, T fill = T(0))
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    T at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    T* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
    const T* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    void zero() { std::fill(data.begin(), data.end(), T(0)); }
};

} // namespace coneboot::segnet

#endif
