#ifndef CONEBOOT_SEGNET_LAYERS_HPP
#define CONEBOOT_SEGNET_LAYERS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "coneboot/error.hpp"
#include "coneboot/segnet/tensor.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace coneboot::segnet {

/// Flushes subnormal floats to zero while alive. Tiny Adam moments and
/// activations otherwise fall into subnormal range and stall the FPU; the
/// flag is deterministic, so results stay reproducible.
class FlushSubnormals {
public:
#if defined(__SSE__)
    FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~FlushSubnormals() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#else
    FlushSubnormals() = default;
#endif
public:
    FlushSubnormals(const FlushSubnormals&) = delete;
    FlushSubnormals& operator=(const FlushSubnormals&) = delete;
};

/// Same-padded k x k convolution (cross-correlation). Weights are laid out
/// [out][in][ky][kx]; bias [out].
template <typename T>
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

namespace detail {

/// Copy of `in` with a zero border of `pad` on every side.
template <typename T>
void pad_planes(const Tensor3<T>& in, int pad, AlignedVector<T>& out) {
    const int pw = in.width + 2 * pad;
    const int ph = in.height + 2 * pad;
    out.assign(static_cast<std::size_t>(in.channels) * ph * pw, T(0));
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < in.height; ++y) {
            const T* src = in.channel(c) + static_cast<std::size_t>(y) * in.width;
            std::copy(src, src + in.width, out.data() + (static_cast<std::size_t>(c) * ph + y + pad) * pw + pad);
        }
    }
}

} // namespace detail

/// Unrolls k x k same-padded patches from padded planes: row
/// (ci * k + ky) * k + kx, column y * w + x.
template <typename T>
void im2col(const Tensor3<T>& in, int k, AlignedVector<T>& col) {
    const int h = in.height;
    const int w = in.width;
    const int pw = w + k - 1;
    const std::size_t pplane = static_cast<std::size_t>(h + k - 1) * pw;
    thread_local AlignedVector<T> padded;
    detail::pad_planes(in, k / 2, padded);
    col.resize(static_cast<std::size_t>(in.channels) * k * k * h * w);
    T* dst = col.data();
    for (int c = 0; c < in.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int y = 0; y < h; ++y, dst += w) {
                    const T* src = padded.data() + c * pplane + static_cast<std::size_t>(y + ky) * pw + kx;
                    for (int x = 0; x < w; ++x) dst[x] = src[x];
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters patch gradients back onto the input map.
template <typename T>
void col2im(const AlignedVector<T>& col, int k, Tensor3<T>& grad_in) {
    const int pad = k / 2;
    const int h = grad_in.height;
    const int w = grad_in.width;
    const int pw = w + k - 1;
    const std::size_t pplane = static_cast<std::size_t>(h + k - 1) * pw;
    thread_local AlignedVector<T> padded;
    padded.assign(static_cast<std::size_t>(grad_in.channels) * pplane, T(0));
    const T* src = col.data();
    for (int c = 0; c < grad_in.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int y = 0; y < h; ++y, src += w) {
                    T* dst = padded.data() + c * pplane + static_cast<std::size_t>(y + ky) * pw + kx;
                    for (int x = 0; x < w; ++x) dst[x] += src[x];
                }
            }
        }
    }
    for (int c = 0; c < grad_in.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            const T* row = padded.data() + c * pplane + static_cast<std::size_t>(y + pad) * pw + pad;
            T* out = grad_in.channel(c) + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) out[x] += row[x];
        }
    }
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Convolution as one GEMM over the unrolled patches in `col`, which the
/// backward pass reuses.
template <typename T>
void conv_forward(const ConvShape<T>& shape, const T* weights, const T* bias, const Tensor3<T>& in,
                  AlignedVector<T>& col, Tensor3<T>& out) {
    require(in.channels == shape.in_channels, ErrorCode::dimension_mismatch, "conv input channels");
    const int hw = in.height * in.width;
    const int patch = shape.in_channels * shape.kernel * shape.kernel;
    out.channels = shape.out_channels;
    out.height = in.height;
    out.width = in.width;
    out.data.resize(static_cast<std::size_t>(shape.out_channels) * hw);
    MatrixMap<T> y(out.data.data(), shape.out_channels, hw);
    ConstMatrixMap<T> wm(weights, shape.out_channels, patch);
    if (shape.kernel == 1) {
        ConstMatrixMap<T> x(in.data.data(), patch, hw);
        y.noalias() = wm * x;
    } else {
        im2col(in, shape.kernel, col);
        ConstMatrixMap<T> x(col.data(), patch, hw);
        y.noalias() = wm * x;
    }
    for (int o = 0; o < shape.out_channels; ++o) {
        y.row(o).array() += bias[o];
    }
}

/// Accumulates weight/bias gradients; writes the input gradient when
/// `grad_in` is non-null. `col` must be the unrolled input left by
/// conv_forward.
template <typename T>
void conv_backward(const ConvShape<T>& shape, const T* weights, const Tensor3<T>& in, const AlignedVector<T>& col,
                   const Tensor3<T>& grad_out, T* grad_weights, T* grad_bias, Tensor3<T>* grad_in) {
    const int hw = in.height * in.width;
    const int patch = shape.in_channels * shape.kernel * shape.kernel;
    ConstMatrixMap<T> dy(grad_out.data.data(), shape.out_channels, hw);
    const T* xdata = shape.kernel == 1 ? in.data.data() : col.data();
    ConstMatrixMap<T> x(xdata, patch, hw);
    MatrixMap<T> dw(grad_weights, shape.out_channels, patch);
    dw.noalias() += dy * x.transpose();
    for (int o = 0; o < shape.out_channels; ++o) {
        grad_bias[o] += dy.row(o).sum();
    }
    if (grad_in == nullptr) return;
    *grad_in = Tensor3<T>(in.channels, in.height, in.width);
    ConstMatrixMap<T> wm(weights, shape.out_channels, patch);
    if (shape.kernel == 1) {
        MatrixMap<T> dx(grad_in->data.data(), patch, hw);
        dx.noalias() = wm.transpose() * dy;
    } else {
        thread_local AlignedVector<T> dcol;
        dcol.resize(static_cast<std::size_t>(patch) * hw);
        MatrixMap<T> dx(dcol.data(), patch, hw);
        dx.noalias() = wm.transpose() * dy;
        col2im(dcol, shape.kernel, *grad_in);
    }
}

template <typename T>
void relu_inplace(Tensor3<T>& t) {
    for (T& v : t.data) v = v > T(0) ? v : T(0);
}

/// Gradient through ReLU using the post-activation output.
template <typename T>
void relu_backward_inplace(const Tensor3<T>& activated, Tensor3<T>& grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activated.data[i] > T(0))) grad.data[i] = T(0);
    }
}

/// 2 x 2 max-pool, stride 2. `argmax` records the winning input index per
/// output cell; the first maximum in row-major window order wins ties.
template <typename T>
void maxpool_forward(const Tensor3<T>& in, Tensor3<T>& out, std::vector<std::size_t>& argmax) {
    require(in.height % 2 == 0 && in.width % 2 == 0, ErrorCode::dimension_mismatch, "maxpool needs even sizes");
    out = Tensor3<T>(in.channels, in.height / 2, in.width / 2);
    argmax.assign(out.size(), 0);
    std::size_t o = 0;
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x, ++o) {
                std::size_t best = (static_cast<std::size_t>(c) * in.height + 2 * y) * in.width + 2 * x;
                T best_v = in.data[best];
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t i = (static_cast<std::size_t>(c) * in.height + 2 * y + dy) * in.width + 2 * x + dx;
                        if (in.data[i] > best_v) {
                            best_v = in.data[i];
                            best = i;
                        }
                    }
                }
                out.data[o] = best_v;
                argmax[o] = best;
            }
        }
    }
}

template <typename T>
void maxpool_backward(const Tensor3<T>& grad_out, const std::vector<std::size_t>& argmax, int in_h, int in_w,
                      Tensor3<T>& grad_in) {
    grad_in = Tensor3<T>(grad_out.channels, in_h, in_w);
    for (std::size_t o = 0; o < grad_out.size(); ++o) {
        grad_in.data[argmax[o]] += grad_out.data[o];
    }
}

template <typename T>
void upsample2_forward(const Tensor3<T>& in, Tensor3<T>& out) {
    out = Tensor3<T>(in.channels, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                out.at(c, y, x) = in.at(c, y / 2, x / 2);
            }
        }
    }
}

template <typename T>
void upsample2_backward(const Tensor3<T>& grad_out, Tensor3<T>& grad_in) {
    grad_in = Tensor3<T>(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    for (int c = 0; c < grad_out.channels; ++c) {
        for (int y = 0; y < grad_out.height; ++y) {
            for (int x = 0; x < grad_out.width; ++x) {
                grad_in.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
            }
        }
    }
}

/// Channel concatenation [a; b].
template <typename T>
Tensor3<T> concat_channels(const Tensor3<T>& a, const Tensor3<T>& b) {
    require(a.height == b.height && a.width == b.width, ErrorCode::dimension_mismatch, "concat");
    Tensor3<T> out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

template <typename T>
void split_channels(const Tensor3<T>& joined, int first_channels, Tensor3<T>& a, Tensor3<T>& b) {
    a = Tensor3<T>(first_channels, joined.height, joined.width);
    b = Tensor3<T>(joined.channels - first_channels, joined.height, joined.width);
    std::copy(joined.data.begin(), joined.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
    std::copy(joined.data.begin() + static_cast<std::ptrdiff_t>(a.size()), joined.data.end(), b.data.begin());
}

/// Logistic sigmoid kept strictly inside (0, 1).
template <typename T>
T sigmoid(T z) {
    const T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
    constexpr T lo = std::numeric_limits<T>::min();
    constexpr T hi = T(1) - std::numeric_limits<T>::epsilon();
    return std::clamp(s, lo, hi);
}

} // namespace coneboot::segnet

#endif
