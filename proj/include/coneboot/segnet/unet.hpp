#ifndef CONEBOOT_SEGNET_UNET_HPP
#define CONEBOOT_SEGNET_UNET_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/segnet/layers.hpp"
#include "coneboot/segnet/tensor.hpp"

namespace coneboot::segnet {

struct NetConfig {
    int input_size = 256;
    int depth = 3;
    int base_channels = 8;
    int convs_per_block = 2;

    int channels_at(int level) const { return base_channels << level; }

    void validate() const {
        require(depth >= 1 && base_channels >= 1 && convs_per_block >= 1, ErrorCode::invalid_argument,
                "net config needs depth, base_channels and convs_per_block >= 1");
        require(input_size >= 1 && input_size % (1 << depth) == 0, ErrorCode::invalid_argument,
                "input_size " + std::to_string(input_size) + " not divisible by 2^" + std::to_string(depth));
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Named parameter tensor. Convolution weights have shape {out, in, k, k},
/// biases {out}.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> values;

    friend bool operator==(const Param&, const Param&) = default;
};

struct ConvSpec {
    std::string name;
    ConvShape<double> shape; // element type irrelevant for the shape itself
    bool relu = true;
};

/// Layer table in storage order: encoder levels shallow to deep, bottleneck,
/// decoder levels deep to shallow (up-conv first, then block convs), 1x1 head.
inline std::vector<ConvSpec> conv_layout(const NetConfig& cfg) {
    cfg.validate();
    std::vector<ConvSpec> specs;
    auto add = [&](std::string name, int in, int out, int k, bool relu) {
        specs.push_back({std::move(name), {in, out, k}, relu});
    };
    int in = 1;
    for (int l = 0; l < cfg.depth; ++l) {
        for (int j = 0; j < cfg.convs_per_block; ++j) {
            add("enc" + std::to_string(l) + ".conv" + std::to_string(j), j == 0 ? in : cfg.channels_at(l),
                cfg.channels_at(l), 3, true);
        }
        in = cfg.channels_at(l);
    }
    for (int j = 0; j < cfg.convs_per_block; ++j) {
        add("bottleneck.conv" + std::to_string(j), j == 0 ? in : cfg.channels_at(cfg.depth),
            cfg.channels_at(cfg.depth), 3, true);
    }
    for (int l = cfg.depth - 1; l >= 0; --l) {
        const int c = cfg.channels_at(l);
        add("dec" + std::to_string(l) + ".up", cfg.channels_at(l + 1), c, 3, true);
        for (int j = 0; j < cfg.convs_per_block; ++j) {
            add("dec" + std::to_string(l) + ".conv" + std::to_string(j), j == 0 ? 2 * c : c, c, 3, true);
        }
    }
    add("head", cfg.channels_at(0), 1, 1, false);
    return specs;
}

template <typename T>
struct ModelWeights {
    NetConfig config;
    std::vector<Param<T>> params; // weight, bias per conv in conv_layout order

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.values.size();
        return n;
    }

    friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

template <typename T>
ModelWeights<T> zero_weights(const NetConfig& cfg) {
    ModelWeights<T> w;
    w.config = cfg;
    for (const auto& spec : conv_layout(cfg)) {
        const auto& s = spec.shape;
        w.params.push_back({spec.name + ".weight", {s.out_channels, s.in_channels, s.kernel, s.kernel},
                            std::vector<T>(static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel, T(0))});
        w.params.push_back({spec.name + ".bias", {s.out_channels}, std::vector<T>(s.out_channels, T(0))});
    }
    return w;
}

/// He-uniform fan-in initialization; biases start at zero.
template <typename T>
ModelWeights<T> init_weights(const NetConfig& cfg, std::uint64_t seed) {
    ModelWeights<T> w = zero_weights<T>(cfg);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < w.params.size(); i += 2) {
        auto& p = w.params[i];
        const int fan_in = p.shape[1] * p.shape[2] * p.shape[3];
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (T& v : p.values) v = static_cast<T>(dist(rng));
    }
    return w;
}

template <typename T, typename U>
ModelWeights<U> cast_weights(const ModelWeights<T>& in) {
    ModelWeights<U> out;
    out.config = in.config;
    for (const auto& p : in.params) {
        out.params.push_back({p.name, p.shape, std::vector<U>(p.values.begin(), p.values.end())});
    }
    return out;
}

template <typename T>
bool all_finite(const ModelWeights<T>& w) {
    for (const auto& p : w.params) {
        for (T v : p.values) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

/// Gradient buffers shaped like the parameter list.
template <typename T>
struct Gradients {
    std::vector<std::vector<T>> values;

    static Gradients like(const ModelWeights<T>& w) {
        Gradients g;
        for (const auto& p : w.params) g.values.emplace_back(p.values.size(), T(0));
        return g;
    }
    void zero() {
        for (auto& v : values) std::fill(v.begin(), v.end(), T(0));
    }
    bool all_finite() const {
        for (const auto& v : values) {
            for (T x : v) {
                if (!std::isfinite(x)) return false;
            }
        }
        return true;
    }
};

/// Activations kept by a forward pass for the matching backward pass.
template <typename T>
struct ForwardCache {
    struct Conv {
        Tensor3<T> input;
        AlignedVector<T> col;
        Tensor3<T> output; // post-activation
    };
    struct Pool {
        std::vector<std::size_t> argmax;
        int in_h = 0;
        int in_w = 0;
    };
    std::vector<Conv> convs;
    std::vector<Pool> pools;
    Tensor3<T> probabilities;
};

template <typename T>
class UNet {
public:
    explicit UNet(const NetConfig& cfg) : cfg_(cfg), layout_(conv_layout(cfg)) {}

    const NetConfig& config() const { return cfg_; }
    const std::vector<ConvSpec>& layout() const { return layout_; }

    /// Sigmoid map, same spatial size as the input.
    Tensor3<T> forward(const ModelWeights<T>& w, const Tensor3<T>& input, ForwardCache<T>& cache) const {
        check(w, input);
        const FlushSubnormals ftz;
        // Buffers from a previous pass are reused; every entry is overwritten.
        cache.convs.resize(layout_.size());
        cache.pools.resize(static_cast<std::size_t>(cfg_.depth));
        std::size_t idx = 0;
        Tensor3<T> x = input;
        std::vector<Tensor3<T>> skips(cfg_.depth);
        for (int l = 0; l < cfg_.depth; ++l) {
            for (int j = 0; j < cfg_.convs_per_block; ++j) x = run_conv(w, idx++, x, cache);
            skips[l] = x;
            auto& pool = cache.pools[l];
            pool.in_h = x.height;
            pool.in_w = x.width;
            Tensor3<T> pooled;
            maxpool_forward(x, pooled, pool.argmax);
            x = std::move(pooled);
        }
        for (int j = 0; j < cfg_.convs_per_block; ++j) x = run_conv(w, idx++, x, cache);
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            Tensor3<T> up;
            upsample2_forward(x, up);
            up = run_conv(w, idx++, up, cache);
            x = concat_channels(skips[l], up);
            for (int j = 0; j < cfg_.convs_per_block; ++j) x = run_conv(w, idx++, x, cache);
        }
        Tensor3<T> logits = run_conv(w, idx++, x, cache);
        for (T& v : logits.data) {
            v = sigmoid(v);
            if (!std::isfinite(v)) fail(ErrorCode::non_finite, "non-finite activation in forward pass");
        }
        cache.probabilities = logits;
        return logits;
    }

    Tensor3<T> forward(const ModelWeights<T>& w, const Tensor3<T>& input) const {
        thread_local ForwardCache<T> cache;
        return forward(w, input, cache);
    }

    /// Accumulates dLoss/dParams given dLoss/dProbabilities.
    void backward(const ModelWeights<T>& w, const ForwardCache<T>& cache, const Tensor3<T>& grad_prob,
                  Gradients<T>& grads) const {
        const FlushSubnormals ftz;
        const Tensor3<T>& p = cache.probabilities;
        require(grad_prob.same_shape(p), ErrorCode::dimension_mismatch, "backward gradient shape");
        Tensor3<T> g(p.channels, p.height, p.width);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g.data[i] = grad_prob.data[i] * p.data[i] * (T(1) - p.data[i]);
        }
        std::size_t idx = layout_.size();
        g = back_conv(w, --idx, g, cache, grads, true);
        std::vector<Tensor3<T>> skip_grads(cfg_.depth);
        for (int l = 0; l < cfg_.depth; ++l) {
            for (int j = cfg_.convs_per_block - 1; j >= 0; --j) g = back_conv(w, --idx, g, cache, grads, true);
            const int c = cfg_.channels_at(l);
            Tensor3<T> g_up;
            split_channels(g, c, skip_grads[l], g_up);
            g_up = back_conv(w, --idx, g_up, cache, grads, true);
            upsample2_backward(g_up, g);
        }
        for (int j = cfg_.convs_per_block - 1; j >= 0; --j) g = back_conv(w, --idx, g, cache, grads, true);
        for (int l = cfg_.depth - 1; l >= 0; --l) {
            const auto& pool = cache.pools[l];
            Tensor3<T> g_in;
            maxpool_backward(g, pool.argmax, pool.in_h, pool.in_w, g_in);
            for (std::size_t i = 0; i < g_in.size(); ++i) g_in.data[i] += skip_grads[l].data[i];
            g = std::move(g_in);
            for (int j = cfg_.convs_per_block - 1; j >= 0; --j) {
                g = back_conv(w, --idx, g, cache, grads, !(l == 0 && j == 0));
            }
        }
    }

private:
    void check(const ModelWeights<T>& w, const Tensor3<T>& input) const {
        require(w.config == cfg_, ErrorCode::dimension_mismatch, "weights built for a different net config");
        require(w.params.size() == 2 * layout_.size(), ErrorCode::dimension_mismatch, "parameter count");
        require(input.channels == 1 && input.height == cfg_.input_size && input.width == cfg_.input_size,
                ErrorCode::dimension_mismatch,
                "input must be 1x" + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                    ", got " + std::to_string(input.channels) + "x" + std::to_string(input.height) + "x" +
                    std::to_string(input.width));
    }

    static ConvShape<T> shape_of(const ConvSpec& s) {
        return {s.shape.in_channels, s.shape.out_channels, s.shape.kernel};
    }

    Tensor3<T> run_conv(const ModelWeights<T>& w, std::size_t idx, const Tensor3<T>& in, ForwardCache<T>& cache) const {
        const ConvSpec& spec = layout_[idx];
        auto& c = cache.convs[idx];
        c.input = in;
        conv_forward(shape_of(spec), w.params[2 * idx].values.data(), w.params[2 * idx + 1].values.data(), in,
                     c.col, c.output);
        if (spec.relu) relu_inplace(c.output);
        return c.output;
    }

    Tensor3<T> back_conv(const ModelWeights<T>& w, std::size_t idx, Tensor3<T> grad_out, const ForwardCache<T>& cache,
                         Gradients<T>& grads, bool need_input_grad) const {
        const ConvSpec& spec = layout_[idx];
        const auto& c = cache.convs[idx];
        if (spec.relu) relu_backward_inplace(c.output, grad_out);
        Tensor3<T> grad_in;
        conv_backward(shape_of(spec), w.params[2 * idx].values.data(), c.input, c.col, grad_out,
                      grads.values[2 * idx].data(), grads.values[2 * idx + 1].data(),
                      need_input_grad ? &grad_in : nullptr);
        return grad_in;
    }

    NetConfig cfg_;
    std::vector<ConvSpec> layout_;
};

/// Normalized frame to a 1-channel input tensor.
template <typename T>
Tensor3<T> to_tensor(const Frame& frame) {
    const double k = frame.scale == PixelScale::byte ? 1.0 / 255.0 : 1.0;
    Tensor3<T> t(1, frame.height, frame.width);
    for (std::size_t i = 0; i < frame.size(); ++i) t.data[i] = static_cast<T>(frame.pixels[i] * k);
    return t;
}

template <typename T>
Tensor3<T> to_tensor(const BinaryMask& mask) {
    Tensor3<T> t(1, mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) t.data[i] = mask.bits[i] ? T(1) : T(0);
    return t;
}

/// Mean over all pixels of (pred - target)^2.
template <typename T>
double mse_loss(const Tensor3<T>& pred, const Tensor3<T>& target) {
    require(pred.same_shape(target), ErrorCode::dimension_mismatch, "mse_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        sum += d * d;
    }
    return pred.size() ? sum / static_cast<double>(pred.size()) : 0.0;
}

/// Batch MSE: mean over batch and pixels.
template <typename T>
double mse_loss(std::span<const Tensor3<T>> pred, std::span<const Tensor3<T>> target) {
    require(pred.size() == target.size() && !pred.empty(), ErrorCode::dimension_mismatch, "mse_loss batch");
    double sum = 0.0;
    for (std::size_t b = 0; b < pred.size(); ++b) sum += mse_loss(pred[b], target[b]);
    return sum / static_cast<double>(pred.size());
}

/// Per-sample gradient of the batch MSE with respect to the prediction.
template <typename T>
Tensor3<T> mse_gradient(const Tensor3<T>& pred, const Tensor3<T>& target, std::size_t batch_size) {
    Tensor3<T> g(pred.channels, pred.height, pred.width);
    const T scale = T(2) / static_cast<T>(static_cast<double>(pred.size()) * static_cast<double>(batch_size));
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = scale * (pred.data[i] - target.data[i]);
    return g;
}

/// Loss over a batch plus its parameter gradients (accumulated into `grads`,
/// which the caller zeroes).
template <typename T>
double backward(const UNet<T>& net, const ModelWeights<T>& w, std::span<const Tensor3<T>> inputs,
                std::span<const Tensor3<T>> targets, Gradients<T>& grads) {
    require(inputs.size() == targets.size() && !inputs.empty(), ErrorCode::dimension_mismatch, "backward batch");
    double loss = 0.0;
    ForwardCache<T> cache;
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        const Tensor3<T> pred = net.forward(w, inputs[b], cache);
        loss += mse_loss(pred, targets[b]);
        net.backward(w, cache, mse_gradient(pred, targets[b], inputs.size()), grads);
    }
    if (!grads.all_finite()) fail(ErrorCode::non_finite, "non-finite gradient");
    return loss / static_cast<double>(inputs.size());
}

/// Probabilities >= 0.5 are foreground.
template <typename T>
BinaryMask threshold_probabilities(const Tensor3<T>& prob) {
    BinaryMask mask(prob.width, prob.height);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.bits[i] = prob.data[i] >= T(0.5) ? 1 : 0;
    return mask;
}

/// Thresholded prediction for a frame already at the network input size;
/// pass out_w/out_h to resize back (nearest-neighbor) to native resolution.
template <typename T>
BinaryMask predict_mask(const UNet<T>& net, const ModelWeights<T>& w, const Frame& frame, int out_w = 0,
                        int out_h = 0) {
    const BinaryMask mask = threshold_probabilities(net.forward(w, to_tensor<T>(frame)));
    if (out_w > 0 && out_h > 0) return resize_nearest(mask, out_w, out_h);
    return mask;
}

/// Resizes a native frame to the network input and normalizes it.
inline Frame prepare_input(const Frame& native, int input_size) {
    return normalized(resize_bilinear(native, input_size, input_size));
}

} // namespace coneboot::segnet

#endif
