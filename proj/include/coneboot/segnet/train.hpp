#ifndef CONEBOOT_SEGNET_TRAIN_HPP
#define CONEBOOT_SEGNET_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"
#include "coneboot/metrics.hpp"
#include "coneboot/segnet/adam.hpp"
#include "coneboot/segnet/unet.hpp"

namespace coneboot::segnet {

struct TrainConfig {
    double learning_rate = 1e-5;
    int batch_size = 8;
    double validation_fraction = 0.20;
    int epochs = 100;
    int eval_every = 10;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    bool keep_best_validation = false;

    void validate() const {
        require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorCode::invalid_argument,
                "validation_fraction must lie in (0, 1)");
        require(eval_every >= 1, ErrorCode::invalid_argument, "eval_every must be >= 1");
        require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
        require(epochs >= 0, ErrorCode::invalid_argument, "epochs must be >= 0");
        require(learning_rate > 0.0, ErrorCode::invalid_argument, "learning_rate must be > 0");
    }

    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

/// Network-ready training example: normalized input and {0,1} target, both at
/// the input size.
struct TrainPair {
    Frame input;
    BinaryMask target;
};

/// Network-ready input scored against a truth mask at any resolution.
struct EvalItem {
    Frame input;
    BinaryMask truth;
};

struct CurvePoint {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double test_accuracy = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

using LearningCurve = std::vector<CurvePoint>;

inline std::string curve_csv(const LearningCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_loss,test_acc\n";
    for (const auto& p : curve) {
        out << p.epoch << ',' << p.train_loss << ',' << p.validation_loss << ',' << p.test_accuracy << '\n';
    }
    return out.str();
}

template <typename T>
struct TrainResult {
    ModelWeights<T> weights;
    LearningCurve curve;
};

/// Mean per-image pixel accuracy; predictions are upsampled to each truth's
/// resolution.
template <typename T>
double evaluate_accuracy(const UNet<T>& net, const ModelWeights<T>& w, std::span<const EvalItem> items) {
    if (items.empty()) return 0.0;
    std::vector<double> acc;
    acc.reserve(items.size());
    for (const auto& item : items) {
        const BinaryMask pred = predict_mask(net, w, item.input);
        acc.push_back(metrics::pixel_accuracy_at_truth(pred, item.truth));
    }
    return metrics::mean_accuracy(acc);
}

template <typename T>
double evaluate_loss(const UNet<T>& net, const ModelWeights<T>& w, std::span<const Tensor3<T>> inputs,
                     std::span<const Tensor3<T>> targets) {
    if (inputs.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) sum += mse_loss(net.forward(w, inputs[i]), targets[i]);
    return sum / static_cast<double>(inputs.size());
}

/// Seeded hold-out: shuffles indices and keeps round(fraction * n) for
/// validation (at least one when n >= 2, never all of them).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::size_t n, double fraction,
                                                                                        std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    else n_val = 0;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return {train, val};
}

/// Mini-batch Adam on MSE. Curve points land on every eval_every-th epoch
/// and on the final epoch. Final-epoch weights are returned unless
/// keep_best_validation is set.
template <typename T>
TrainResult<T> train(const NetConfig& net_cfg, std::span<const TrainPair> train_set, std::span<const EvalItem> test_set,
                     const TrainConfig& cfg, std::optional<ModelWeights<T>> initial_weights = std::nullopt,
                     const std::function<void(const CurvePoint&)>& on_eval = {}) {
    cfg.validate();
    net_cfg.validate();
    require(!train_set.empty(), ErrorCode::invalid_argument, "training set is empty");
    UNet<T> net(net_cfg);
    TrainResult<T> result;
    result.weights = initial_weights ? std::move(*initial_weights) : init_weights<T>(net_cfg, cfg.seed);
    require(result.weights.config == net_cfg, ErrorCode::dimension_mismatch, "initial weights config");
    if (cfg.epochs == 0) return result;

    std::vector<Tensor3<T>> inputs;
    std::vector<Tensor3<T>> targets;
    for (const auto& pair : train_set) {
        require(pair.input.width == net_cfg.input_size && pair.input.height == net_cfg.input_size &&
                    pair.target.width == net_cfg.input_size && pair.target.height == net_cfg.input_size,
                ErrorCode::dimension_mismatch, "training pair not at network input size");
        inputs.push_back(to_tensor<T>(pair.input));
        targets.push_back(to_tensor<T>(pair.target));
    }
    auto [train_idx, val_idx] = split_validation(inputs.size(), cfg.validation_fraction, cfg.seed ^ 0x5bd1e995ULL);
    std::vector<Tensor3<T>> val_in;
    std::vector<Tensor3<T>> val_tg;
    for (std::size_t i : val_idx) {
        val_in.push_back(inputs[i]);
        val_tg.push_back(targets[i]);
    }

    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
    AdamState<T> adam = AdamState<T>::like(result.weights);
    Gradients<T> grads = Gradients<T>::like(result.weights);
    const AdamConfig adam_cfg = cfg.adam();
    std::optional<ModelWeights<T>> best;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor3<T>> batch_in;
    std::vector<Tensor3<T>> batch_tg;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch_in.clear();
            batch_tg.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch_in.push_back(inputs[train_idx[k]]);
                batch_tg.push_back(targets[train_idx[k]]);
            }
            grads.zero();
            const double loss = backward(net, result.weights, std::span<const Tensor3<T>>(batch_in),
                                         std::span<const Tensor3<T>>(batch_tg), grads);
            if (!std::isfinite(loss)) {
                fail(ErrorCode::divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(end - start);
            adam_step(result.weights, grads, adam, adam_cfg);
        }
        const bool eval_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        if (!eval_now) continue;
        CurvePoint point;
        point.epoch = epoch;
        point.train_loss = loss_sum / static_cast<double>(train_idx.size());
        point.validation_loss = evaluate_loss(net, result.weights, std::span<const Tensor3<T>>(val_in),
                                              std::span<const Tensor3<T>>(val_tg));
        point.test_accuracy = evaluate_accuracy(net, result.weights, test_set);
        if (!std::isfinite(point.train_loss) || !std::isfinite(point.validation_loss)) {
            fail(ErrorCode::divergence, "non-finite loss at epoch " + std::to_string(epoch));
        }
        if (cfg.keep_best_validation && !val_in.empty() && point.validation_loss < best_val) {
            best_val = point.validation_loss;
            best = result.weights;
        }
        result.curve.push_back(point);
        if (on_eval) on_eval(point);
    }
    if (cfg.keep_best_validation && best) result.weights = std::move(*best);
    return result;
}

} // namespace coneboot::segnet

#endif
