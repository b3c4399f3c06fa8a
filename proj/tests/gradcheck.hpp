#ifndef CONEBOOT_TESTS_GRADCHECK_HPP
#define CONEBOOT_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "coneboot/segnet/unet.hpp"

namespace coneboot::testing {

struct GradCheck {
    double worst_tensor_error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||), max over tensors
    double worst_element_error = 0.0; // |a - n| / max(|a|, |n|, floor), max over parameters
    double gradient_norm = 0.0;
};

/// Central differences of the batch MSE against backward(), in double.
inline GradCheck gradient_check(const segnet::NetConfig& cfg, std::uint64_t seed, int batch = 2, double h = 1e-5,
                                double floor = 1e-6) {
    using namespace segnet;
    const UNet<double> net(cfg);
    ModelWeights<double> w = init_weights<double>(cfg, seed);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 1; i < w.params.size(); i += 2) {
        for (double& b : w.params[i].values) b = 0.1 * (u(rng) - 0.5);
    }
    std::vector<Tensor3<double>> inputs;
    std::vector<Tensor3<double>> targets;
    for (int b = 0; b < batch; ++b) {
        Tensor3<double> in(1, cfg.input_size, cfg.input_size);
        Tensor3<double> tg(1, cfg.input_size, cfg.input_size);
        for (double& v : in.data) v = u(rng);
        for (double& v : tg.data) v = u(rng) < 0.5 ? 0.0 : 1.0;
        inputs.push_back(std::move(in));
        targets.push_back(std::move(tg));
    }
    const std::span<const Tensor3<double>> in_span(inputs);
    const std::span<const Tensor3<double>> tg_span(targets);
    auto loss_at = [&](const ModelWeights<double>& ww) {
        double sum = 0.0;
        for (int b = 0; b < batch; ++b) sum += mse_loss(net.forward(ww, inputs[b]), targets[b]);
        return sum / batch;
    };
    Gradients<double> g = Gradients<double>::like(w);
    backward(net, w, in_span, tg_span, g);

    GradCheck out;
    for (std::size_t t = 0; t < w.params.size(); ++t) {
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t k = 0; k < w.params[t].values.size(); ++k) {
            const double saved = w.params[t].values[k];
            w.params[t].values[k] = saved + h;
            const double up = loss_at(w);
            w.params[t].values[k] = saved - h;
            const double down = loss_at(w);
            w.params[t].values[k] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = g.values[t][k];
            diff2 += (analytic - numeric) * (analytic - numeric);
            out.worst_element_error = std::max(
                out.worst_element_error,
                std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor}));
            a2 += analytic * analytic;
            n2 += numeric * numeric;
        }
        out.gradient_norm += a2;
        const double denom = std::sqrt(a2) + std::sqrt(n2);
        if (denom > 1e-12) out.worst_tensor_error = std::max(out.worst_tensor_error, std::sqrt(diff2) / denom);
    }
    out.gradient_norm = std::sqrt(out.gradient_norm);
    return out;
}

} // namespace coneboot::testing

#endif
