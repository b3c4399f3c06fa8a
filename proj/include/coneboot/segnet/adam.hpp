#ifndef CONEBOOT_SEGNET_ADAM_HPP
#define CONEBOOT_SEGNET_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "coneboot/error.hpp"
#include "coneboot/segnet/unet.hpp"

namespace coneboot::segnet {

struct AdamConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t step = 0;

    static AdamState like(const ModelWeights<T>& w) {
        AdamState s;
        for (const auto& p : w.params) {
            s.m.emplace_back(p.values.size(), T(0));
            s.v.emplace_back(p.values.size(), T(0));
        }
        return s;
    }
};

/// One bias-corrected Adam update, in place.
template <typename T>
void adam_step(ModelWeights<T>& w, const Gradients<T>& g, AdamState<T>& state, const AdamConfig& cfg) {
    require(g.values.size() == w.params.size() && state.m.size() == w.params.size(), ErrorCode::dimension_mismatch,
            "adam_step buffers");
    require(g.all_finite(), ErrorCode::non_finite, "adam_step received a non-finite gradient");
    const FlushSubnormals ftz;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < w.params.size(); ++i) {
        auto& values = w.params[i].values;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& grad = g.values[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            m[k] = b1 * m[k] + (T(1) - b1) * grad[k];
            v[k] = b2 * v[k] + (T(1) - b2) * grad[k] * grad[k];
            const double m_hat = static_cast<double>(m[k]) / c1;
            const double v_hat = static_cast<double>(v[k]) / c2;
            values[k] = static_cast<T>(values[k] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
        }
    }
    require(all_finite(w), ErrorCode::non_finite, "adam_step produced non-finite weights");
}

} // namespace coneboot::segnet

#endif
