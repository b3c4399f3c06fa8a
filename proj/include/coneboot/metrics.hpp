#ifndef CONEBOOT_METRICS_HPP
#define CONEBOOT_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <span>

#include "coneboot/error.hpp"
#include "coneboot/image.hpp"

namespace coneboot::metrics {

/// Foreground is the positive class.
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    double accuracy() const { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
    double recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 1.0; }
    double dice() const { return tp + fp + fn ? 2.0 * tp / (2.0 * tp + fp + fn) : 1.0; }
    double iou() const { return tp + fp + fn ? static_cast<double>(tp) / (tp + fp + fn) : 1.0; }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& truth) {
    require(pred.same_shape(truth), ErrorCode::dimension_mismatch, "confusion_counts");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        const bool t = truth.bits[i] != 0;
        if (p && t) ++c.tp;
        else if (!p && !t) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

inline double pixel_accuracy(const BinaryMask& pred, const BinaryMask& truth) {
    return confusion_counts(pred, truth).accuracy();
}

/// Scores a prediction at the truth's resolution, upsampling nearest-neighbor
/// when the sizes differ.
inline double pixel_accuracy_at_truth(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.same_shape(truth)) {
        return pixel_accuracy(pred, truth);
    }
    return pixel_accuracy(resize_nearest(pred, truth.width, truth.height), truth);
}

/// Background pixels go to 0.
inline Frame apply_mask(const Frame& frame, const BinaryMask& mask) {
    require(mask.same_shape(frame), ErrorCode::dimension_mismatch, "apply_mask");
    Frame out = frame;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!mask.bits[i]) out.pixels[i] = 0.0;
    }
    return out;
}

/// Fraction of sensitive pixels that survive masking; 0 when nothing is
/// sensitive.
inline double deid_leakage(const BinaryMask& mask, const BinaryMask& sensitive) {
    require(mask.same_shape(sensitive), ErrorCode::dimension_mismatch, "deid_leakage");
    std::size_t total = 0;
    std::size_t leaked = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (sensitive.bits[i]) {
            ++total;
            if (mask.bits[i]) ++leaked;
        }
    }
    return total ? static_cast<double>(leaked) / total : 0.0;
}

inline bool deid_passes(const BinaryMask& mask, const BinaryMask& sensitive) {
    return deid_leakage(mask, sensitive) == 0.0;
}

/// Set-level accuracy: unweighted mean over images.
inline double mean_accuracy(std::span<const double> per_image) {
    if (per_image.empty()) return 0.0;
    double sum = 0.0;
    for (double a : per_image) sum += a;
    return sum / static_cast<double>(per_image.size());
}

} // namespace coneboot::metrics

#endif
