#ifndef CONEBOOT_STATS_HPP
#define CONEBOOT_STATS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coneboot/error.hpp"

namespace coneboot::stats {

/// One value per replicate run.
struct SampleSet {
    std::vector<double> values;
    std::string label;

    std::size_t size() const { return values.size(); }
};

inline void check_sample(std::span<const double> v, const char* what) {
    require(v.size() >= 2, ErrorCode::invalid_argument,
            std::string(what) + " needs at least 2 samples, got " + std::to_string(v.size()));
}

struct MeanVar {
    double mean = 0.0;
    double variance = 0.0; // n - 1 denominator
};

inline MeanVar mean_var(std::span<const double> v) {
    check_sample(v, "mean_var");
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, ss / (n - 1.0)};
}

inline MeanVar mean_var(const SampleSet& s) { return mean_var(std::span<const double>(s.values)); }

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b). `one_minus_x` is passed separately
/// so callers can supply it without cancellation.
inline double regularized_incomplete_beta(double x, double one_minus_x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (one_minus_x <= 0.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log(one_minus_x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::beta_continued_fraction(x, a, b) / a;
    }
    return 1.0 - front * detail::beta_continued_fraction(one_minus_x, b, a) / b;
}

/// Student's t cumulative distribution.
inline double t_cdf(double t, double df) {
    require(df >= 1.0, ErrorCode::invalid_argument, "t_cdf needs df >= 1");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    if (t == 0.0) return 0.5;
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double one_minus_x = t2 / (df + t2);
    const double tail = 0.5 * regularized_incomplete_beta(x, one_minus_x, 0.5 * df, 0.5);
    return t > 0 ? 1.0 - tail : tail;
}

/// Inverse of t_cdf by bisection.
inline double t_quantile(double p, double df) {
    require(p > 0.0 && p < 1.0, ErrorCode::invalid_argument, "t_quantile needs p in (0, 1)");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -t_quantile(1.0 - p, df);
    double lo = 0.0;
    double hi = 1.0;
    while (t_cdf(hi, df) < p) {
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (t_cdf(mid, df) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// mean +/- t_{0.975, n-1} * sd / sqrt(n).
inline Interval confidence_interval_95(std::span<const double> v) {
    const MeanVar mv = mean_var(v);
    const double n = static_cast<double>(v.size());
    const double half = t_quantile(0.975, n - 1.0) * std::sqrt(mv.variance) / std::sqrt(n);
    return {mv.mean - half, mv.mean + half};
}

inline Interval confidence_interval_95(const SampleSet& s) {
    return confidence_interval_95(std::span<const double>(s.values));
}

/// Sample standard deviation implied by a reported 95% interval at size n.
inline double sd_from_ci95(Interval ci, std::size_t n) {
    require(n >= 2, ErrorCode::invalid_argument, "sd_from_ci95 needs n >= 2");
    const double half = 0.5 * (ci.high - ci.low);
    const double dn = static_cast<double>(n);
    return half * std::sqrt(dn) / t_quantile(0.975, dn - 1.0);
}

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Two-sample, two-sided, pooled-variance Student's t-test.
/// With zero pooled variance: p = 1 for equal means, 0 otherwise.
inline TTest students_t_test(std::span<const double> a, std::span<const double> b) {
    check_sample(a, "students_t_test");
    check_sample(b, "students_t_test");
    const MeanVar ma = mean_var(a);
    const MeanVar mb = mean_var(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * ma.variance + (nb - 1.0) * mb.variance) / df;
    if (pooled == 0.0) {
        if (ma.mean == mb.mean) return {0.0, df, 1.0};
        const double inf = std::numeric_limits<double>::infinity();
        return {ma.mean > mb.mean ? inf : -inf, df, 0.0};
    }
    const double t = (ma.mean - mb.mean) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    // Upper tail directly; 1 - cdf would cancel for large |t|.
    const double p = 2.0 * t_cdf(-std::abs(t), df);
    return {t, df, std::min(1.0, p)};
}

inline TTest students_t_test(const SampleSet& a, const SampleSet& b) {
    return students_t_test(std::span<const double>(a.values), std::span<const double>(b.values));
}

struct HolmResult {
    std::vector<double> thresholds; // ascending, alpha / (m - k + 1)
    std::vector<bool> significant;  // in input order
};

/// Step-down Holm-Bonferroni: walk the sorted p-values, reject while
/// p_(k) < alpha / (m - k + 1), stop at the first failure.
inline HolmResult holm_bonferroni(std::span<const double> p_values, double alpha = 0.05) {
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_argument, "alpha must be in (0, 1]");
    for (double p : p_values) {
        require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_argument,
                "p-value out of range: " + std::to_string(p));
    }
    const std::size_t m = p_values.size();
    HolmResult out;
    out.thresholds.resize(m);
    out.significant.assign(m, false);
    for (std::size_t k = 0; k < m; ++k) {
        out.thresholds[k] = alpha / static_cast<double>(m - k);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
    for (std::size_t k = 0; k < m; ++k) {
        if (!(p_values[order[k]] < out.thresholds[k])) break;
        out.significant[order[k]] = true;
    }
    return out;
}

struct Comparison {
    std::string label_a;
    std::string label_b;
    TTest test;
};

struct ComparisonReport {
    std::vector<Comparison> pairs;
    double alpha = 0.05;
    std::vector<double> holm_thresholds;
    std::vector<bool> significant;
};

/// All pairwise tests among the given sets, Holm-corrected as one family.
inline ComparisonReport compare_all_pairs(std::span<const SampleSet> sets, double alpha = 0.05) {
    ComparisonReport report;
    report.alpha = alpha;
    std::vector<double> ps;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            report.pairs.push_back({sets[i].label, sets[j].label, students_t_test(sets[i], sets[j])});
            ps.push_back(report.pairs.back().test.p);
        }
    }
    HolmResult holm = holm_bonferroni(ps, alpha);
    report.holm_thresholds = std::move(holm.thresholds);
    report.significant = std::move(holm.significant);
    return report;
}

} // namespace coneboot::stats

#endif
