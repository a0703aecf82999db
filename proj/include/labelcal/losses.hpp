#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "labelcal/error.hpp"

namespace labelcal::losses {

inline constexpr double kDefaultGamma = 2.0;
inline constexpr double kDefaultMaxMargin = 0.5;

struct LossValue {
    double value = 0.0;
    std::vector<double> gradient;
};

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_sum_exp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

/// log softmax(z) as (z_j - max) - log1p(sum of the other exp terms), which
/// keeps full relative precision for near-deterministic distributions.
inline std::vector<double> log_softmax(std::span<const double> z) {
    const auto top = std::max_element(z.begin(), z.end());
    const double m = *top;
    double rest = 0.0;
    for (auto it = z.begin(); it != z.end(); ++it)
        if (it != top) rest += std::exp(*it - m);
    const double tail = std::log1p(rest);
    std::vector<double> out(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = (z[j] - m) - tail;
    return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
    const double lse = log_sum_exp(z);
    std::vector<double> p(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) p[j] = std::exp(z[j] - lse);
    return p;
}

/// Sigmoid focal loss summed over independent labels.
///
/// With s = z for a positive target and s = -z for a negative one,
/// p_t = sigmoid(s) and each term is alpha_t * sigmoid(-s)^gamma * softplus(-s),
/// which is -alpha_t (1 - p_t)^gamma log p_t in a form that stays finite at
/// saturation. alpha_t is alpha for positives and 1 - alpha for negatives;
/// without alpha every term has weight 1 and gamma = 0 is binary cross-entropy.
inline LossValue focal_loss(std::span<const double> logits, std::span<const double> targets,
                            double gamma = kDefaultGamma, std::optional<double> alpha = std::nullopt) {
    if (!(gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be non-negative");
    if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1]");
    if (logits.size() != targets.size()) throw Error(ErrorCode::Shape, "logits and targets differ in length");

    LossValue out;
    out.gradient.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (targets[j] != 0.0 && targets[j] != 1.0)
            throw Error(ErrorCode::Range, "focal loss target must be 0 or 1");
        const bool positive = targets[j] == 1.0;
        const double sign = positive ? 1.0 : -1.0;
        const double s = sign * logits[j];
        const double weight = alpha ? (positive ? *alpha : 1.0 - *alpha) : 1.0;
        const double q = sigmoid(-s);  // 1 - p_t
        const double nll = softplus(-s);  // -log p_t
        const double modulator = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
        out.value += weight * modulator * nll;
        // d/ds [q^gamma * nll] = -q^gamma * (gamma * p_t * nll + q)
        const double dds = -modulator * (gamma * sigmoid(s) * nll + q);
        out.gradient[j] = weight * sign * dds;
    }
    return out;
}

/// Per-class margins proportional to n^(-1/4), scaled so the largest is
/// `max_margin`.
class MarginVector {
public:
    MarginVector() = default;
    explicit MarginVector(std::vector<double> margins) : margins_(std::move(margins)) {
        for (double m : margins_)
            if (!(m >= 0.0) || !std::isfinite(m)) throw Error(ErrorCode::Range, "margin must be finite and >= 0");
    }
    std::size_t size() const noexcept { return margins_.size(); }
    double operator[](std::size_t j) const { return margins_[j]; }
    std::span<const double> values() const noexcept { return margins_; }

private:
    std::vector<double> margins_;
};

inline MarginVector ldam_margins(std::span<const std::size_t> class_counts, double max_margin = kDefaultMaxMargin) {
    if (class_counts.empty()) throw Error(ErrorCode::InvalidArgument, "no classes");
    if (!(max_margin > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_margin must be positive");
    std::vector<double> raw(class_counts.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
        if (class_counts[j] == 0)
            throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(j) + " has zero count");
        raw[j] = 1.0 / std::sqrt(std::sqrt(static_cast<double>(class_counts[j])));
    }
    const double largest = *std::max_element(raw.begin(), raw.end());
    for (double& m : raw) m = m == largest ? max_margin : m * (max_margin / largest);
    return MarginVector(std::move(raw));
}

/// Label-distribution-aware margin loss: softmax cross-entropy of
/// scale * (z - margin_y e_y).
inline LossValue ldam_loss(std::span<const double> logits, std::size_t true_class, const MarginVector& margins,
                           double scale = 1.0) {
    if (logits.empty()) throw Error(ErrorCode::InvalidArgument, "empty logits");
    if (true_class >= logits.size()) throw Error(ErrorCode::Range, "true class index out of range");
    if (margins.size() != logits.size()) throw Error(ErrorCode::Shape, "margin count does not match logits");
    if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");

    std::vector<double> adjusted(logits.begin(), logits.end());
    adjusted[true_class] -= margins[true_class];
    for (double& v : adjusted) v *= scale;
    const auto shifted = log_softmax(adjusted);
    LossValue out;
    out.value = -shifted[true_class];
    out.gradient.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        out.gradient[j] = scale * (std::exp(shifted[j]) - (j == true_class ? 1.0 : 0.0));
    return out;
}

/// Plain softmax cross-entropy.
inline LossValue cross_entropy(std::span<const double> logits, std::size_t true_class) {
    return ldam_loss(logits, true_class, MarginVector(std::vector<double>(logits.size(), 0.0)));
}

/// -beta * H(softmax(z)), entropy in nats. Added to a classification loss it
/// penalizes confident (low-entropy) output distributions.
inline LossValue confidence_penalty(std::span<const double> logits, double beta) {
    if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be non-negative");
    if (logits.empty()) throw Error(ErrorCode::InvalidArgument, "empty logits");
    LossValue out;
    out.gradient.assign(logits.size(), 0.0);
    if (beta == 0.0) return out;

    const auto logp = log_softmax(logits);
    std::vector<double> p(logits.size());
    double entropy = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(logp[j]);
        entropy -= p[j] * logp[j];
    }
    out.value = -beta * entropy;
    // dH/dz_k = -p_k (log p_k + H)
    for (std::size_t j = 0; j < logits.size(); ++j) out.gradient[j] = beta * p[j] * (logp[j] + entropy);
    return out;
}

}  // namespace labelcal::losses
