#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"

namespace labelcal::metrics {

inline constexpr int kDefaultEceBins = 10;
inline constexpr double kDefaultTickDivisor = 40.0;

/// Mann-Whitney ROC AUC: probability that a random positive outscores a
/// random negative, ties counted as one half. Empty when the labels hold
/// only one class.
template <class Label>
std::optional<double> roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::Shape, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!std::isfinite(scores[i])) throw Error(ErrorCode::Range, "non-finite score", i + 1);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positives = 0.0, negatives = 0.0, wins = 0.0;
    for (std::size_t g = 0; g < order.size();) {
        std::size_t h = g;
        double group_pos = 0.0, group_neg = 0.0;
        while (h < order.size() && scores[order[h]] == scores[order[g]]) {
            if (labels[order[h]]) group_pos += 1.0; else group_neg += 1.0;
            ++h;
        }
        wins += group_pos * negatives + 0.5 * group_pos * group_neg;
        positives += group_pos;
        negatives += group_neg;
        g = h;
    }
    if (positives == 0.0 || negatives == 0.0) return std::nullopt;
    return wins / (positives * negatives);
}

struct MacroAuc {
    double macro = 0.0;
    std::vector<std::optional<double>> per_label;
    std::vector<std::size_t> undefined_labels;
};

/// Mean of per-label AUC over labels where it is defined.
inline MacroAuc macro_roc_auc(const ProbMatrix& probs, const LabelMatrix& labels) {
    if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
        throw Error(ErrorCode::Shape, "probability and label matrices differ in shape");
    MacroAuc out;
    out.per_label.resize(probs.cols());
    double sum = 0.0;
    std::size_t defined = 0;
    std::vector<std::uint8_t> y(probs.rows());
    for (std::size_t l = 0; l < probs.cols(); ++l) {
        const auto scores = probs.column(l);
        for (std::size_t i = 0; i < probs.rows(); ++i) y[i] = static_cast<std::uint8_t>(labels(i, l));
        out.per_label[l] = roc_auc<std::uint8_t>(scores, y);
        if (out.per_label[l]) {
            sum += *out.per_label[l];
            ++defined;
        } else {
            out.undefined_labels.push_back(l);
        }
    }
    if (defined == 0) throw Error(ErrorCode::Undefined, "ROC AUC is undefined for every label");
    out.macro = sum / static_cast<double>(defined);
    return out;
}

/// Unweighted mean recall over the classes that occur in `truth`.
inline double balanced_accuracy(std::span<const int> pred, std::span<const int> truth) {
    if (truth.empty()) throw Error(ErrorCode::InvalidArgument, "empty input");
    if (pred.size() != truth.size()) throw Error(ErrorCode::Shape, "pred and truth differ in length");
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // class -> (hits, count)
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& [hits, count] = per_class[truth[i]];
        ++count;
        if (pred[i] == truth[i]) ++hits;
    }
    double sum = 0.0;
    for (const auto& [cls, hc] : per_class) sum += static_cast<double>(hc.first) / static_cast<double>(hc.second);
    return sum / static_cast<double>(per_class.size());
}

/// Equal-width binned ECE over [0, 1]; bin b is [b/B, (b+1)/B), the last bin
/// also holds 1.0. Empty bins contribute nothing.
template <class Label>
double expected_calibration_error(std::span<const double> probs, std::span<const Label> labels,
                                  int bins = kDefaultEceBins) {
    if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be at least 1");
    if (probs.size() != labels.size()) throw Error(ErrorCode::Shape, "probs and labels differ in length");
    if (probs.empty()) return 0.0;
    const std::size_t B = static_cast<std::size_t>(bins);
    std::vector<double> prob_sum(B, 0.0), label_sum(B, 0.0), count(B, 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::Range, "probability outside [0, 1]", i + 1);
        const std::size_t b = std::min(B - 1, static_cast<std::size_t>(p * static_cast<double>(B)));
        prob_sum[b] += p;
        label_sum[b] += labels[i] ? 1.0 : 0.0;
        count[b] += 1.0;
    }
    double ece = 0.0;
    const double n = static_cast<double>(probs.size());
    for (std::size_t b = 0; b < B; ++b)
        if (count[b] > 0.0) ece += (count[b] / n) * std::fabs(label_sum[b] / count[b] - prob_sum[b] / count[b]);
    return ece;
}

struct LabelCountError {
    double rate = 0.0;
    /// |predicted sum - true count| / true count, empty for zero-count labels.
    std::vector<std::optional<double>> per_label;
    std::vector<std::size_t> excluded_labels;
};

/// Mean relative error between summed probabilities and true label counts.
/// Sums run over items in ascending order; callers that need bit-identical
/// values (the threshold search) rely on that order.
inline LabelCountError label_count_error_rate(const ProbMatrix& probs, const LabelMatrix& truth) {
    if (probs.rows() != truth.rows() || probs.cols() != truth.cols())
        throw Error(ErrorCode::Shape, "probability and label matrices differ in shape");
    LabelCountError out;
    out.per_label.resize(probs.cols());
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < probs.cols(); ++l) {
        double predicted = 0.0, actual = 0.0;
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            predicted += probs(i, l);
            actual += truth(i, l);
        }
        if (actual == 0.0) {
            out.excluded_labels.push_back(l);
            continue;
        }
        const double e = std::fabs(predicted - actual) / actual;
        out.per_label[l] = e;
        total += e;
        ++used;
    }
    if (used == 0) throw Error(ErrorCode::Undefined, "every label has zero true count");
    out.rate = total / static_cast<double>(used);
    return out;
}

struct TendencySeries {
    std::string label;
    int first_year = 0;
    std::vector<double> yearly_counts;  // consecutive years from first_year
    double total = 0.0;
    double tick = 1.0;
    std::vector<int> values;  // one per consecutive year pair, in {-1, 0, 1}
};

/// Tick max(total / divisor, 1) and discretized year-over-year changes.
inline TendencySeries tendency_values(std::string label, const std::map<int, double>& yearly_counts, double total,
                                      double divisor = kDefaultTickDivisor) {
    if (yearly_counts.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two years");
    if (!(divisor > 0.0)) throw Error(ErrorCode::InvalidArgument, "tick divisor must be positive");
    TendencySeries s;
    s.label = std::move(label);
    s.first_year = yearly_counts.begin()->first;
    int expected = s.first_year;
    for (const auto& [year, count] : yearly_counts) {
        if (year != expected) throw Error(ErrorCode::InvalidArgument, "years are not consecutive");
        if (!(count >= 0.0)) throw Error(ErrorCode::Range, "negative yearly count");
        s.yearly_counts.push_back(count);
        ++expected;
    }
    s.total = total;
    s.tick = std::max(total / divisor, 1.0);
    for (std::size_t y = 0; y + 1 < s.yearly_counts.size(); ++y) {
        const double diff = s.yearly_counts[y + 1] - s.yearly_counts[y];
        s.values.push_back(diff >= s.tick ? 1 : (diff <= -s.tick ? -1 : 0));
    }
    return s;
}

/// Mean |T_pred - T_truth| over all (label, year pair) cells, in percent
/// (0 to 200). Series are matched by label name.
inline double tendency_error(std::span<const TendencySeries> pred, std::span<const TendencySeries> truth) {
    if (pred.size() != truth.size()) throw Error(ErrorCode::Shape, "series sets differ in size");
    double sum = 0.0;
    std::size_t cells = 0;
    for (const auto& t : truth) {
        const auto it = std::find_if(pred.begin(), pred.end(), [&](const auto& p) { return p.label == t.label; });
        if (it == pred.end()) throw Error(ErrorCode::Shape, "no predicted series for label", std::nullopt, t.label);
        if (it->first_year != t.first_year || it->values.size() != t.values.size())
            throw Error(ErrorCode::Shape, "year ranges differ", std::nullopt, t.label);
        for (std::size_t y = 0; y < t.values.size(); ++y) sum += std::abs(it->values[y] - t.values[y]);
        cells += t.values.size();
    }
    if (cells == 0) throw Error(ErrorCode::InvalidArgument, "no tendency cells");
    return 100.0 * sum / static_cast<double>(cells);
}

/// Per-label yearly sums of a matrix column, one year per row. Years
/// without rows inside the covered span count as zero.
inline std::vector<std::map<int, double>> yearly_sums(std::span<const double> values, std::size_t cols,
                                                      std::span<const int> years) {
    if (values.size() != years.size() * cols) throw Error(ErrorCode::Shape, "year count does not match rows");
    std::vector<std::map<int, double>> out(cols);
    if (years.empty()) return out;
    const auto [lo, hi] = std::minmax_element(years.begin(), years.end());
    for (auto& m : out)
        for (int y = *lo; y <= *hi; ++y) m[y] = 0.0;
    for (std::size_t i = 0; i < years.size(); ++i)
        for (std::size_t l = 0; l < cols; ++l) out[l][years[i]] += values[i * cols + l];
    return out;
}

/// Tendency series for every label of a probability (or 0/1) matrix.
inline std::vector<TendencySeries> tendency_series(const ProbMatrix& m, std::span<const int> years,
                                                   double divisor = kDefaultTickDivisor) {
    const auto sums = yearly_sums(m.values(), m.cols(), years);
    std::vector<TendencySeries> out;
    for (std::size_t l = 0; l < m.cols(); ++l) {
        double total = 0.0;
        for (const auto& [y, c] : sums[l]) total += c;
        out.push_back(tendency_values(m.labels()[l], sums[l], total, divisor));
    }
    return out;
}

}  // namespace labelcal::metrics
