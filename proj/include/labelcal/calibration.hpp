#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"
#include "labelcal/folds.hpp"
#include "labelcal/metrics.hpp"
#include "labelcal/parallel.hpp"

namespace labelcal::calibration {

struct Thresholds {
    double p_low = 0.0;
    double p_high = 1.0;

    void validate() const {
        if (!(p_low >= 0.0 && p_low <= 1.0 && p_high >= 0.0 && p_high <= 1.0))
            throw Error(ErrorCode::Range, "thresholds must lie in [0, 1]");
        if (p_low > p_high) throw Error(ErrorCode::InvalidArgument, "p_low must not exceed p_high");
    }
    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

inline double truncate_value(double p, const Thresholds& t) {
    if (p < t.p_low) return 0.0;
    if (p > t.p_high) return 1.0;
    return p;
}

/// p < p_low becomes 0, p > p_high becomes 1; values on a threshold stay.
inline ProbMatrix truncate(const ProbMatrix& probs, const Thresholds& t) {
    t.validate();
    return probs.map([&](double p) { return truncate_value(p, t); });
}

/// Usual binary decision: p <= 0.5 becomes 0, p > 0.5 becomes 1.
inline ProbMatrix threshold_at_half(const ProbMatrix& probs) {
    return probs.map([](double p) { return p > 0.5 ? 1.0 : 0.0; });
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

inline constexpr double kDefaultGridStep = 0.01;
inline constexpr Range kDefaultLowRange{0.0, 0.5};
inline constexpr Range kDefaultHighRange{0.5, 1.0};

/// Grid points lo + i * step for i = 0, 1, ... while not past hi (with a
/// relative slack of 1e-9 steps so that hi itself is reached).
inline std::vector<double> grid_points(Range r, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorCode::InvalidArgument, "grid step must be positive");
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) throw Error(ErrorCode::InvalidArgument, "invalid grid range");
    const auto count = static_cast<std::size_t>(std::floor((r.hi - r.lo) / step + 1e-9)) + 1;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = std::min(r.lo + static_cast<double>(i) * step, r.hi);
    return out;
}

struct GridResult {
    Thresholds best;
    double error = 0.0;
    std::size_t evaluated = 0;
};

/// Exhaustive search for the truncation thresholds minimizing the label
/// count error rate of out-of-fold predictions. Pairs with p_low > p_high
/// are skipped. Ties go to the smallest p_low, then the smallest p_high.
/// The returned error is bit-identical to
/// label_count_error_rate(truncate(oof, best), truth).rate.
inline GridResult grid_search_thresholds(const ProbMatrix& oof, const LabelMatrix& truth,
                                         double step = kDefaultGridStep, Range low = kDefaultLowRange,
                                         Range high = kDefaultHighRange) {
    if (oof.rows() != truth.rows() || oof.cols() != truth.cols())
        throw Error(ErrorCode::Shape, "probability and label matrices differ in shape");
    const auto lows = grid_points(low, step);
    const auto highs = grid_points(high, step);

    const std::size_t N = oof.rows(), L = oof.cols();
    std::vector<double> actual(L, 0.0);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t i = 0; i < N; ++i) actual[l] += truth(i, l);
    std::size_t used = 0;
    for (double a : actual) used += a != 0.0;
    if (used == 0) throw Error(ErrorCode::Undefined, "every label has zero true count");

    // Column-major copy for the inner loop; summation order stays i = 0..N-1.
    std::vector<double> columns(N * L);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t i = 0; i < N; ++i) columns[l * N + i] = oof(i, l);

    const std::size_t points = lows.size() * highs.size();
    constexpr double kSkip = std::numeric_limits<double>::infinity();
    std::vector<double> errors(points, kSkip);
    parallel_for(points, [&](std::size_t g) {
        const Thresholds t{lows[g / highs.size()], highs[g % highs.size()]};
        if (t.p_low > t.p_high) return;
        double total = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            if (actual[l] == 0.0) continue;
            double predicted = 0.0;
            const double* col = &columns[l * N];
            for (std::size_t i = 0; i < N; ++i) predicted += truncate_value(col[i], t);
            total += std::fabs(predicted - actual[l]) / actual[l];
        }
        errors[g] = total / static_cast<double>(used);
    });

    GridResult out;
    bool found = false;
    // Row-major over (low, high) ascending: strict < keeps the tie-break.
    for (std::size_t g = 0; g < points; ++g) {
        if (errors[g] == kSkip) continue;
        ++out.evaluated;
        if (!found || errors[g] < out.error) {
            out.error = errors[g];
            out.best = {lows[g / highs.size()], highs[g % highs.size()]};
            found = true;
        }
    }
    if (!found) throw Error(ErrorCode::InvalidArgument, "empty threshold grid");
    return out;
}

/// Out-of-fold matrix: row i comes from the member whose held-out fold
/// contains item i.
inline ProbMatrix out_of_fold(const EnsembleSet& set, std::span<const int> fold_of) {
    set.validate();
    if (set.folds.size() != set.members.size())
        throw Error(ErrorCode::InvalidArgument, "every ensemble member needs a fold id");
    const ProbMatrix& first = set.members.front();
    if (fold_of.size() != first.rows()) throw Error(ErrorCode::Shape, "fold vector length does not match rows");
    std::vector<double> values;
    values.reserve(first.values().size());
    for (std::size_t i = 0; i < first.rows(); ++i) {
        const ProbMatrix* source = nullptr;
        for (std::size_t m = 0; m < set.members.size(); ++m)
            if (set.folds[m] == fold_of[i]) {
                if (source) throw Error(ErrorCode::InvalidArgument, "two members share a fold id");
                source = &set.members[m];
            }
        if (!source) throw Error(ErrorCode::InvalidArgument, "no member held out fold " + std::to_string(fold_of[i]), i + 1);
        const auto r = source->row(i);
        values.insert(values.end(), r.begin(), r.end());
    }
    return ProbMatrix(first.labels(), first.rows(), std::move(values));
}

}  // namespace labelcal::calibration
