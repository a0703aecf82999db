#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"
#include "labelcal/parallel.hpp"
#include "labelcal/rng.hpp"

namespace labelcal::sampling {

inline constexpr int kBinCount = 5;
inline constexpr std::size_t kDefaultValidationSize = 100;

/// Per-label equal-width binning of [0, max probability] into five bins,
/// [a, b) except the last which is closed.
struct BinStructure {
    std::vector<double> label_max;          // p_l
    std::vector<std::array<std::size_t, kBinCount>> counts;  // C_{l,j}
    std::vector<std::uint8_t> bin_of;       // j_{i,l}, row-major N x L, 0-based
    std::size_t rows = 0;

    std::size_t bin(std::size_t i, std::size_t l) const { return bin_of[i * label_max.size() + l]; }
};

inline BinStructure bin_structure(const ProbMatrix& probs) {
    const std::size_t N = probs.rows(), L = probs.cols();
    BinStructure b;
    b.rows = N;
    b.label_max.assign(L, 0.0);
    b.counts.assign(L, {});
    b.bin_of.assign(N * L, 0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t l = 0; l < L; ++l) b.label_max[l] = std::max(b.label_max[l], probs(i, l));
    for (std::size_t l = 0; l < L; ++l) {
        const double top = b.label_max[l];
        std::array<double, kBinCount> lower{};
        for (int j = 0; j < kBinCount; ++j) lower[static_cast<std::size_t>(j)] = top * j / kBinCount;
        for (std::size_t i = 0; i < N; ++i) {
            std::size_t j = 0;
            // With top == 0 every item sits in the first bin.
            if (top > 0.0)
                while (j + 1 < kBinCount && probs(i, l) >= lower[j + 1]) ++j;
            b.bin_of[i * L + l] = static_cast<std::uint8_t>(j);
            ++b.counts[l][j];
        }
    }
    return b;
}

/// w_i = sum over labels of 1 / (items sharing item i's bin for that label).
inline std::vector<double> importance_weights(const ProbMatrix& probs) {
    const BinStructure b = bin_structure(probs);
    std::vector<double> w(probs.rows(), 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t l = 0; l < probs.cols(); ++l)
            w[i] += 1.0 / static_cast<double>(b.counts[l][b.bin(i, l)]);
    return w;
}

/// Weighted sampling without replacement (Efraimidis-Spirakis): each item
/// draws key u^(1/w) and the n largest keys are kept. Keys are compared in
/// log form, log(u) / w. Returns indices in ascending order.
inline std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t n, std::uint64_t seed) {
    if (n > weights.size()) throw Error(ErrorCode::InvalidArgument, "sample size exceeds population");
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw Error(ErrorCode::Range, "weights must be positive and finite", i + 1);
    Rng rng(seed);
    std::vector<double> keys(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) keys[i] = std::log(rng.uniform_open()) / weights[i];
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return keys[a] > keys[b] || (keys[a] == keys[b] && a < b); });
    order.resize(n);
    std::sort(order.begin(), order.end());
    return order;
}

struct Mean {
    double operator()(std::span<const double> v) const {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
};

/// Population standard deviation of a statistic over bootstrap replicates.
template <class Statistic = Mean>
double bootstrap_std(std::span<const double> values, std::size_t resamples, std::uint64_t seed,
                     Statistic statistic = {}) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "bootstrap of empty input");
    if (resamples < 1) throw Error(ErrorCode::InvalidArgument, "need at least one resample");
    Rng rng(seed);
    std::vector<double> sample(values.size());
    double mean = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < resamples; ++r) {
        for (double& s : sample) s = values[static_cast<std::size_t>(rng.below(values.size()))];
        const double x = statistic(std::span<const double>(sample));
        // Welford update
        const double delta = x - mean;
        mean += delta / static_cast<double>(r + 1);
        m2 += delta * (x - mean);
    }
    return std::sqrt(std::max(0.0, m2 / static_cast<double>(resamples)));
}

struct SizingPoint {
    std::size_t sample_size = 0;
    double mean_std = 0.0;
    std::size_t repetitions = 0;
};

using SizingCurve = std::vector<SizingPoint>;

struct SizingOptions {
    std::vector<std::size_t> sizes;
    std::size_t reps = 100;
    std::size_t resamples = 10000;
    std::uint64_t seed = 0;

    static std::vector<std::size_t> default_sizes() {
        std::vector<std::size_t> s;
        for (std::size_t v = 50; v <= 300; v += 10) s.push_back(v);
        return s;
    }
};

/// For each sample size s and each group (fold evaluation set), `reps`
/// times: draw s items uniformly without replacement and estimate the
/// bootstrap std of the statistic; the point is the mean over all draws.
template <class Statistic = Mean>
SizingCurve sizing_curve(std::span<const std::vector<double>> groups, SizingOptions options,
                         Statistic statistic = {}) {
    if (options.sizes.empty()) options.sizes = SizingOptions::default_sizes();
    if (groups.empty()) throw Error(ErrorCode::InvalidArgument, "no score groups");
    if (options.reps < 1) throw Error(ErrorCode::InvalidArgument, "need at least one repetition");
    for (std::size_t s = 0; s < options.sizes.size(); ++s) {
        if (options.sizes[s] == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be positive");
        if (s > 0 && options.sizes[s] <= options.sizes[s - 1])
            throw Error(ErrorCode::InvalidArgument, "sample sizes must be strictly increasing");
        for (const auto& g : groups)
            if (options.sizes[s] > g.size())
                throw Error(ErrorCode::InvalidArgument,
                            "sample size " + std::to_string(options.sizes[s]) + " exceeds population " +
                                std::to_string(g.size()));
    }
    const std::size_t per_size = groups.size() * options.reps;
    const std::size_t jobs = options.sizes.size() * per_size;
    std::vector<double> stds(jobs);
    parallel_for(jobs, [&](std::size_t job) {
        const std::size_t s = job / per_size;
        const std::size_t g = (job % per_size) / options.reps;
        const std::size_t r = job % options.reps;
        const auto& pool = groups[g];
        Rng rng(derive_seed(options.seed, {s, g, r, 0}));
        std::vector<double> subset(pool.begin(), pool.end());
        const std::size_t size = options.sizes[s];
        for (std::size_t i = 0; i < size; ++i)
            std::swap(subset[i], subset[i + static_cast<std::size_t>(rng.below(subset.size() - i))]);
        subset.resize(size);
        stds[job] = bootstrap_std(std::span<const double>(subset), options.resamples,
                                  derive_seed(options.seed, {s, g, r, 1}), statistic);
    });
    SizingCurve curve;
    for (std::size_t s = 0; s < options.sizes.size(); ++s) {
        double sum = 0.0;
        for (std::size_t k = 0; k < per_size; ++k) sum += stds[s * per_size + k];
        curve.push_back({options.sizes[s], sum / static_cast<double>(per_size), per_size});
    }
    return curve;
}

template <class Statistic = Mean>
SizingCurve sizing_curve(const std::vector<double>& scores, SizingOptions options, Statistic statistic = {}) {
    const std::vector<std::vector<double>> groups{scores};
    return sizing_curve(std::span<const std::vector<double>>(groups), std::move(options), statistic);
}

}  // namespace labelcal::sampling
