#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"
#include "labelcal/parallel.hpp"
#include "labelcal/rng.hpp"

namespace labelcal {

struct FoldAssignment {
    std::vector<int> fold_of;
    int k = 0;
    /// |fold proportion - global proportion| for every (label, fold), descending.
    std::vector<double> score;

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
        for (int f : fold_of) ++sizes[static_cast<std::size_t>(f)];
        return sizes;
    }
};

/// Lexicographic order on descending-sorted deviation vectors. Smaller is
/// better: the worst deviation is compared first, then the next worst.
inline bool score_less(std::span<const double> a, std::span<const double> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace detail {

// Row-wise positive label indices, so scoring touches only the nonzeros.
struct SparseLabels {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> positives;
    std::vector<double> global_rate;

    explicit SparseLabels(const LabelMatrix& labels) : rows(labels.rows()), cols(labels.cols()) {
        offsets.reserve(rows + 1);
        offsets.push_back(0);
        std::vector<std::size_t> counts(cols, 0);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t l = 0; l < cols; ++l)
                if (labels(i, l)) {
                    positives.push_back(static_cast<std::uint32_t>(l));
                    ++counts[l];
                }
            offsets.push_back(positives.size());
        }
        global_rate.resize(cols);
        for (std::size_t l = 0; l < cols; ++l)
            global_rate[l] = rows ? static_cast<double>(counts[l]) / static_cast<double>(rows) : 0.0;
    }
};

inline void score_into(const SparseLabels& labels, std::span<const int> fold_of, int k,
                       std::vector<std::size_t>& fold_counts, std::vector<std::size_t>& sizes,
                       std::vector<double>& out) {
    const std::size_t K = static_cast<std::size_t>(k);
    fold_counts.assign(labels.cols * K, 0);
    sizes.assign(K, 0);
    for (std::size_t i = 0; i < labels.rows; ++i) {
        const std::size_t f = static_cast<std::size_t>(fold_of[i]);
        ++sizes[f];
        for (std::size_t p = labels.offsets[i]; p < labels.offsets[i + 1]; ++p)
            ++fold_counts[labels.positives[p] * K + f];
    }
    out.resize(labels.cols * K);
    for (std::size_t f = 0; f < K; ++f)
        if (sizes[f] == 0) throw Error(ErrorCode::InvalidArgument, "fold " + std::to_string(f) + " is empty");
    for (std::size_t l = 0; l < labels.cols; ++l)
        for (std::size_t f = 0; f < K; ++f)
            out[l * K + f] = std::fabs(static_cast<double>(fold_counts[l * K + f]) / static_cast<double>(sizes[f]) -
                                       labels.global_rate[l]);
    std::sort(out.begin(), out.end(), std::greater<>());
}

// Balanced partition from a seeded shuffle: position j of the permutation
// goes to the fold whose contiguous chunk contains j.
inline void random_partition(std::size_t n, int k, std::uint64_t seed, std::vector<std::size_t>& perm,
                             std::vector<int>& fold_of) {
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    fold_of.resize(n);
    const std::size_t K = static_cast<std::size_t>(k);
    for (std::size_t f = 0; f < K; ++f)
        for (std::size_t j = n * f / K; j < n * (f + 1) / K; ++j) fold_of[perm[j]] = static_cast<int>(f);
}

inline void check_fold_ids(std::span<const int> fold_of, std::size_t rows, int k) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
    if (fold_of.size() != rows) throw Error(ErrorCode::Shape, "fold vector length does not match item count");
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] < 0 || fold_of[i] >= k) throw Error(ErrorCode::Range, "fold id out of range", i + 1);
}

}  // namespace detail

inline std::vector<double> partition_score(const LabelMatrix& labels, std::span<const int> fold_of, int k) {
    detail::check_fold_ids(fold_of, labels.rows(), k);
    const detail::SparseLabels sparse(labels);
    std::vector<std::size_t> counts, sizes;
    std::vector<double> out;
    detail::score_into(sparse, fold_of, k, counts, sizes, out);
    return out;
}

/// Seed of candidate partition c in a search started from `seed`.
inline std::uint64_t candidate_seed(std::uint64_t seed, std::uint64_t c) { return derive_seed(seed, {c}); }

/// Random search for an approximately stratified multilabel k-fold
/// partition: the candidate with the lexicographically smallest sorted
/// deviation vector wins, earliest candidate on ties.
inline FoldAssignment stratified_kfold(const LabelMatrix& labels, int k, std::uint64_t candidates,
                                       std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
    if (labels.rows() < static_cast<std::size_t>(k))
        throw Error(ErrorCode::InvalidArgument, "fewer items than folds");
    if (candidates < 1) throw Error(ErrorCode::InvalidArgument, "need at least one candidate");

    const detail::SparseLabels sparse(labels);
    struct Best {
        std::uint64_t index = 0;
        std::vector<double> score;
        bool found = false;
    };
    // Fixed chunk count: the reduction below is identical for any thread count.
    const std::size_t chunks = static_cast<std::size_t>(std::min<std::uint64_t>(candidates, 64));
    std::vector<Best> best(chunks);
    parallel_chunks(candidates, chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        std::vector<std::size_t> perm, counts, sizes;
        std::vector<int> fold_of;
        std::vector<double> score;
        Best& b = best[chunk];
        for (std::size_t c = begin; c < end; ++c) {
            detail::random_partition(labels.rows(), k, candidate_seed(seed, c), perm, fold_of);
            detail::score_into(sparse, fold_of, k, counts, sizes, score);
            if (!b.found || score_less(score, b.score)) {
                b.index = c;
                b.score = score;
                b.found = true;
            }
        }
    });
    const Best* winner = &best[0];
    for (const auto& b : best)
        if (b.found && score_less(b.score, winner->score)) winner = &b;

    FoldAssignment out;
    out.k = k;
    std::vector<std::size_t> perm;
    detail::random_partition(labels.rows(), k, candidate_seed(seed, winner->index), perm, out.fold_of);
    out.score = winner->score;
    return out;
}

/// Exact per-class stratification for single-label data. Items of each
/// class are shuffled, classes are laid out in class order, and position j
/// is dealt to fold j mod k, so per-class fold counts and total fold sizes
/// both differ by at most one.
inline FoldAssignment stratified_single_label(std::span<const int> classes, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
    if (classes.size() < static_cast<std::size_t>(k))
        throw Error(ErrorCode::InvalidArgument, "fewer items than folds");
    int num_classes = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] < 0) throw Error(ErrorCode::Range, "negative class id", i + 1);
        num_classes = std::max(num_classes, classes[i] + 1);
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < classes.size(); ++i) members[static_cast<std::size_t>(classes[i])].push_back(i);
    for (std::size_t c = 0; c < members.size(); ++c)
        if (members[c].empty())
            throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(c) + " has no members");

    FoldAssignment out;
    out.k = k;
    out.fold_of.assign(classes.size(), 0);
    std::size_t position = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
        Rng rng(derive_seed(seed, {c}));
        rng.shuffle(std::span<std::size_t>(members[c]));
        for (std::size_t i : members[c]) out.fold_of[i] = static_cast<int>(position++ % static_cast<std::size_t>(k));
    }
    std::vector<std::string> names(members.size());
    for (std::size_t c = 0; c < names.size(); ++c) names[c] = std::to_string(c);
    const LabelMatrix onehot = LabelMatrix::from_classes(std::move(names), classes);
    out.score = partition_score(onehot, out.fold_of, k);
    return out;
}

}  // namespace labelcal
