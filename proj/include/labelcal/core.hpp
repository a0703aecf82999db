#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "labelcal/error.hpp"
#include "labelcal/text.hpp"

namespace labelcal {

/// Values read outside [0, 1] by at most this much are clamped.
inline constexpr double kProbabilityClampTolerance = 1e-9;

namespace detail {
inline void validate_label_names(const std::vector<std::string>& labels) {
    std::unordered_set<std::string> seen;
    for (const auto& name : labels) {
        if (name.empty()) throw Error(ErrorCode::DuplicateLabel, "label name is empty");
        if (!seen.insert(name).second)
            throw Error(ErrorCode::DuplicateLabel, "label name appears more than once", std::nullopt, name);
    }
}
}  // namespace detail

/// N x L matrix of probabilities in [0, 1], row-major, with named columns.
class ProbMatrix {
public:
    ProbMatrix() = default;

    ProbMatrix(std::vector<std::string> labels, std::size_t rows, std::vector<double> values)
        : labels_(std::move(labels)), rows_(rows), values_(std::move(values)) {
        detail::validate_label_names(labels_);
        if (values_.size() != rows_ * labels_.size())
            throw Error(ErrorCode::Shape, "value count " + std::to_string(values_.size()) +
                                              " does not match " + std::to_string(rows_) + " x " +
                                              std::to_string(labels_.size()));
        for (std::size_t k = 0; k < values_.size(); ++k) {
            const double v = values_[k];
            if (!(v >= 0.0 && v <= 1.0))
                throw Error(ErrorCode::Range, "probability " + std::to_string(v) + " outside [0, 1]",
                            k / labels_.size() + 1, labels_[k % labels_.size()]);
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    double operator()(std::size_t i, std::size_t l) const { return values_[i * cols() + l]; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(values_).subspan(i * cols(), cols());
    }
    std::span<const double> values() const noexcept { return values_; }

    std::vector<double> column(std::size_t l) const {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, l);
        return out;
    }

    bool same_shape(const ProbMatrix& other) const {
        return rows_ == other.rows_ && labels_ == other.labels_;
    }

    /// Entrywise transform; fn must map [0, 1] into [0, 1].
    template <class Fn>
    ProbMatrix map(Fn&& fn) const {
        std::vector<double> out(values_.size());
        std::transform(values_.begin(), values_.end(), out.begin(), fn);
        return ProbMatrix(labels_, rows_, std::move(out));
    }

    friend bool operator==(const ProbMatrix&, const ProbMatrix&) = default;

private:
    std::vector<std::string> labels_;
    std::size_t rows_ = 0;
    std::vector<double> values_;
};

enum class LabelKind { Multilabel, Multiclass };

/// N x L binary annotation matrix. In the multiclass kind every row is one-hot.
class LabelMatrix {
public:
    LabelMatrix() = default;

    LabelMatrix(std::vector<std::string> labels, std::size_t rows, std::vector<std::uint8_t> values,
                LabelKind kind = LabelKind::Multilabel)
        : labels_(std::move(labels)), rows_(rows), values_(std::move(values)), kind_(kind) {
        detail::validate_label_names(labels_);
        if (values_.size() != rows_ * labels_.size())
            throw Error(ErrorCode::Shape, "value count does not match label matrix shape");
        for (std::size_t k = 0; k < values_.size(); ++k)
            if (values_[k] > 1)
                throw Error(ErrorCode::Range, "label entry must be 0 or 1", k / labels_.size() + 1,
                            labels_[k % labels_.size()]);
        if (kind_ == LabelKind::Multiclass) {
            for (std::size_t i = 0; i < rows_; ++i) {
                int sum = 0;
                for (std::size_t l = 0; l < cols(); ++l) sum += (*this)(i, l);
                if (sum != 1)
                    throw Error(ErrorCode::Range, "multiclass row must contain exactly one 1", i + 1);
            }
        }
    }

    /// One-hot matrix from class indices in [0, labels.size()).
    static LabelMatrix from_classes(std::vector<std::string> labels, std::span<const int> classes) {
        const std::size_t L = labels.size();
        std::vector<std::uint8_t> values(classes.size() * L, 0);
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= L)
                throw Error(ErrorCode::Range, "class index out of range", i + 1);
            values[i * L + static_cast<std::size_t>(classes[i])] = 1;
        }
        return LabelMatrix(std::move(labels), classes.size(), std::move(values), LabelKind::Multiclass);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    LabelKind kind() const noexcept { return kind_; }

    int operator()(std::size_t i, std::size_t l) const { return values_[i * cols() + l]; }
    std::span<const std::uint8_t> row(std::size_t i) const {
        return std::span<const std::uint8_t>(values_).subspan(i * cols(), cols());
    }

    /// Positives per label.
    std::vector<std::size_t> column_counts() const {
        std::vector<std::size_t> counts(cols(), 0);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t l = 0; l < cols(); ++l) counts[l] += (*this)(i, l);
        return counts;
    }

    /// Class index per row; only valid for one-hot rows.
    std::vector<int> classes() const {
        std::vector<int> out(rows_, -1);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t l = 0; l < cols(); ++l) {
                if ((*this)(i, l) == 1) {
                    if (out[i] != -1) throw Error(ErrorCode::Range, "row is not one-hot", i + 1);
                    out[i] = static_cast<int>(l);
                }
            }
            if (out[i] == -1) throw Error(ErrorCode::Range, "row is not one-hot", i + 1);
        }
        return out;
    }

    /// The same annotations viewed as probabilities 0/1.
    ProbMatrix as_probabilities() const {
        std::vector<double> v(values_.begin(), values_.end());
        return ProbMatrix(labels_, rows_, std::move(v));
    }

    friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

private:
    std::vector<std::string> labels_;
    std::size_t rows_ = 0;
    std::vector<std::uint8_t> values_;
    LabelKind kind_ = LabelKind::Multilabel;
};

/// Fold models' predictions on the same items. folds[m] is the evaluation
/// fold held out when member m was trained.
struct EnsembleSet {
    std::vector<ProbMatrix> members;
    std::vector<int> folds;

    void validate() const {
        if (members.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble has no members");
        if (!folds.empty() && folds.size() != members.size())
            throw Error(ErrorCode::Shape, "fold id count does not match member count");
        for (std::size_t m = 1; m < members.size(); ++m)
            if (!members[m].same_shape(members[0]))
                throw Error(ErrorCode::Shape,
                            "ensemble member " + std::to_string(m) + " differs in shape or label order");
    }
};

/// Entrywise arithmetic mean over members.
inline ProbMatrix ensemble_average(const EnsembleSet& set) {
    set.validate();
    const ProbMatrix& first = set.members.front();
    const std::size_t size = first.values().size();
    std::vector<double> sum(size, 0.0), lo(size, 1.0), hi(size, 0.0);
    for (const auto& member : set.members) {
        const auto v = member.values();
        for (std::size_t k = 0; k < size; ++k) {
            sum[k] += v[k];
            lo[k] = std::min(lo[k], v[k]);
            hi[k] = std::max(hi[k], v[k]);
        }
    }
    const double count = static_cast<double>(set.members.size());
    // Rounding in the sum can push the mean a few ulps outside the member range.
    for (std::size_t k = 0; k < size; ++k) sum[k] = std::clamp(sum[k] / count, lo[k], hi[k]);
    return ProbMatrix(first.labels(), first.rows(), std::move(sum));
}

/// Column-wise concatenation, e.g. content and context label predictions.
inline ProbMatrix hconcat(std::span<const ProbMatrix> parts) {
    if (parts.empty()) return {};
    const std::size_t rows = parts.front().rows();
    std::vector<std::string> labels;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw Error(ErrorCode::Shape, "matrices to concatenate differ in row count");
        labels.insert(labels.end(), p.labels().begin(), p.labels().end());
    }
    std::vector<double> values;
    values.reserve(rows * labels.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (const auto& p : parts) {
            const auto r = p.row(i);
            values.insert(values.end(), r.begin(), r.end());
        }
    return ProbMatrix(std::move(labels), rows, std::move(values));
}

/// Indices of texts that contain `needle` after normalization (NFC, and
/// optionally case folding applied to both sides).
inline std::vector<std::size_t> substring_filter(std::span<const std::string> texts, std::string_view needle,
                                                 bool fold_case = false) {
    if (needle.empty()) throw Error(ErrorCode::InvalidArgument, "needle must be non-empty");
    const std::string pattern = text::normalize(needle, fold_case);
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < texts.size(); ++i)
        if (text::normalize(texts[i], fold_case).find(pattern) != std::string::npos) hits.push_back(i);
    return hits;
}

}  // namespace labelcal
