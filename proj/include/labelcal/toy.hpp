#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"
#include "labelcal/losses.hpp"
#include "labelcal/metrics.hpp"
#include "labelcal/pbt.hpp"
#include "labelcal/rng.hpp"

// Desk-scale stand-in for classifier finetuning: a linear model on synthetic
// imbalanced data, trained with the imbalance-robust losses.
namespace labelcal::toy {

enum class Mode { Multilabel, Multiclass };

struct ToySpec {
    Mode mode = Mode::Multilabel;
    std::size_t train_items = 600;
    std::size_t valid_items = 400;
    std::size_t features = 8;
    /// Multilabel: positive rate per label. Multiclass: class priors (normalized).
    std::vector<double> rates{0.3, 0.1, 0.05, 0.02};
    /// Label noise scale (multilabel) or cluster spread (multiclass).
    double noise = 0.5;
    std::size_t steps_per_epoch = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (train_items < 2 || valid_items < 2) throw Error(ErrorCode::InvalidArgument, "toy split too small");
        if (features < 1) throw Error(ErrorCode::InvalidArgument, "toy needs at least one feature");
        if (rates.empty()) throw Error(ErrorCode::InvalidArgument, "toy needs at least one label");
        for (double r : rates)
            if (!(r > 0.0 && r < 1.0 + (mode == Mode::Multiclass)))
                throw Error(ErrorCode::InvalidArgument, "toy rates must be positive (and < 1 for multilabel)");
        if (mode == Mode::Multiclass && rates.size() < 2)
            throw Error(ErrorCode::InvalidArgument, "multiclass toy needs at least two classes");
        if (!(noise >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise must be non-negative");
        if (steps_per_epoch < 1) throw Error(ErrorCode::InvalidArgument, "need at least one step per epoch");
    }
};

struct Dataset {
    std::size_t features = 0;
    std::size_t outputs = 0;  // labels or classes
    std::vector<double> x_train, x_valid;  // row-major
    std::vector<double> y_train, y_valid;  // multilabel: N x L of 0/1
    std::vector<int> c_train, c_valid;     // multiclass: class index
    std::vector<std::size_t> class_counts; // multiclass train counts

    std::size_t train_items() const { return x_train.size() / features; }
    std::size_t valid_items() const { return x_valid.size() / features; }
};

namespace detail {

inline std::vector<double> gaussian_rows(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<double> x(n * d);
    for (double& v : x) v = rng.normal();
    return x;
}

inline Dataset make_multilabel(const ToySpec& spec) {
    Rng rng(derive_seed(spec.seed, {7}));
    const std::size_t D = spec.features, L = spec.rates.size();
    Dataset ds;
    ds.features = D;
    ds.outputs = L;
    std::vector<double> w(L * D);
    for (double& v : w) v = rng.normal();
    for (std::size_t l = 0; l < L; ++l) {
        double norm = 0.0;
        for (std::size_t k = 0; k < D; ++k) norm += w[l * D + k] * w[l * D + k];
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < D; ++k) w[l * D + k] /= norm;
    }
    const std::size_t N = spec.train_items + spec.valid_items;
    const auto x = gaussian_rows(rng, N, D);
    std::vector<double> latent(N * L);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t l = 0; l < L; ++l) {
            double z = 0.0;
            for (std::size_t k = 0; k < D; ++k) z += w[l * D + k] * x[i * D + k];
            latent[i * L + l] = z + spec.noise * rng.normal();
        }
    // Thresholds at the empirical (1 - rate) quantile give the requested rates.
    std::vector<double> y(N * L, 0.0), column(N);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t i = 0; i < N; ++i) column[i] = latent[i * L + l];
        std::sort(column.begin(), column.end());
        const auto positives = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.rates[l] * N)));
        const double cut = column[N - positives];
        for (std::size_t i = 0; i < N; ++i) y[i * L + l] = latent[i * L + l] >= cut ? 1.0 : 0.0;
    }
    const std::size_t T = spec.train_items;
    ds.x_train.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(T * D));
    ds.x_valid.assign(x.begin() + static_cast<std::ptrdiff_t>(T * D), x.end());
    ds.y_train.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(T * L));
    ds.y_valid.assign(y.begin() + static_cast<std::ptrdiff_t>(T * L), y.end());
    return ds;
}

// Class counts follow the priors exactly (largest remainder), then each item
// is drawn around its class centre.
inline std::vector<int> exact_classes(std::span<const double> priors, std::size_t n, Rng& rng) {
    const double total = std::accumulate(priors.begin(), priors.end(), 0.0);
    std::vector<std::size_t> counts(priors.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < priors.size(); ++c) {
        const double exact = priors[c] / total * static_cast<double>(n);
        counts[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
    std::vector<int> classes;
    for (std::size_t c = 0; c < counts.size(); ++c) classes.insert(classes.end(), counts[c], static_cast<int>(c));
    rng.shuffle(std::span<int>(classes));
    return classes;
}

inline Dataset make_multiclass(const ToySpec& spec) {
    Rng rng(derive_seed(spec.seed, {8}));
    const std::size_t D = spec.features, K = spec.rates.size();
    Dataset ds;
    ds.features = D;
    ds.outputs = K;
    std::vector<double> centres(K * D);
    for (double& v : centres) v = 2.0 * rng.normal();
    auto draw = [&](std::size_t n, std::vector<double>& x, std::vector<int>& c) {
        c = exact_classes(spec.rates, n, rng);
        x.resize(n * D);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < D; ++k)
                x[i * D + k] = centres[static_cast<std::size_t>(c[i]) * D + k] + spec.noise * rng.normal();
    };
    draw(spec.train_items, ds.x_train, ds.c_train);
    draw(spec.valid_items, ds.x_valid, ds.c_valid);
    ds.class_counts.assign(K, 0);
    for (int c : ds.c_train) ++ds.class_counts[static_cast<std::size_t>(c)];
    for (auto& n : ds.class_counts) n = std::max<std::size_t>(n, 1);
    return ds;
}

}  // namespace detail

inline std::shared_ptr<const Dataset> make_dataset(const ToySpec& spec) {
    spec.validate();
    return std::make_shared<const Dataset>(spec.mode == Mode::Multilabel ? detail::make_multilabel(spec)
                                                                          : detail::make_multiclass(spec));
}

/// Linear model z = W x + b trained by full-batch gradient descent.
/// Multilabel: mean focal loss, scored by macro ROC AUC on the validation
/// split. Multiclass: mean LDAM loss plus confidence penalty, scored by
/// balanced accuracy.
///
/// Hyperparameters: "lr" and "weight_decay" always; "gamma" (multilabel);
/// "beta" and "max_margin" (multiclass). Missing keys take defaults.
class LinearTrainable final : public pbt::Trainable {
public:
    LinearTrainable(std::shared_ptr<const Dataset> data, Mode mode, std::size_t steps_per_epoch)
        : data_(std::move(data)), mode_(mode), steps_(steps_per_epoch) {
        weights_.assign(data_->outputs * (data_->features + 1), 0.0);
    }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        for (double& v : weights_) v = 0.01 * rng.normal();
    }

    void train_one_epoch(const pbt::Hyperparameters& h) override {
        const double lr = value(h, "lr", 0.1);
        const double decay = value(h, "weight_decay", 0.0);
        for (std::size_t s = 0; s < steps_; ++s) {
            std::vector<double> grad(weights_.size(), 0.0);
            if (mode_ == Mode::Multilabel) multilabel_gradient(h, grad);
            else multiclass_gradient(h, grad);
            const std::size_t stride = data_->features + 1;
            for (std::size_t k = 0; k < weights_.size(); ++k) {
                const bool bias = k % stride == data_->features;
                weights_[k] -= lr * (grad[k] + (bias ? 0.0 : decay * weights_[k]));
            }
        }
    }

    double evaluate() override {
        const std::size_t N = data_->valid_items();
        const std::size_t K = data_->outputs;
        std::vector<double> z(N * K);
        for (std::size_t i = 0; i < N; ++i) logits(&data_->x_valid[i * data_->features], &z[i * K]);
        if (mode_ == Mode::Multilabel) {
            // Logits rank like probabilities, which is all AUC needs.
            double sum = 0.0;
            std::size_t defined = 0;
            std::vector<double> col(N);
            std::vector<std::uint8_t> ycol(N);
            for (std::size_t l = 0; l < K; ++l) {
                for (std::size_t i = 0; i < N; ++i) {
                    col[i] = z[i * K + l];
                    ycol[i] = static_cast<std::uint8_t>(data_->y_valid[i * K + l]);
                }
                if (const auto auc = metrics::roc_auc<std::uint8_t>(col, ycol)) {
                    sum += *auc;
                    ++defined;
                }
            }
            return defined ? sum / static_cast<double>(defined) : 0.5;
        }
        std::vector<int> pred(N);
        for (std::size_t i = 0; i < N; ++i)
            pred[i] = static_cast<int>(std::max_element(&z[i * K], &z[i * K] + K) - &z[i * K]);
        return metrics::balanced_accuracy(pred, data_->c_valid);
    }

    void copy_from(const pbt::Trainable& other) override {
        const auto* o = dynamic_cast<const LinearTrainable*>(&other);
        if (!o) throw Error(ErrorCode::InvalidArgument, "copy_from needs a LinearTrainable");
        weights_ = o->weights_;
    }

    std::vector<double> parameters() const override { return weights_; }

    losses::MarginVector margins(double max_margin = losses::kDefaultMaxMargin) const {
        return losses::ldam_margins(data_->class_counts, max_margin);
    }

private:
    static double value(const pbt::Hyperparameters& h, const char* key, double fallback) {
        const auto it = h.find(key);
        return it == h.end() ? fallback : it->second;
    }

    void logits(const double* x, double* out) const {
        const std::size_t D = data_->features;
        for (std::size_t k = 0; k < data_->outputs; ++k) {
            const double* w = &weights_[k * (D + 1)];
            double z = w[D];
            for (std::size_t f = 0; f < D; ++f) z += w[f] * x[f];
            out[k] = z;
        }
    }

    void accumulate(const double* x, std::span<const double> dz, std::vector<double>& grad, double scale) const {
        const std::size_t D = data_->features;
        for (std::size_t k = 0; k < dz.size(); ++k) {
            double* g = &grad[k * (D + 1)];
            for (std::size_t f = 0; f < D; ++f) g[f] += scale * dz[k] * x[f];
            g[D] += scale * dz[k];
        }
    }

    void multilabel_gradient(const pbt::Hyperparameters& h, std::vector<double>& grad) const {
        const double gamma = value(h, "gamma", 0.0);
        const std::size_t N = data_->train_items(), K = data_->outputs;
        std::vector<double> z(K);
        const double scale = 1.0 / static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double* x = &data_->x_train[i * data_->features];
            logits(x, z.data());
            const auto loss = losses::focal_loss(z, std::span<const double>(&data_->y_train[i * K], K), gamma);
            accumulate(x, loss.gradient, grad, scale);
        }
    }

    void multiclass_gradient(const pbt::Hyperparameters& h, std::vector<double>& grad) const {
        const double beta = value(h, "beta", 0.0);
        const auto m = margins(value(h, "max_margin", losses::kDefaultMaxMargin));
        const std::size_t N = data_->train_items(), K = data_->outputs;
        std::vector<double> z(K), dz(K);
        const double scale = 1.0 / static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double* x = &data_->x_train[i * data_->features];
            logits(x, z.data());
            const auto ldam = losses::ldam_loss(z, static_cast<std::size_t>(data_->c_train[i]), m);
            const auto penalty = losses::confidence_penalty(z, beta);
            for (std::size_t k = 0; k < K; ++k) dz[k] = ldam.gradient[k] + penalty.gradient[k];
            accumulate(x, dz, grad, scale);
        }
    }

    std::shared_ptr<const Dataset> data_;
    Mode mode_;
    std::size_t steps_;
    std::vector<double> weights_;  // outputs x (features + 1), bias last
};

/// Factory producing LinearTrainables that share one generated dataset.
inline pbt::TrainableFactory toy_trainable(const ToySpec& spec) {
    auto data = make_dataset(spec);
    return [data, mode = spec.mode, steps = spec.steps_per_epoch] {
        return std::make_unique<LinearTrainable>(data, mode, steps);
    };
}

/// Search space used by the demo: learning rate plus the loss parameters.
inline pbt::SearchSpace default_space(Mode mode) {
    pbt::SearchSpace space{{"lr", 1e-4, 10.0, 0.01, 1.0, true}, {"weight_decay", 1e-8, 1.0, 1e-6, 1e-2, true}};
    if (mode == Mode::Multilabel) {
        space.push_back({"gamma", 1e-3, 10.0, 0.1, 5.0, true});
    } else {
        space.push_back({"beta", 1e-4, 5.0, 0.01, 1.0, true});
        space.push_back({"max_margin", 1e-3, 5.0, 0.05, 1.0, true});
    }
    return space;
}

}  // namespace labelcal::toy
