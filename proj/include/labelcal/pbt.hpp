#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelcal/error.hpp"
#include "labelcal/parallel.hpp"
#include "labelcal/rng.hpp"

namespace labelcal::pbt {

/// ceil(2 / (1 - beta2)) warmup steps for an Adam-type optimizer. Quotients
/// within 1e-9 (relative) of an integer are taken as that integer, so that
/// 0.9 gives 20 despite 1 - 0.9 not being exactly 0.1 in binary.
inline std::int64_t warmup_steps(double beta2) {
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error(ErrorCode::Range, "beta2 must lie in (0, 1)");
    const double q = 2.0 / (1.0 - beta2);
    const double nearest = std::round(q);
    if (std::fabs(q - nearest) <= 1e-9 * q) return static_cast<std::int64_t>(nearest);
    return static_cast<std::int64_t>(std::ceil(q));
}

using Hyperparameters = std::map<std::string, double>;

struct HyperparameterBound {
    std::string name;
    double lower = 0.0;  // clipping bounds
    double upper = 0.0;
    double init_lower = 0.0;  // initial sampling range
    double init_upper = 0.0;
    bool log_scale = true;
};

using SearchSpace = std::vector<HyperparameterBound>;

inline Hyperparameters sample_initial(const SearchSpace& space, Rng& rng) {
    Hyperparameters h;
    for (const auto& b : space) {
        if (b.log_scale) {
            if (!(b.init_lower > 0.0)) throw Error(ErrorCode::InvalidArgument, "log-scale range must be positive");
            h[b.name] = std::exp(rng.uniform(std::log(b.init_lower), std::log(b.init_upper)));
        } else {
            h[b.name] = rng.uniform(b.init_lower, b.init_upper);
        }
        h[b.name] = std::clamp(h[b.name], b.lower, b.upper);
    }
    return h;
}

/// Multiplies every hyperparameter by an independent draw from
/// [low, high] and clips it to its bounds in `space` (if listed).
inline Hyperparameters perturb(const Hyperparameters& h, Rng& rng, const SearchSpace& space = {},
                               double low = 0.8, double high = 1.2) {
    Hyperparameters out;
    for (const auto& [name, value] : h) {
        double v = value * rng.uniform(low, high);
        const auto it = std::find_if(space.begin(), space.end(), [&](const auto& b) { return b.name == name; });
        if (it != space.end()) v = std::clamp(v, it->lower, it->upper);
        out[name] = v;
    }
    return out;
}

enum class Fitness { MinShifted, Rank };

/// Fitness-proportional choice. MinShifted uses score - min + delta with
/// delta = 1e-9 * (max - min); equal scores select uniformly. Rank uses
/// weight P - rank.
inline std::size_t roulette_select(std::span<const double> scores, Rng& rng, Fitness fitness = Fitness::MinShifted) {
    if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "roulette over empty population");
    for (double s : scores)
        if (!std::isfinite(s)) throw Error(ErrorCode::Range, "non-finite score in roulette selection");
    const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
    const double lo = *lo_it, range = *hi_it - lo;
    if (range == 0.0) return static_cast<std::size_t>(rng.below(scores.size()));

    std::vector<double> weight(scores.size());
    if (fitness == Fitness::MinShifted) {
        const double delta = 1e-9 * range;
        for (std::size_t i = 0; i < scores.size(); ++i) weight[i] = scores[i] - lo + delta;
    } else {
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
        for (std::size_t r = 0; r < order.size(); ++r) weight[order[r]] = static_cast<double>(order.size() - r);
    }
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    const double target = rng.uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        acc += weight[i];
        if (target < acc) return i;
    }
    return weight.size() - 1;
}

/// A model that PBT can train. Scores are higher-is-better.
class Trainable {
public:
    virtual ~Trainable() = default;
    virtual void init(std::uint64_t seed) = 0;
    virtual void train_one_epoch(const Hyperparameters& h) = 0;
    virtual double evaluate() = 0;
    /// Copy the other model's parameters into this one.
    virtual void copy_from(const Trainable& other) = 0;
    /// Flattened parameters, used for snapshots and invariant checks.
    virtual std::vector<double> parameters() const = 0;
};

using TrainableFactory = std::function<std::unique_ptr<Trainable>()>;

enum class StopMode {
    Fixed,     // exactly min_generations generations
    Patience,  // at least min_generations, then until `patience` generations pass without improvement
};

struct PbtConfig {
    std::size_t population_size = 100;
    double elite_fraction = 0.10;
    std::size_t min_generations = 30;
    std::size_t patience = 10;
    double perturb_low = 0.8;
    double perturb_high = 1.2;
    std::uint64_t seed = 0;
    StopMode stop = StopMode::Fixed;
    std::size_t max_generations = 1000;
    Fitness fitness = Fitness::MinShifted;

    void validate() const {
        if (population_size < 1) throw Error(ErrorCode::InvalidArgument, "population must be non-empty");
        if (!(elite_fraction > 0.0 && elite_fraction < 1.0))
            throw Error(ErrorCode::InvalidArgument, "elite fraction must lie in (0, 1)");
        if (!(perturb_low <= 1.0 && 1.0 <= perturb_high && perturb_low > 0.0))
            throw Error(ErrorCode::InvalidArgument, "perturbation interval must contain 1");
        if (min_generations < 1) throw Error(ErrorCode::InvalidArgument, "need at least one generation");
    }

    std::size_t elite_count() const {
        const double e = std::ceil(elite_fraction * static_cast<double>(population_size) - 1e-9);
        return std::clamp<std::size_t>(static_cast<std::size_t>(e), 1, population_size);
    }
};

struct MemberRecord {
    std::size_t id = 0;
    Hyperparameters hyperparameters;  // used for this generation's epoch
    double score = 0.0;
    bool elite = false;
    std::optional<std::size_t> copied_from;  // exploit source after selection
};

struct GenerationRecord {
    std::size_t generation = 0;  // 1-based
    double best_score = 0.0;     // best of this generation
    std::vector<MemberRecord> members;
};

struct Member {
    std::size_t id = 0;
    Hyperparameters hyperparameters;
    std::vector<double> parameters;
    double score = -std::numeric_limits<double>::infinity();
    std::size_t generation = 0;
    std::vector<std::pair<Hyperparameters, double>> history;
};

struct PbtResult {
    Member best;  // best evaluation seen in the whole run
    std::vector<GenerationRecord> history;
};

struct Snapshot {
    Hyperparameters hyperparameters;
    std::vector<double> parameters;
};

/// Emitted around each selection step (only when an observer is set).
struct SelectionEvent {
    std::size_t generation = 0;
    std::vector<std::size_t> elite;
    std::vector<Snapshot> before;
    std::vector<Snapshot> after;
};

using SelectionObserver = std::function<void(const SelectionEvent&)>;

/// Population-based training. Each generation every member trains one
/// epoch and is evaluated; the top ceil(elite_fraction * P) members are
/// kept as they are, and every other member copies the parameters and
/// hyperparameters of a roulette-selected member of the whole population
/// and perturbs the hyperparameters.
inline PbtResult pbt_run(const TrainableFactory& factory, const SearchSpace& space, const PbtConfig& config,
                         const SelectionObserver& observer = {}) {
    config.validate();
    const std::size_t P = config.population_size;
    std::vector<std::unique_ptr<Trainable>> models(P);
    std::vector<Hyperparameters> hypers(P);
    std::vector<std::vector<std::pair<Hyperparameters, double>>> member_history(P);
    for (std::size_t m = 0; m < P; ++m) {
        models[m] = factory();
        models[m]->init(derive_seed(config.seed, {0, m}));
        Rng rng(derive_seed(config.seed, {1, m}));
        hypers[m] = sample_initial(space, rng);
    }

    PbtResult result;
    std::vector<double> scores(P);
    double best_so_far = -std::numeric_limits<double>::infinity();
    std::size_t stall = 0;
    for (std::size_t g = 1; g <= config.max_generations; ++g) {
        parallel_for(P, [&](std::size_t m) {
            try {
                models[m]->train_one_epoch(hypers[m]);
                scores[m] = models[m]->evaluate();
            } catch (const std::exception& e) {
                throw Error(ErrorCode::Trainable,
                            "member " + std::to_string(m) + " generation " + std::to_string(g) + ": " + e.what());
            }
            if (!std::isfinite(scores[m]))
                throw Error(ErrorCode::Trainable,
                            "member " + std::to_string(m) + " generation " + std::to_string(g) + ": non-finite score");
        });

        GenerationRecord record;
        record.generation = g;
        record.best_score = *std::max_element(scores.begin(), scores.end());
        for (std::size_t m = 0; m < P; ++m) {
            record.members.push_back({m, hypers[m], scores[m], false, std::nullopt});
            member_history[m].emplace_back(hypers[m], scores[m]);
            if (scores[m] > result.best.score) {
                result.best.id = m;
                result.best.hyperparameters = hypers[m];
                result.best.parameters = models[m]->parameters();
                result.best.score = scores[m];
                result.best.generation = g;
                result.best.history = member_history[m];
            }
        }

        bool stop = false;
        if (config.stop == StopMode::Fixed) {
            stop = g >= config.min_generations;
        } else if (g <= config.min_generations) {
            best_so_far = std::max(best_so_far, record.best_score);
        } else if (record.best_score > best_so_far) {
            best_so_far = record.best_score;
            stall = 0;
        } else {
            stop = ++stall >= config.patience;
        }

        std::vector<std::size_t> ranked(P);
        std::iota(ranked.begin(), ranked.end(), std::size_t{0});
        std::stable_sort(ranked.begin(), ranked.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
        const std::size_t elite = config.elite_count();
        for (std::size_t r = 0; r < elite; ++r) record.members[ranked[r]].elite = true;

        if (stop || elite == P) {
            result.history.push_back(std::move(record));
            if (stop) break;
            continue;
        }

        SelectionEvent event;
        if (observer) {
            event.generation = g;
            event.elite.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(elite));
            for (std::size_t m = 0; m < P; ++m) event.before.push_back({hypers[m], models[m]->parameters()});
        }

        Rng rng(derive_seed(config.seed, {2, g}));
        std::vector<std::size_t> source(P);
        std::vector<Hyperparameters> next_hypers = hypers;
        for (std::size_t r = elite; r < P; ++r) {
            const std::size_t m = ranked[r];
            source[m] = roulette_select(scores, rng, config.fitness);
            next_hypers[m] = perturb(hypers[source[m]], rng, space, config.perturb_low, config.perturb_high);
            record.members[m].copied_from = source[m];
        }
        // Copy from pre-selection states: non-elite sources may be overwritten
        // earlier in this loop, so they are cloned first.
        std::map<std::size_t, std::unique_ptr<Trainable>> frozen;
        for (std::size_t r = elite; r < P; ++r) {
            const std::size_t s = source[ranked[r]];
            if (!record.members[s].elite && s != ranked[r] && !frozen.count(s)) {
                auto clone = factory();
                clone->copy_from(*models[s]);
                frozen.emplace(s, std::move(clone));
            }
        }
        for (std::size_t r = elite; r < P; ++r) {
            const std::size_t m = ranked[r], s = source[m];
            if (s == m) continue;
            const auto it = frozen.find(s);
            models[m]->copy_from(it != frozen.end() ? *it->second : *models[s]);
        }
        hypers = std::move(next_hypers);

        if (observer) {
            for (std::size_t m = 0; m < P; ++m) event.after.push_back({hypers[m], models[m]->parameters()});
            observer(event);
        }
        result.history.push_back(std::move(record));
    }
    return result;
}

}  // namespace labelcal::pbt
