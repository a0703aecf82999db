#include <gtest/gtest.h>

#include <cmath>

#include "labelcal/parallel.hpp"
#include "labelcal/pbt.hpp"
#include "labelcal/toy.hpp"

using namespace labelcal;
using namespace labelcal::pbt;

namespace {

// Score -(h - 3)^2 of the hyperparameter used in the last epoch.
class Quadratic final : public Trainable {
public:
    void init(std::uint64_t) override {}
    void train_one_epoch(const Hyperparameters& h) override { h_ = h.at("h"); }
    double evaluate() override { return -(h_ - 3.0) * (h_ - 3.0); }
    void copy_from(const Trainable&) override {}
    std::vector<double> parameters() const override { return {}; }

private:
    double h_ = 0.0;
};

// Deterministic model with a parameter vector that drifts each epoch.
class Counter final : public Trainable {
public:
    void init(std::uint64_t seed) override { p_ = {static_cast<double>(seed % 1000), 0.0}; }
    void train_one_epoch(const Hyperparameters& h) override { p_[1] += h.at("lr"); }
    double evaluate() override { return score_ ? *score_ : p_[1] - 0.1 * p_[0]; }
    void copy_from(const Trainable& o) override { p_ = dynamic_cast<const Counter&>(o).p_; }
    std::vector<double> parameters() const override { return p_; }
    std::optional<double> score_;

private:
    std::vector<double> p_;
};

const SearchSpace kQuadSpace{{"h", 0.1, 10.0, 0.1, 10.0, true}};
const SearchSpace kLrSpace{{"lr", 1e-3, 10.0, 0.01, 1.0, true}};

TrainableFactory quadratic() {
    return [] { return std::make_unique<Quadratic>(); };
}

}  // namespace

TEST(WarmupSteps, Examples) {
    EXPECT_EQ(warmup_steps(0.999), 2000);
    EXPECT_EQ(warmup_steps(0.99), 200);
    EXPECT_EQ(warmup_steps(0.9), 20);
    EXPECT_EQ(warmup_steps(0.5), 4);
    EXPECT_EQ(warmup_steps(0.7), 7);
    EXPECT_THROW(warmup_steps(1.0), Error);
    EXPECT_THROW(warmup_steps(0.0), Error);
}

TEST(RouletteSelect, Examples) {
    Rng rng(1);
    EXPECT_EQ(roulette_select(std::vector<double>{5.0}, rng), 0u);
    int zero = 0;
    for (int t = 0; t < 10000; ++t) zero += roulette_select(std::vector<double>{1.0, 0.0}, rng) == 0;
    EXPECT_GE(zero, 9900);
    std::vector<double> freq(5, 0.0);
    for (int t = 0; t < 10000; ++t) freq[roulette_select(std::vector<double>(5, 0.3), rng)] += 1;
    double chi2 = 0.0;
    for (double f : freq) chi2 += (f - 2000) * (f - 2000) / 2000;
    EXPECT_LT(chi2, 18.47);  // df 4, p = 0.001
    EXPECT_THROW(roulette_select(std::vector<double>{1.0, NAN}, rng), Error);
    EXPECT_THROW(roulette_select(std::vector<double>{}, rng), Error);
}

TEST(RouletteSelect, ProportionalToShiftedScore) {
    Rng rng(2);
    std::vector<double> freq(3, 0.0);
    for (int t = 0; t < 30000; ++t) freq[roulette_select(std::vector<double>{0.0, 1.0, 3.0}, rng)] += 1;
    EXPECT_NEAR(freq[1] / 30000, 0.25, 0.015);
    EXPECT_NEAR(freq[2] / 30000, 0.75, 0.015);
    std::vector<double> rank(3, 0.0);
    for (int t = 0; t < 30000; ++t) rank[roulette_select(std::vector<double>{0.0, 1.0, 3.0}, rng, Fitness::Rank)] += 1;
    EXPECT_NEAR(rank[0] / 30000, 1.0 / 6, 0.015);
    EXPECT_NEAR(rank[2] / 30000, 3.0 / 6, 0.015);
}

TEST(Perturb, Examples) {
    Rng rng(3);
    double sum = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const double v = perturb({{"x", 1.0}}, rng).at("x");
        EXPECT_GE(v, 0.8);
        EXPECT_LE(v, 1.2);
        sum += v;
    }
    EXPECT_NEAR(sum / 10000, 1.0, 0.01);
    EXPECT_EQ(perturb({{"x", 0.0}}, rng).at("x"), 0.0);
}

TEST(Perturb, StaysWithinBounds) {
    Rng rng(4);
    Hyperparameters h{{"h", 9.9}};
    for (int t = 0; t < 1000; ++t) {
        h = perturb(h, rng, kQuadSpace);
        EXPECT_GE(h.at("h"), 0.1);
        EXPECT_LE(h.at("h"), 10.0);
    }
}

TEST(PbtRun, SingleMemberIsPlainTraining) {
    PbtConfig c;
    c.population_size = 1;
    c.min_generations = 7;
    c.seed = 5;
    const auto r = pbt_run([] { return std::make_unique<Counter>(); }, kLrSpace, c);
    ASSERT_EQ(r.history.size(), 7u);
    Counter plain;
    plain.init(derive_seed(5, {0, 0}));
    Rng rng(derive_seed(5, {1, 0}));
    const auto h = sample_initial(kLrSpace, rng);
    for (const auto& g : r.history) {
        plain.train_one_epoch(h);
        EXPECT_EQ(g.members[0].score, plain.evaluate());
        EXPECT_EQ(g.members[0].hyperparameters, h);
        EXPECT_TRUE(g.members[0].elite);
        EXPECT_FALSE(g.members[0].copied_from.has_value());
    }
}

TEST(PbtRun, StoppingRules) {
    auto constant = [] {
        auto c = std::make_unique<Counter>();
        c->score_ = 1.0;
        return c;
    };
    PbtConfig c;
    c.population_size = 6;
    c.stop = StopMode::Patience;
    EXPECT_EQ(pbt_run(constant, kLrSpace, c).history.size(), 40u);
    c.stop = StopMode::Fixed;
    EXPECT_EQ(pbt_run(constant, kLrSpace, c).history.size(), 30u);
    c.stop = StopMode::Patience;
    c.min_generations = 5;
    c.patience = 3;
    EXPECT_EQ(pbt_run(constant, kLrSpace, c).history.size(), 8u);
}

TEST(PbtRun, PatienceResetsOnImprovement) {
    PbtConfig c;
    c.population_size = 4;
    c.stop = StopMode::Patience;
    c.min_generations = 5;
    c.patience = 3;
    c.max_generations = 50;
    // Scores keep growing, so the run only ends at the cap.
    EXPECT_EQ(pbt_run([] { return std::make_unique<Counter>(); }, kLrSpace, c).history.size(), 50u);
}

TEST(PbtRun, ElitesAreBitwiseUnchanged) {
    PbtConfig c;
    c.population_size = 20;
    c.min_generations = 15;
    c.seed = 6;
    std::size_t events = 0;
    pbt_run([] { return std::make_unique<Counter>(); }, kLrSpace, c, [&](const SelectionEvent& e) {
        ++events;
        EXPECT_EQ(e.elite.size(), 2u);
        for (std::size_t m : e.elite) {
            EXPECT_EQ(e.before[m].parameters, e.after[m].parameters);
            EXPECT_EQ(e.before[m].hyperparameters, e.after[m].hyperparameters);
        }
    });
    EXPECT_EQ(events, 14u);
}

TEST(PbtRun, NonElitesCopyTheirSource) {
    PbtConfig c;
    c.population_size = 10;
    c.min_generations = 5;
    c.seed = 7;
    std::vector<GenerationRecord> records;
    std::vector<SelectionEvent> events;
    const auto r = pbt_run([] { return std::make_unique<Counter>(); }, kLrSpace, c,
                           [&](const SelectionEvent& e) { events.push_back(e); });
    for (std::size_t g = 0; g < events.size(); ++g)
        for (const auto& m : r.history[g].members) {
            if (m.elite) continue;
            ASSERT_TRUE(m.copied_from.has_value());
            EXPECT_EQ(events[g].after[m.id].parameters, events[g].before[*m.copied_from].parameters);
            const double ratio = events[g].after[m.id].hyperparameters.at("lr") /
                                 events[g].before[*m.copied_from].hyperparameters.at("lr");
            EXPECT_GE(ratio, 0.8 - 1e-12);
            EXPECT_LE(ratio, 1.2 + 1e-12);
        }
}

TEST(PbtRun, DeterministicAcrossThreadCounts) {
    PbtConfig c;
    c.population_size = 12;
    c.min_generations = 8;
    c.seed = 8;
    set_max_threads(1);
    const auto a = pbt_run(quadratic(), kQuadSpace, c);
    set_max_threads(4);
    const auto b = pbt_run(quadratic(), kQuadSpace, c);
    set_max_threads(0);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t g = 0; g < a.history.size(); ++g)
        for (std::size_t m = 0; m < 12; ++m) {
            EXPECT_EQ(a.history[g].members[m].score, b.history[g].members[m].score);
            EXPECT_EQ(a.history[g].members[m].hyperparameters, b.history[g].members[m].hyperparameters);
            EXPECT_EQ(a.history[g].members[m].copied_from, b.history[g].members[m].copied_from);
        }
}

TEST(PbtRun, QuadraticBestNeverDecreases) {
    PbtConfig c;
    c.population_size = 10;
    c.min_generations = 20;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        c.seed = seed;
        const auto r = pbt_run(quadratic(), kQuadSpace, c);
        for (std::size_t g = 1; g < r.history.size(); ++g)
            EXPECT_GE(r.history[g].best_score, r.history[g - 1].best_score);
        for (const auto& g : r.history)
            for (const auto& m : g.members) {
                EXPECT_GE(m.hyperparameters.at("h"), 0.1);
                EXPECT_LE(m.hyperparameters.at("h"), 10.0);
            }
        EXPECT_GE(r.best.score, r.history.front().best_score);
    }
}

TEST(PbtRun, TrainableFailureNamesMember) {
    struct Failing final : Trainable {
        void init(std::uint64_t) override {}
        void train_one_epoch(const Hyperparameters&) override { throw std::runtime_error("boom"); }
        double evaluate() override { return 0; }
        void copy_from(const Trainable&) override {}
        std::vector<double> parameters() const override { return {}; }
    };
    PbtConfig c;
    c.population_size = 2;
    try {
        pbt_run([] { return std::make_unique<Failing>(); }, kLrSpace, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Trainable);
        EXPECT_NE(std::string(e.what()).find("generation 1"), std::string::npos);
    }
}

TEST(ToyTrainable, SeparableDataReachesHighAuc) {
    toy::ToySpec spec;
    spec.noise = 0.0;
    spec.seed = 3;
    auto model = toy::toy_trainable(spec)();
    model->init(1);
    for (int e = 0; e < 200; ++e) model->train_one_epoch({{"lr", 1.0}, {"gamma", 1.0}});
    EXPECT_GE(model->evaluate(), 0.99);
}

TEST(ToyTrainable, UniformClassesHaveEqualMargins) {
    toy::ToySpec spec;
    spec.mode = toy::Mode::Multiclass;
    spec.rates = {1, 1, 1};
    spec.train_items = 300;
    const auto data = toy::make_dataset(spec);
    toy::LinearTrainable model(data, spec.mode, 1);
    const auto m = model.margins(0.5);
    for (std::size_t j = 0; j < m.size(); ++j) EXPECT_EQ(m[j], 0.5);
}

TEST(ToyTrainable, MulticlassLearns) {
    toy::ToySpec spec;
    spec.mode = toy::Mode::Multiclass;
    spec.rates = {0.6, 0.3, 0.1};
    spec.seed = 2;
    auto model = toy::toy_trainable(spec)();
    model->init(1);
    for (int e = 0; e < 100; ++e) model->train_one_epoch({{"lr", 0.5}, {"beta", 0.1}, {"max_margin", 0.5}});
    EXPECT_GT(model->evaluate(), 0.8);
}

TEST(ToyTrainable, SearchedGammaBeatsFixedZero) {
    double searched = 0.0, fixed = 0.0;
    const auto full = toy::default_space(toy::Mode::Multilabel);
    const SearchSpace no_gamma(full.begin(), full.begin() + 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        toy::ToySpec spec;
        spec.rates = {0.05};
        spec.noise = 1.0;
        spec.seed = seed;
        const auto factory = toy::toy_trainable(spec);
        PbtConfig c;
        c.population_size = 10;
        c.min_generations = 10;
        c.seed = seed;
        searched += pbt_run(factory, full, c).best.score;
        fixed += pbt_run(factory, no_gamma, c).best.score;
    }
    EXPECT_GT(searched / 20, fixed / 20);
}

TEST(PbtRun, BeatsRandomSearchOnQuadratic) {
    PbtConfig c;
    c.population_size = 10;
    c.stop = StopMode::Fixed;
    double pbt_mean = 0.0, random_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        c.seed = seed;
        const auto r = pbt_run(quadratic(), kQuadSpace, c);
        pbt_mean += r.best.score / 50;
        const std::size_t budget = r.history.size() * c.population_size;
        Rng rng(derive_seed(seed, {99}));
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < budget; ++k) {
            const double h = sample_initial(kQuadSpace, rng).at("h");
            best = std::max(best, -(h - 3.0) * (h - 3.0));
        }
        random_mean += best / 50;
    }
    EXPECT_GT(pbt_mean, random_mean);
}
