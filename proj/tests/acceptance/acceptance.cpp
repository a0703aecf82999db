// Acceptance suite: one PASS/FAIL line per criterion. argv[1] is the
// labelcal executable used by the end-to-end determinism check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "labelcal/calibration.hpp"
#include "labelcal/folds.hpp"
#include "labelcal/io.hpp"
#include "labelcal/losses.hpp"
#include "labelcal/metrics.hpp"
#include "labelcal/pbt.hpp"
#include "labelcal/relnet.hpp"
#include "labelcal/sampling.hpp"
#include "labelcal/segmentation.hpp"
#include "labelcal/toy.hpp"
#include "support/cli.hpp"
#include "support/oracles.hpp"
#include "support/pages.hpp"
#include "support/synthetic.hpp"

using namespace labelcal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double rel_err(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6}); }

std::vector<double> random_logits(Rng& rng, std::size_t n) {
    std::vector<double> z(n);
    for (double& x : z) x = rng.uniform(-4.0, 4.0);
    return z;
}

// Worst relative error between the analytic gradient and central differences.
double gradient_error(const std::function<losses::LossValue(std::span<const double>)>& f, std::vector<double> z) {
    const auto analytic = f(z).gradient;
    double worst = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        // Step balancing truncation and cancellation error.
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::fabs(z[k]));
        auto up = z, down = z;
        up[k] += h;
        down[k] -= h;
        worst = std::max(worst, rel_err(analytic[k], (f(up).value - f(down).value) / (2 * h)));
    }
    return worst;
}

Outcome loss_gradients() {
    Rng rng(101);
    double focal = 0, ldam = 0, penalty = 0, bce_gap = 0, ce_gap = 0;
    for (int t = 0; t < 100; ++t) {
        const auto z = random_logits(rng, 6);
        std::vector<double> y(6);
        for (double& v : y) v = rng.bernoulli(0.3);
        const double gamma = rng.uniform(0.0, 5.0);
        focal = std::max(focal, gradient_error([&](std::span<const double> x) { return losses::focal_loss(x, y, gamma); }, z));

        std::vector<std::size_t> counts(6);
        for (auto& c : counts) c = 1 + rng.below(500);
        const auto margins = losses::ldam_margins(counts, rng.uniform(0.1, 1.0));
        const std::size_t cls = rng.below(6);
        const double scale = rng.uniform(0.5, 3.0);
        const auto z2 = random_logits(rng, 6);
        ldam = std::max(ldam, gradient_error([&](std::span<const double> x) { return losses::ldam_loss(x, cls, margins, scale); }, z2));

        const double beta = rng.uniform(0.1, 2.0);
        const auto z3 = random_logits(rng, 6);
        penalty = std::max(penalty, gradient_error([&](std::span<const double> x) { return losses::confidence_penalty(x, beta); }, z3));

        // Reductions against textbook formulas.
        double bce = 0;
        for (std::size_t k = 0; k < 6; ++k) {
            const double p = 1.0 / (1.0 + std::exp(-z[k]));
            bce -= y[k] * std::log(p) + (1 - y[k]) * std::log(1 - p);
        }
        bce_gap = std::max(bce_gap, std::fabs(losses::focal_loss(z, y, 0.0).value - bce));
        double lse = 0;
        for (double x : z2) lse += std::exp(x);
        const double ce = std::log(lse) - z2[cls];
        ce_gap = std::max(ce_gap, std::fabs(losses::ldam_loss(z2, cls, losses::MarginVector(std::vector<double>(6, 0.0))).value - ce));
    }
    const bool pass = focal < 1e-4 && ldam < 1e-4 && penalty < 1e-4 && bce_gap < 1e-12 && ce_gap < 1e-12;
    return {pass, "max rel err focal " + fmt(focal) + ", ldam " + fmt(ldam) + ", penalty " + fmt(penalty) +
                      "; |focal(0)-bce| " + fmt(bce_gap) + ", |ldam(0)-ce| " + fmt(ce_gap)};
}

Outcome calibration_superiority() {
    int wins = 0;
    std::string worst;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [p, y] = synth::rare_label_instance(seed, 3000, 38, 0.005, 0.30);
        const auto grid = calibration::grid_search_thresholds(p, y);
        const double none = metrics::label_count_error_rate(p, y).rate;
        const double half = metrics::label_count_error_rate(calibration::threshold_at_half(p), y).rate;
        if (grid.error < none && grid.error < half) ++wins;
        else worst = " (seed " + std::to_string(seed) + " lost)";
    }
    return {wins >= 9, std::to_string(wins) + "/10 seeds strictly better than both baselines" + worst};
}

Outcome grid_oracle() {
    Rng rng(303);
    int matched = 0, total = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t N = 1 + rng.below(20), L = 1 + rng.below(3);
        std::vector<double> v(N * L);
        std::vector<std::uint8_t> y(N * L);
        const bool coarse = t % 2 == 0;  // values on the grid exercise the boundaries
        for (auto& x : v) x = coarse ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform(0.0, 1.0);
        for (auto& b : y) b = rng.bernoulli(0.4);
        y[0] = 1;
        const ProbMatrix p(synth::label_names(L), N, v);
        const LabelMatrix labels(synth::label_names(L), N, y);
        const auto got = calibration::grid_search_thresholds(p, labels, 0.1, {0, 1}, {0, 1});
        const auto want = oracle::grid_search(p, labels, 0.1, {0, 1}, {0, 1});
        ++total;
        matched += got.best == want.best && got.error == want.error;
    }
    return {matched == total, std::to_string(matched) + "/" + std::to_string(total) + " instances identical"};
}

Outcome weights_oracle() {
    Rng rng(404);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t N = 1 + rng.below(50), L = 1 + rng.below(5);
        std::vector<double> v(N * L);
        const bool coarse = t % 2 == 0;
        for (auto& x : v) x = coarse ? static_cast<double>(rng.below(9)) / 8.0 : rng.uniform(0.0, 1.0);
        const ProbMatrix p(synth::label_names(L), N, v);
        const auto got = sampling::importance_weights(p), want = oracle::direct_weights(p);
        for (std::size_t i = 0; i < N; ++i) worst = std::max(worst, std::fabs(got[i] - want[i]));
    }
    return {worst <= 1e-12, "max |diff| " + fmt(worst) + " over 1000 matrices"};
}

LabelMatrix sparse_matrix(std::size_t n, std::size_t l, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> v(n * l);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < l; ++j) v[i * l + j] = rng.bernoulli(0.02 + 0.03 * static_cast<double>(j));
    return LabelMatrix(synth::label_names(l), n, v);
}

Outcome fold_quality() {
    int wins = 0;
    double margin = 1e9;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const auto y = sparse_matrix(200, 10, 5000 + trial);
        const auto best = stratified_kfold(y, 10, 10000, trial);
        std::vector<double> singles;
        for (std::uint64_t r = 0; r < 101; ++r) {
            const auto one = stratified_kfold(y, 10, 1, 1000000 + trial * 1000 + r);
            singles.push_back(oracle::fold_score(y, one.fold_of, 10).front());
        }
        std::nth_element(singles.begin(), singles.begin() + 50, singles.end());
        const double winner = oracle::fold_score(y, best.fold_of, 10).front();
        wins += winner <= singles[50];
        margin = std::min(margin, singles[50] - winner);
    }
    return {wins == 100, std::to_string(wins) + "/100 trials, smallest gap to median " + fmt(margin)};
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
            for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j - 1);
            i = j;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Outcome sizing_shape() {
    Rng rng(606);
    std::vector<double> scores(1000);
    for (double& x : scores) x = rng.normal();
    sampling::SizingOptions o;
    o.resamples = 2000;
    o.seed = 7;
    const auto curve = sampling::sizing_curve(scores, o);
    double worst = 0;
    std::vector<double> sizes, stds;
    for (const auto& pt : curve) {
        const double expected = 1.0 / std::sqrt(static_cast<double>(pt.sample_size));
        worst = std::max(worst, std::fabs(pt.mean_std - expected) / expected);
        sizes.push_back(static_cast<double>(pt.sample_size));
        stds.push_back(pt.mean_std);
    }
    const double rho = spearman(sizes, stds);
    const double df = static_cast<double>(sizes.size()) - 2;
    double p = 0.0;
    if (std::fabs(rho) < 1.0) {
        const double t = rho * std::sqrt(df / (1 - rho * rho));
        p = 2 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::fabs(t)));
    }
    const bool pass = worst <= 0.15 && rho < 0 && p < 0.01;
    return {pass, std::to_string(curve.size()) + " points, max rel dev from 1/sqrt(s) " + fmt(worst) + ", spearman rho " +
                      fmt(rho) + " (p " + fmt(p) + ")"};
}

Outcome dbscan_oracle() {
    Rng rng(707);
    int matched = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t M = 1 + rng.below(200), dims = 1 + rng.below(3);
        std::vector<double> pts(M * dims);
        for (double& v : pts) v = static_cast<double>(rng.below(30));
        const double eps = 0.5 + static_cast<double>(rng.below(8));
        const std::size_t min_pts = 1 + rng.below(6);
        matched += oracle::canonical(segmentation::dbscan(pts, dims, eps, min_pts)) ==
                   oracle::canonical(oracle::dbscan(pts, dims, eps, min_pts));
    }
    return {matched == 500, std::to_string(matched) + "/500 labelings identical after relabeling"};
}

Outcome segmentation_fixture() {
    std::size_t right = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<synth::Kind> truth;
        const auto tsv = synth::render_ocr(synth::three_class_corpus(12, seed), seed, &truth);
        const auto pages = segmentation::assemble_pages(segmentation::parse_ocr_tsv(tsv));
        std::vector<segmentation::ParagraphRecord> flat;
        for (const auto& p : pages) flat.insert(flat.end(), p.begin(), p.end());
        const auto c = segmentation::classify_paragraphs(flat);
        for (std::size_t i = 0; i < c.size() && i < truth.size(); ++i) right += c[i].name() == synth::kind_name(truth[i]);
        total += truth.size();
    }
    int decided = 0, fixtures = 0;
    for (const auto& f : synth::boundary_fixtures()) {
        const auto pages = segmentation::assemble_pages(segmentation::parse_ocr_tsv(synth::render_ocr(f.pages, 17)));
        decided += segmentation::segment_pages(pages).merges == (f.merge ? 1u : 0u);
        ++fixtures;
    }
    const double accuracy = static_cast<double>(right) / static_cast<double>(total);
    return {accuracy >= 0.95 && decided == 20 && fixtures == 20,
            "class accuracy " + fmt(100 * accuracy) + "% over " + std::to_string(total) + " paragraphs; " +
                std::to_string(decided) + "/" + std::to_string(fixtures) + " merge decisions correct"};
}

Outcome relnet_reduction() {
    Rng rng(909);
    int equal = 0;
    bool diagonal = true;
    for (int t = 0; t < 100; ++t) {
        const std::size_t N = 1 + rng.below(80), L = 1 + rng.below(10);
        std::vector<double> v(N * L);
        std::vector<std::uint8_t> b(N * L);
        for (std::size_t k = 0; k < v.size(); ++k) {
            b[k] = rng.bernoulli(0.3);
            v[k] = b[k];
        }
        const auto a = relnet::network_from_annotations(LabelMatrix(synth::label_names(L), N, b));
        const auto p = relnet::network_from_probabilities(ProbMatrix(synth::label_names(L), N, v));
        equal += a == p;
        for (std::size_t l = 0; l < L; ++l)
            if (p.defined(l) && *p.weight(l, l) != 1.0) diagonal = false;
    }
    return {equal == 100 && diagonal, std::to_string(equal) + "/100 networks identical, diagonal " +
                                          (diagonal ? "1 where supported" : "wrong")};
}

double dist(const relnet::Point& a, const relnet::Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

Outcome layout() {
    Rng rng(1010);
    int ok = 0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t L = 2 + rng.below(29);
        const auto net = relnet::network_from_probabilities(synth::random_probs(rng, 40, L));
        relnet::LayoutOptions o;
        o.seed = static_cast<std::uint64_t>(t);
        const auto l = relnet::kamada_kawai_layout(net, o);
        ok += l.stress <= l.initial_stress;
    }
    const auto two = relnet::kamada_kawai(std::vector<double>{0, 1, 1, 0}, 2, {});
    const double two_err = std::fabs(dist(two.positions[0], two.positions[1]) - 1.0);
    double tri_err = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        relnet::LayoutOptions o;
        o.seed = seed;
        const auto tri = relnet::kamada_kawai(std::vector<double>{0, 1, 1, 1, 0, 1, 1, 1, 0}, 3, o);
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) tri_err = std::max(tri_err, std::fabs(dist(tri.positions[i], tri.positions[j]) - 1.0));
    }
    return {ok == 50 && two_err <= 1e-6 && tri_err <= 1e-3,
            std::to_string(ok) + "/50 layouts with stress <= initial; 2-node err " + fmt(two_err) + ", triangle err " + fmt(tri_err)};
}

class Quadratic final : public pbt::Trainable {
public:
    void init(std::uint64_t) override {}
    void train_one_epoch(const pbt::Hyperparameters& h) override { h_ = h.at("h"); }
    double evaluate() override { return score_ ? *score_ : -(h_ - 3.0) * (h_ - 3.0); }
    void copy_from(const Trainable&) override {}
    std::vector<double> parameters() const override { return {h_}; }
    std::optional<double> score_;

private:
    double h_ = 0.0;
};

Outcome pbt_checks() {
    // Elitism on real models.
    toy::ToySpec spec;
    spec.seed = 3;
    pbt::PbtConfig c;
    c.population_size = 20;
    c.min_generations = 12;
    c.seed = 4;
    std::size_t events = 0, violations = 0;
    pbt::pbt_run(toy::toy_trainable(spec), toy::default_space(spec.mode), c, [&](const pbt::SelectionEvent& e) {
        ++events;
        for (std::size_t m : e.elite)
            violations += e.before[m].parameters != e.after[m].parameters ||
                          e.before[m].hyperparameters != e.after[m].hyperparameters;
    });

    // PBT against random search at the same number of evaluations.
    const pbt::SearchSpace space{{"h", 0.1, 10.0, 0.1, 10.0, true}};
    pbt::PbtConfig q;
    q.population_size = 10;
    double pbt_mean = 0, random_mean = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        q.seed = seed;
        const auto r = pbt::pbt_run([] { return std::make_unique<Quadratic>(); }, space, q);
        pbt_mean += r.best.score / 50;
        Rng rng(derive_seed(seed, {99}));
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < r.history.size() * q.population_size; ++k) {
            const double h = pbt::sample_initial(space, rng).at("h");
            best = std::max(best, -(h - 3.0) * (h - 3.0));
        }
        random_mean += best / 50;
    }

    // Degenerate constant score.
    auto constant = [] {
        auto m = std::make_unique<Quadratic>();
        m->score_ = 0.5;
        return m;
    };
    pbt::PbtConfig s;
    s.population_size = 8;
    s.stop = pbt::StopMode::Patience;
    const auto patience = pbt::pbt_run(constant, space, s).history.size();
    s.stop = pbt::StopMode::Fixed;
    const auto fixed = pbt::pbt_run(constant, space, s).history.size();

    const bool pass = events == 11 && violations == 0 && pbt_mean > random_mean && patience == 40 && fixed == 30;
    return {pass, "elite changes " + std::to_string(violations) + " over " + std::to_string(events) +
                      " selections; quadratic mean best PBT " + fmt(pbt_mean) + " vs random " + fmt(random_mean) +
                      "; constant score stops at " + std::to_string(patience) + " (patience) / " + std::to_string(fixed) +
                      " (fixed)"};
}

Outcome tendency() {
    bool pass = true;
    Rng rng(1212);
    for (int t = 0; t < 1000; ++t) {
        std::map<int, double> c;
        double total = 0;
        for (int y = 0; y < 19; ++y) total += c[1980 + y] = static_cast<double>(rng.below(60));
        for (int v : metrics::tendency_values("x", c, total).values) pass &= v == -1 || v == 0 || v == 1;
    }
    const auto small = metrics::tendency_values("a", {{1980, 0}, {1981, 5}}, 5);
    pass &= small.tick == 1.0 && small.values == std::vector<int>{1};
    const auto large = metrics::tendency_values("a", {{1980, 100}, {1981, 105}}, 400);
    pass &= large.tick == 10.0 && large.values == std::vector<int>{0};
    const auto up = metrics::tendency_values("x", {{1, 0}, {2, 5}, {3, 10}}, 15);
    const auto down = metrics::tendency_values("x", {{1, 10}, {2, 5}, {3, 0}}, 15);
    const double same = metrics::tendency_error(std::vector{up}, std::vector{up});
    const double opposite = metrics::tendency_error(std::vector{up}, std::vector{down});
    metrics::TendencySeries p{"x", 1, {}, 0, 1, {1, 0, 0, 1}}, q{"x", 1, {}, 0, 1, {0, 0, 0, 0}};
    const double half = metrics::tendency_error(std::vector{p}, std::vector{q});
    pass &= same == 0.0 && opposite == 200.0 && half == 50.0;
    return {pass, "ticks " + fmt(small.tick) + "/" + fmt(large.tick) + ", errors " + fmt(same) + "% / " + fmt(opposite) +
                      "% / " + fmt(half) + "%"};
}

// Every file of a run directory, manifests without their wall-clock field.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = fs::relative(e.path(), dir).string();
        if (name == ".stdout" || name == ".stderr") continue;
        std::string content = synth::slurp(e.path());
        if (name.ends_with(".manifest.json")) {
            auto j = nlohmann::ordered_json::parse(content);
            j.erase("duration_seconds");
            content = j.dump();
        }
        out[name] = content;
    }
    return out;
}

Outcome cli_determinism(const std::string& cli) {
    if (cli.empty() || !fs::exists(cli)) return {false, "labelcal executable not given"};
    const fs::path root = synth::scratch_dir("acceptance");
    const fs::path in = root / "in";
    fs::create_directories(in / "ocr");
    {
        const auto [p, y] = synth::rare_label_instance(1, 300, 12);
        synth::spit(in / "p.csv", io::format_prob_matrix(p));
        synth::spit(in / "y.csv", io::format_prob_matrix(y.as_probabilities()));
        std::string years = "year\n", scores = "score,fold\n";
        Rng rng(13);
        for (int i = 0; i < 300; ++i) {
            years += std::to_string(1980 + i % 19) + "\n";
            scores += io::format_double(rng.normal()) + "," + std::to_string(i % 3) + "\n";
        }
        synth::spit(in / "years.csv", years);
        synth::spit(in / "scores.csv", scores);
        const auto pages = synth::three_class_corpus(4, 2);
        synth::spit(in / "ocr" / "a.tsv", synth::render_ocr({pages.begin(), pages.begin() + 2}, 1));
        synth::spit(in / "ocr" / "b.tsv", synth::render_ocr({pages.begin() + 2, pages.end()}, 2));
        synth::spit(in / "texts.jsonl", "{\"id\":1,\"text\":\"Az Alföld folyóirat\"}\n{\"id\":2,\"text\":\"Nagyvilág\"}\n");
    }
    const std::vector<std::vector<std::string>> commands{
        {"segment", "--tsv", "../in/ocr", "--out", "paras.jsonl"},
        {"match", "--quote", "alföld folyóirat", "--paragraphs", "../in/texts.jsonl", "--out", "match.json"},
        {"filter", "--texts", "../in/texts.jsonl", "--needle", "ALFÖLD", "--fold-case", "--out", "filter.jsonl"},
        {"folds", "--labels", "../in/y.csv", "--k", "10", "--candidates", "2000", "--seed", "7", "--out", "folds.csv"},
        {"metrics", "--probs", "../in/p.csv", "--truth", "../in/y.csv", "--report", "json", "--out", "metrics.json"},
        {"calibrate", "--oof", "../in/p.csv", "--truth", "../in/y.csv", "--step", "0.01", "--years", "../in/years.csv",
         "--out", "calibration.json"},
        {"truncate", "--probs", "../in/p.csv", "--p-low", "0.2", "--p-high", "0.54", "--out", "q.csv"},
        {"sample", "--probs", "../in/p.csv", "--n", "100", "--seed", "3", "--out", "sample.csv"},
        {"size-curve", "--scores", "../in/scores.csv", "--group-column", "fold", "--reps", "5", "--resamples", "300",
         "--max-size", "100", "--seed", "2", "--out", "curve.json"},
        {"relnet", "--probs", "../in/p.csv", "--truth", "../in/y.csv", "--min-weight", "0.1", "--json", "w.json",
         "--seed", "5", "--out", "graph.dot"},
        {"pbt-demo", "--mode", "multilabel", "--population", "12", "--generations", "6", "--seed", "9", "--out", "ml.json"},
        {"pbt-demo", "--mode", "multiclass", "--population", "12", "--generations", "6", "--seed", "9", "--out", "mc.json"},
    };
    const std::vector<std::string> thread_counts{"1", "1", "2", "4", "8"};
    std::vector<std::map<std::string, std::string>> runs;
    std::string failure;
    for (std::size_t r = 0; r < thread_counts.size(); ++r) {
        const fs::path dir = root / ("run" + std::to_string(r));
        fs::create_directories(dir);
        for (const auto& cmd : commands) {
            std::vector<std::string> args{"--threads", thread_counts[r]};
            args.insert(args.end(), cmd.begin(), cmd.end());
            const auto res = synth::run_cli(cli, args, dir);
            if (res.code != 0 && failure.empty()) failure = cmd[0] + " exited " + std::to_string(res.code) + ": " + res.err;
        }
        runs.push_back(snapshot(dir));
    }
    std::size_t differing = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) differing += runs[r] != runs[0];
    fs::remove_all(root);
    if (!failure.empty()) return {false, failure};
    return {differing == 0 && runs[0].size() >= 2 * commands.size(),
            std::to_string(commands.size()) + " subcommands, " + std::to_string(runs[0].size()) + " files, " +
                std::to_string(runs.size()) + " runs at threads 1,1,2,4,8; " + std::to_string(differing) + " runs differ"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? fs::absolute(argv[1]).string() : "";
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "loss gradients", 5, loss_gradients},
        {2, "calibration superiority", 120, calibration_superiority},
        {3, "grid-search oracle", 10, grid_oracle},
        {4, "importance-weights oracle", 5, weights_oracle},
        {5, "fold-search quality", 60, fold_quality},
        {6, "sizing-curve shape", 120, sizing_shape},
        {7, "dbscan oracle", 30, dbscan_oracle},
        {8, "segmentation fixture", 10, segmentation_fixture},
        {9, "relation-network reduction", 5, relnet_reduction},
        {10, "layout", 30, layout},
        {11, "pbt", 120, pbt_checks},
        {12, "tendency metric", 1, tendency},
        {13, "end-to-end determinism", 0, [&] { return cli_determinism(cli); }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.budget_seconds == 0 || seconds < c.budget_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << " ["
                  << fmt(seconds, 3) << " s" << (c.budget_seconds > 0 ? " of " + fmt(c.budget_seconds, 3) + " s" : "")
                  << (in_time ? "" : ", over budget") << "]" << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
