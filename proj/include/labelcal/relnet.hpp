#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"
#include "labelcal/rng.hpp"

namespace labelcal::relnet {

/// Directed label network; weight(a, b) estimates P(b | a). Rows whose
/// label never occurs (zero support) are undefined.
class RelationNetwork {
public:
    RelationNetwork() = default;

    RelationNetwork(std::vector<std::string> labels, std::vector<double> weights, std::vector<double> support)
        : labels_(std::move(labels)), weights_(std::move(weights)), support_(std::move(support)) {
        detail::validate_label_names(labels_);
        const std::size_t L = labels_.size();
        if (weights_.size() != L * L || support_.size() != L)
            throw Error(ErrorCode::Shape, "relation network arrays do not match label count");
        for (std::size_t a = 0; a < L; ++a) {
            if (!(support_[a] >= 0.0)) throw Error(ErrorCode::Range, "support must be non-negative");
            for (std::size_t b = 0; b < L; ++b) {
                double& w = weights_[a * L + b];
                if (support_[a] == 0.0) w = 0.0;
                else if (!(w >= 0.0 && w <= 1.0))
                    throw Error(ErrorCode::Range, "edge weight outside [0, 1]", std::nullopt, labels_[a]);
            }
        }
    }

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<double>& support() const noexcept { return support_; }
    bool defined(std::size_t a) const { return support_[a] > 0.0; }

    std::optional<double> weight(std::size_t a, std::size_t b) const {
        if (!defined(a)) return std::nullopt;
        return weights_[a * size() + b];
    }

    friend bool operator==(const RelationNetwork&, const RelationNetwork&) = default;

private:
    std::vector<std::string> labels_;
    std::vector<double> weights_;
    std::vector<double> support_;
};

/// P(b | a) = #(rows with a and b) / #(rows with a).
inline RelationNetwork network_from_annotations(const LabelMatrix& truth) {
    const std::size_t L = truth.cols();
    std::vector<std::size_t> joint(L * L, 0), count(L, 0);
    for (std::size_t i = 0; i < truth.rows(); ++i)
        for (std::size_t a = 0; a < L; ++a) {
            if (!truth(i, a)) continue;
            ++count[a];
            for (std::size_t b = 0; b < L; ++b) joint[a * L + b] += static_cast<std::size_t>(truth(i, b));
        }
    std::vector<double> weights(L * L, 0.0), support(L, 0.0);
    for (std::size_t a = 0; a < L; ++a) {
        support[a] = static_cast<double>(count[a]);
        if (count[a] == 0) continue;
        for (std::size_t b = 0; b < L; ++b)
            weights[a * L + b] = static_cast<double>(joint[a * L + b]) / static_cast<double>(count[a]);
    }
    return RelationNetwork(truth.labels(), std::move(weights), std::move(support));
}

/// P(b | a) = sum_i p_ia p_ib / sum_i p_ia, treating distinct label events
/// within a row as independent; P(a | a) = 1. On 0/1 input every sum is an
/// exact integer, so the result equals the annotation estimator bit for bit.
inline RelationNetwork network_from_probabilities(const ProbMatrix& probs) {
    const std::size_t L = probs.cols();
    std::vector<double> joint(L * L, 0.0), support(L, 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto r = probs.row(i);
        for (std::size_t a = 0; a < L; ++a) {
            support[a] += r[a];
            for (std::size_t b = 0; b < L; ++b) joint[a * L + b] += r[a] * r[b];
        }
    }
    std::vector<double> weights(L * L, 0.0);
    for (std::size_t a = 0; a < L; ++a) {
        if (support[a] == 0.0) continue;
        for (std::size_t b = 0; b < L; ++b) weights[a * L + b] = std::min(1.0, joint[a * L + b] / support[a]);
        weights[a * L + a] = 1.0;
    }
    return RelationNetwork(probs.labels(), std::move(weights), std::move(support));
}

using Point = std::array<double, 2>;

struct Layout {
    std::vector<Point> positions;
    double stress = 0.0;
    double initial_stress = 0.0;
    std::size_t sweeps = 0;
};

struct LayoutOptions {
    std::size_t max_sweeps = 1000;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
    /// Added to every relation distance 1 - s so that distances stay positive.
    double epsilon = 0.05;
    /// Connect label pairs with no relation in either direction at distance
    /// 1 + epsilon instead of reporting a disconnected graph.
    bool bridge_unrelated = false;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// All-pairs shortest-path distances from symmetrized relation strengths
/// s_ab = max(w_ab, w_ba); a pair is an edge of length 1 - s + epsilon when
/// s > 0. Unreachable pairs are infinite.
inline std::vector<double> relation_distances(const RelationNetwork& net, double epsilon = 0.05,
                                              bool bridge_unrelated = false) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    const std::size_t L = net.size();
    std::vector<double> d(L * L, kInfinity);
    for (std::size_t a = 0; a < L; ++a) {
        d[a * L + a] = 0.0;
        for (std::size_t b = 0; b < L; ++b) {
            if (a == b) continue;
            const double s = std::max(net.weight(a, b).value_or(0.0), net.weight(b, a).value_or(0.0));
            if (s > 0.0 || bridge_unrelated) d[a * L + b] = 1.0 - s + epsilon;
        }
    }
    for (std::size_t k = 0; k < L; ++k)
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) d[i * L + j] = std::min(d[i * L + j], d[i * L + k] + d[k * L + j]);
    return d;
}

/// Sum over pairs i < j of (|x_i - x_j| - d_ij)^2 / d_ij^2.
inline double stress(std::span<const Point> x, std::span<const double> d) {
    const std::size_t n = x.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dij = d[i * n + j];
            const double r = std::hypot(x[i][0] - x[j][0], x[i][1] - x[j][1]);
            total += (r - dij) * (r - dij) / (dij * dij);
        }
    return total;
}

/// Seeded circular start: nodes on a circle of diameter max d_ij, in a
/// shuffled order, with a random rotation.
inline std::vector<Point> circular_start(std::span<const double> d, std::size_t n, std::uint64_t seed) {
    double diameter = 0.0;
    for (double v : d) diameter = std::max(diameter, v);
    std::vector<std::size_t> slot(n);
    std::iota(slot.begin(), slot.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(slot));
    const double twopi = 2.0 * 3.14159265358979323846;
    const double rotation = rng.uniform(0.0, twopi);
    std::vector<Point> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double angle = rotation + twopi * static_cast<double>(slot[i]) / static_cast<double>(n);
        x[i] = {0.5 * diameter * std::cos(angle), 0.5 * diameter * std::sin(angle)};
    }
    return x;
}

namespace detail {

struct NodeTerms {
    double energy = 0.0;
    double gx = 0.0, gy = 0.0;
    double hxx = 0.0, hxy = 0.0, hyy = 0.0;
};

// Energy terms of node m at position p against every other node, with the
// gradient and Hessian of that partial energy with respect to p.
inline NodeTerms node_terms(std::size_t m, const Point& p, std::span<const Point> x, std::span<const double> d) {
    const std::size_t n = x.size();
    NodeTerms t;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == m) continue;
        const double dij = d[m * n + j];
        const double k = 1.0 / (dij * dij);
        const double vx = p[0] - x[j][0], vy = p[1] - x[j][1];
        const double r = std::hypot(vx, vy);
        t.energy += k * (r - dij) * (r - dij);
        if (r < 1e-12) continue;
        const double c = 2.0 * k * (1.0 - dij / r);
        t.gx += c * vx;
        t.gy += c * vy;
        const double q = 2.0 * k * dij / (r * r * r);
        t.hxx += c + q * vx * vx;
        t.hyy += c + q * vy * vy;
        t.hxy += q * vx * vy;
    }
    return t;
}

}  // namespace detail

/// Kamada-Kawai stress minimization on a complete distance matrix. Each
/// sweep moves the node with the largest gradient by damped Newton steps;
/// a step is accepted only if it lowers that node's energy, so total
/// stress never increases.
inline Layout kamada_kawai(std::span<const double> distances, std::size_t n, const LayoutOptions& options,
                           std::optional<std::vector<Point>> start = std::nullopt) {
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "layout needs at least two nodes");
    if (distances.size() != n * n) throw Error(ErrorCode::Shape, "distance matrix is not n x n");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double v = distances[i * n + j];
            if (std::isinf(v)) throw Error(ErrorCode::Disconnected, "distance graph is disconnected");
            if (!(v > 0.0)) throw Error(ErrorCode::Range, "distances must be positive");
        }

    Layout out;
    out.positions = start ? std::move(*start) : circular_start(distances, n, options.seed);
    if (out.positions.size() != n) throw Error(ErrorCode::Shape, "initial layout has the wrong size");
    auto& x = out.positions;
    out.initial_stress = stress(x, distances);

    std::vector<double> grad_norm(n);
    auto refresh = [&] {
        for (std::size_t m = 0; m < n; ++m) {
            const auto t = detail::node_terms(m, x[m], x, distances);
            grad_norm[m] = std::hypot(t.gx, t.gy);
        }
    };
    refresh();
    for (; out.sweeps < options.max_sweeps; ++out.sweeps) {
        const std::size_t m = static_cast<std::size_t>(
            std::distance(grad_norm.begin(), std::max_element(grad_norm.begin(), grad_norm.end())));
        if (grad_norm[m] < options.tolerance) break;
        bool moved = false;
        for (int inner = 0; inner < 50; ++inner) {
            const auto t = detail::node_terms(m, x[m], x, distances);
            if (std::hypot(t.gx, t.gy) < options.tolerance) break;
            double sx, sy;
            const double det = t.hxx * t.hyy - t.hxy * t.hxy;
            if (t.hxx > 0.0 && det > 0.0) {
                sx = -(t.hyy * t.gx - t.hxy * t.gy) / det;
                sy = -(t.hxx * t.gy - t.hxy * t.gx) / det;
            } else {
                // Not locally convex: fall back to a scaled gradient step.
                const double scale = std::max({std::fabs(t.hxx), std::fabs(t.hyy), 1.0});
                sx = -t.gx / scale;
                sy = -t.gy / scale;
            }
            double step = 1.0;
            bool accepted = false;
            for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
                const Point trial{x[m][0] + step * sx, x[m][1] + step * sy};
                if (detail::node_terms(m, trial, x, distances).energy < t.energy) {
                    x[m] = trial;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            moved = true;
        }
        if (!moved) grad_norm[m] = 0.0;  // stuck at numerical precision
        else refresh();
    }
    out.stress = stress(x, distances);
    return out;
}

inline Layout kamada_kawai_layout(const RelationNetwork& net, const LayoutOptions& options = {}) {
    if (net.size() < 2) throw Error(ErrorCode::InvalidArgument, "layout needs at least two labels");
    const auto d = relation_distances(net, options.epsilon, options.bridge_unrelated);
    return kamada_kawai(d, net.size(), options);
}

struct DotStyle {
    double width_base = 0.5;
    double width_scale = 4.0;
    /// Layout units to graph points.
    double position_scale = 100.0;
};

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

inline std::string fixed4(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4f", v == 0.0 ? 0.0 : v);
    return buf;
}

/// Graphviz digraph with pinned node positions and penwidth
/// width_base + width_scale * weight. Self loops, undefined rows and edges
/// below min_weight are left out.
inline std::string export_dot(const RelationNetwork& net, const Layout& layout, double min_weight,
                              const DotStyle& style = {}) {
    if (layout.positions.size() != net.size()) throw Error(ErrorCode::Shape, "layout does not match network");
    std::string out = "digraph relations {\n  node [shape=ellipse];\n";
    for (std::size_t a = 0; a < net.size(); ++a) {
        const auto& p = layout.positions[a];
        out += "  " + dot_quote(net.labels()[a]) + " [pos=\"" + fixed4(p[0] * style.position_scale) + "," +
               fixed4(p[1] * style.position_scale) + "!\"];\n";
    }
    for (std::size_t a = 0; a < net.size(); ++a)
        for (std::size_t b = 0; b < net.size(); ++b) {
            if (a == b) continue;
            const auto w = net.weight(a, b);
            if (!w || *w < min_weight) continue;
            out += "  " + dot_quote(net.labels()[a]) + " -> " + dot_quote(net.labels()[b]) + " [penwidth=" +
                   fixed4(style.width_base + style.width_scale * *w) + "];\n";
        }
    out += "}\n";
    return out;
}

inline nlohmann::ordered_json to_json(const RelationNetwork& net) {
    nlohmann::ordered_json j;
    j["labels"] = net.labels();
    j["support"] = net.support();
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < net.size(); ++a) {
        if (!net.defined(a)) {
            rows.push_back(nullptr);
            continue;
        }
        auto row = nlohmann::ordered_json::array();
        for (std::size_t b = 0; b < net.size(); ++b) row.push_back(*net.weight(a, b));
        rows.push_back(std::move(row));
    }
    j["weights"] = std::move(rows);
    return j;
}

}  // namespace labelcal::relnet
