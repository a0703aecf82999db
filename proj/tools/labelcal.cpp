#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "labelcal/calibration.hpp"
#include "labelcal/core.hpp"
#include "labelcal/folds.hpp"
#include "labelcal/io.hpp"
#include "labelcal/metrics.hpp"
#include "labelcal/parallel.hpp"
#include "labelcal/pbt.hpp"
#include "labelcal/relnet.hpp"
#include "labelcal/sampling.hpp"
#include "labelcal/segmentation.hpp"
#include "labelcal/toy.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace labelcal;
namespace seg = labelcal::segmentation;

namespace {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

// Collects what a run read so the manifest can list input digests.
struct Inputs {
    json digests = json::array();

    std::string read(const fs::path& path) {
        std::string content = io::read_file(path);
        digests.push_back({{"path", path.string()}, {"sha256", sha256_hex(content)}});
        return content;
    }
};

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Recorded parameters: every option of the subcommand with its effective value.
json parameters(const CLI::App& sub) {
    json params = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help") continue;
        if (opt->get_type_size() == 0) {
            params[name] = opt->count() > 0;
        } else if (opt->count() > 0) {
            const auto& r = opt->results();
            params[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else {
            params[name] = opt->get_default_str();
        }
    }
    return params;
}

struct Run {
    const CLI::App* sub = nullptr;
    std::uint64_t seed = 0;
    Inputs inputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    // Writes the output file and its manifest.
    void finish(const fs::path& out, std::string_view content, json extra_outputs = json::array()) {
        io::write_file(out, content);
        json outputs = json::array({out.string()});
        for (auto& e : extra_outputs) outputs.push_back(e);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json m;
        m["subcommand"] = sub->get_name();
        m["parameters"] = parameters(*sub);
        m["seed"] = seed;
        m["inputs"] = inputs.digests;
        m["outputs"] = outputs;
        m["version"] = LABELCAL_VERSION;
        m["duration_seconds"] = seconds;
        io::write_file(out.string() + ".manifest.json", dump(m));
    }
};

std::vector<std::size_t> frequency_order(const LabelMatrix& truth) {
    const auto counts = truth.column_counts();
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    return order;
}

// Labels grouped by frequency rank r (1-based) into blocks floor(r / 10):
// 1-9, 10-19, 20-29, ...
std::vector<std::vector<std::size_t>> rank_blocks(const std::vector<std::size_t>& order) {
    std::vector<std::vector<std::size_t>> blocks;
    for (std::size_t r = 1; r <= order.size(); ++r) {
        const std::size_t b = r / 10;
        if (blocks.size() <= b) blocks.resize(b + 1);
        blocks[b].push_back(order[r - 1]);
    }
    return blocks;
}

std::string block_name(std::size_t b, std::size_t count, std::size_t labels) {
    const std::size_t first = b == 0 ? 1 : b * 10;
    return std::to_string(first) + "-" + std::to_string(std::min(first + count - 1, labels));
}

std::optional<double> block_mean(const std::vector<std::optional<double>>& per_label,
                                 const std::vector<std::size_t>& block) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t l : block)
        if (per_label[l]) {
            sum += *per_label[l];
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::vector<int> read_years(Inputs& inputs, const fs::path& path, std::size_t rows) {
    const auto table = io::parse_csv(inputs.read(path));
    const auto values = io::numeric_column(table, "year");
    if (values.size() != rows)
        throw Error(ErrorCode::Shape, "year file has " + std::to_string(values.size()) + " rows, expected " +
                                          std::to_string(rows));
    std::vector<int> years(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != std::floor(values[i])) throw Error(ErrorCode::Parse, "year is not an integer", i + 1, "year");
        years[i] = static_cast<int>(values[i]);
    }
    return years;
}

json paragraph_json(const seg::ParagraphRecord& p) {
    json j;
    j["id"] = p.id;
    j["first_page"] = p.first_page;
    j["last_page"] = p.last_page;
    j["class"] = p.cls.name();
    j["text"] = p.text;
    j["stats"] = {{"median_char_height", p.stats.median_char_height},
                  {"mean_char_width", p.stats.mean_char_width},
                  {"left_margin", p.stats.left_margin},
                  {"right_extent", p.stats.right_extent},
                  {"chars", p.stats.chars}};
    json lines = json::array();
    for (const auto& l : p.lines)
        lines.push_back({{"page", l.page}, {"left", l.left}, {"top", l.top}, {"right", l.right},
                         {"bottom", l.bottom}, {"text", l.text}});
    j["lines"] = lines;
    return j;
}

json hyper_json(const pbt::Hyperparameters& h) {
    json j = json::object();
    for (const auto& [k, v] : h) j[k] = v;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label calibration and corpus analysis tools", "labelcal"};
    app.set_version_flag("--version", std::string(LABELCAL_VERSION));
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    unsigned threads = 0;
    app.add_option("--threads", threads, "Cap on worker threads (0: all cores)");

    Run run;
    std::function<void()> action;

    // segment
    auto* segment = app.add_subcommand("segment", "Paragraphs from OCR word boxes");
    std::string tsv_dir, segment_out = "paragraphs.jsonl";
    bool disjunctive = false;
    double right_tol = 1.5, indent_tol = 1.0;
    segment->add_option("--tsv", tsv_dir, "Directory of OCR .tsv files")->required();
    segment->add_option("--out", segment_out, "JSON-lines output");
    segment->add_flag("--disjunctive", disjunctive, "Merge when either boundary condition holds");
    segment->add_option("--right-tolerance", right_tol, "Full-line tolerance in character widths");
    segment->add_option("--indent-tolerance", indent_tol, "Indent tolerance in character widths");
    segment->callback([&] {
        action = [&] {
            if (!fs::is_directory(tsv_dir)) throw Error(ErrorCode::Io, "not a directory: " + tsv_dir);
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(tsv_dir))
                if (e.is_regular_file() && e.path().extension() == ".tsv") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            if (files.empty()) throw Error(ErrorCode::Io, "no .tsv files in " + tsv_dir);
            std::vector<std::vector<seg::ParagraphRecord>> pages;
            int offset = 0;
            for (const auto& f : files) {
                std::vector<seg::OcrToken> tokens;
                try {
                    tokens = seg::parse_ocr_tsv(run.inputs.read(f));
                } catch (const Error& e) {
                    throw Error(e.code(), f.filename().string() + ": " + e.what());
                }
                int max_page = 0;
                for (auto& t : tokens) {
                    max_page = std::max(max_page, t.page);
                    t.page += offset;
                }
                for (auto& p : seg::assemble_pages(tokens)) pages.push_back(std::move(p));
                offset += max_page;
            }
            seg::SegmentOptions options;
            options.merge.disjunctive = disjunctive;
            options.merge.right_tolerance = right_tol;
            options.merge.indent_tolerance = indent_tol;
            const auto result = seg::segment_pages(std::move(pages), options);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
            std::string out;
            for (const auto& p : result.paragraphs) out += paragraph_json(p).dump() + "\n";
            run.finish(segment_out, out);
        };
    });

    // match
    auto* match = app.add_subcommand("match", "Nearest paragraph to a quote by bag-of-words distance");
    std::string quote, paragraphs_file, match_out = "match.json";
    match->add_option("--quote", quote, "Quoted text")->required();
    match->add_option("--paragraphs", paragraphs_file, "JSON-lines with id and text")->required();
    match->add_option("--out", match_out, "JSON report");
    match->callback([&] {
        action = [&] {
            const auto records = io::parse_text_records(run.inputs.read(paragraphs_file));
            std::vector<std::string> texts;
            for (const auto& r : records) texts.push_back(r.text);
            const auto m = seg::bow_match(quote, texts);
            json j;
            j["index"] = m.index;
            j["id"] = records[m.index].id;
            j["distance"] = m.distance;
            j["text"] = records[m.index].text;
            run.finish(match_out, dump(j));
        };
    });

    // filter
    auto* filter = app.add_subcommand("filter", "Records whose text contains a substring");
    std::string texts_file, needle, filter_out = "filtered.jsonl";
    bool fold_case = false;
    filter->add_option("--texts", texts_file, "JSON-lines with id and text")->required();
    filter->add_option("--needle", needle, "Substring to look for")->required();
    filter->add_flag("--fold-case", fold_case, "Case-insensitive matching");
    filter->add_option("--out", filter_out, "JSON-lines output");
    filter->callback([&] {
        action = [&] {
            const auto records = io::parse_text_records(run.inputs.read(texts_file));
            std::vector<std::string> texts;
            for (const auto& r : records) texts.push_back(r.text);
            std::string out;
            for (std::size_t i : substring_filter(texts, needle, fold_case))
                out += json({{"id", records[i].id}, {"text", records[i].text}}).dump() + "\n";
            run.finish(filter_out, out);
        };
    });

    // folds
    auto* folds = app.add_subcommand("folds", "Stratified k-fold assignment");
    std::string labels_file, folds_out = "folds.csv";
    int k = 10;
    std::uint64_t candidates = 100000, folds_seed = 0;
    bool multiclass_folds = false;
    folds->add_option("--labels", labels_file, "0/1 label matrix CSV")->required();
    folds->add_option("--k", k, "Number of folds");
    folds->add_option("--candidates", candidates, "Random partitions to compare");
    folds->add_option("--seed", folds_seed, "Random seed");
    folds->add_flag("--multiclass", multiclass_folds, "One class per row");
    folds->add_option("--out", folds_out, "id,fold CSV");
    folds->callback([&] {
        action = [&] {
            run.seed = folds_seed;
            const auto kind = multiclass_folds ? LabelKind::Multiclass : LabelKind::Multilabel;
            const auto labels = io::parse_label_matrix(run.inputs.read(labels_file), kind);
            const auto a = multiclass_folds ? stratified_single_label(labels.classes(), k, folds_seed)
                                            : stratified_kfold(labels, k, candidates, folds_seed);
            std::string out = "id,fold\n";
            for (std::size_t i = 0; i < a.fold_of.size(); ++i)
                out += std::to_string(i + 1) + "," + std::to_string(a.fold_of[i]) + "\n";
            const std::string sidecar = folds_out + ".score.json";
            json s;
            s["k"] = a.k;
            s["max_deviation"] = a.score.empty() ? 0.0 : a.score.front();
            s["score"] = a.score;
            s["fold_sizes"] = a.fold_sizes();
            io::write_file(sidecar, dump(s));
            run.finish(folds_out, out, json::array({sidecar}));
        };
    });

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "Evaluation metrics with per-label breakdown");
    std::string probs_file, truth_file, report_format = "json", metrics_out = "metrics.json";
    int ece_bins = metrics::kDefaultEceBins;
    bool multiclass_metrics = false;
    metrics_cmd->add_option("--probs", probs_file, "Probability matrix CSV")->required();
    metrics_cmd->add_option("--truth", truth_file, "0/1 label matrix CSV")->required();
    metrics_cmd->add_option("--report", report_format, "Report format")->check(CLI::IsMember({"json"}));
    metrics_cmd->add_option("--bins", ece_bins, "Calibration bins");
    metrics_cmd->add_flag("--multiclass", multiclass_metrics, "Also report balanced accuracy of the argmax");
    metrics_cmd->add_option("--out", metrics_out, "JSON report");
    metrics_cmd->callback([&] {
        action = [&] {
            const auto probs = io::parse_prob_matrix(run.inputs.read(probs_file));
            const auto kind = multiclass_metrics ? LabelKind::Multiclass : LabelKind::Multilabel;
            const auto truth = io::parse_label_matrix(run.inputs.read(truth_file), kind);
            if (probs.labels() != truth.labels())
                throw Error(ErrorCode::Shape, "probability and truth files have different label columns");
            if (probs.rows() != truth.rows()) throw Error(ErrorCode::Shape, "probability and truth row counts differ");
            const auto auc = metrics::macro_roc_auc(probs, truth);
            const auto count = metrics::label_count_error_rate(probs, truth);
            const auto true_counts = truth.column_counts();
            json j;
            j["rows"] = probs.rows();
            j["macro_roc_auc"] = auc.macro;
            j["label_count_error_rate"] = count.rate;
            if (multiclass_metrics) {
                std::vector<int> pred(probs.rows());
                for (std::size_t i = 0; i < probs.rows(); ++i) {
                    const auto r = probs.row(i);
                    pred[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
                }
                j["balanced_accuracy"] = metrics::balanced_accuracy(pred, truth.classes());
            }
            json labels = json::array();
            for (std::size_t l = 0; l < probs.cols(); ++l) {
                const auto p = probs.column(l);
                std::vector<int> y(probs.rows());
                for (std::size_t i = 0; i < probs.rows(); ++i) y[i] = truth(i, l);
                double predicted = 0.0;
                for (double v : p) predicted += v;
                labels.push_back({{"label", probs.labels()[l]},
                                  {"true_count", true_counts[l]},
                                  {"predicted_count", predicted},
                                  {"roc_auc", number_or_null(auc.per_label[l])},
                                  {"ece", metrics::expected_calibration_error<int>(p, y, ece_bins)},
                                  {"count_error", number_or_null(count.per_label[l])}});
            }
            j["labels"] = labels;
            run.finish(metrics_out, dump(j));
        };
    });

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Grid search for truncation thresholds");
    std::string oof_file, cal_truth_file, years_file, calibrate_out = "calibration.json";
    double step = calibration::kDefaultGridStep;
    calibrate->add_option("--oof", oof_file, "Out-of-fold probability matrix CSV")->required();
    calibrate->add_option("--truth", cal_truth_file, "0/1 label matrix CSV")->required();
    calibrate->add_option("--step", step, "Grid step");
    calibrate->add_option("--years", years_file, "CSV with a year column, one row per item");
    calibrate->add_option("--out", calibrate_out, "JSON report");
    calibrate->callback([&] {
        action = [&] {
            const auto oof = io::parse_prob_matrix(run.inputs.read(oof_file));
            const auto truth = io::parse_label_matrix(run.inputs.read(cal_truth_file));
            if (oof.labels() != truth.labels())
                throw Error(ErrorCode::Shape, "probability and truth files have different label columns");
            const auto grid = calibration::grid_search_thresholds(oof, truth, step);
            const std::vector<std::pair<std::string, ProbMatrix>> variants{
                {"no_truncation", oof},
                {"low_only", calibration::truncate(oof, {grid.best.p_low, 1.0})},
                {"low_and_high", calibration::truncate(oof, grid.best)}};
            const auto order = frequency_order(truth);
            const auto blocks = rank_blocks(order);

            json j;
            j["thresholds"] = {{"p_low", grid.best.p_low}, {"p_high", grid.best.p_high}};
            j["error"] = grid.error;
            j["evaluated"] = grid.evaluated;
            j["threshold_at_half_error"] =
                metrics::label_count_error_rate(calibration::threshold_at_half(oof), truth).rate;
            j["columns"] = json::array({"no_truncation", "low_only", "low_and_high"});

            std::vector<metrics::LabelCountError> errors;
            for (const auto& [name, m] : variants) errors.push_back(metrics::label_count_error_rate(m, truth));
            json rows = json::array();
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                json row;
                row["labels"] = block_name(b, blocks[b].size(), order.size());
                for (std::size_t v = 0; v < variants.size(); ++v)
                    row[variants[v].first] = number_or_null(block_mean(errors[v].per_label, blocks[b]));
                rows.push_back(row);
            }
            json total;
            total["labels"] = "1-" + std::to_string(order.size()) + " (cumulated)";
            for (std::size_t v = 0; v < variants.size(); ++v) total[variants[v].first] = errors[v].rate;
            rows.push_back(total);
            j["label_count_error"] = rows;

            if (!years_file.empty()) {
                const auto years = read_years(run.inputs, years_file, oof.rows());
                const auto truth_series = metrics::tendency_series(truth.as_probabilities(), years);
                json trows = json::array();
                std::vector<std::vector<metrics::TendencySeries>> pred_series;
                for (const auto& [name, m] : variants) pred_series.push_back(metrics::tendency_series(m, years));
                auto subset = [](const std::vector<metrics::TendencySeries>& s, const std::vector<std::size_t>& ls) {
                    std::vector<metrics::TendencySeries> out;
                    for (std::size_t l : ls) out.push_back(s[l]);
                    return out;
                };
                for (std::size_t b = 0; b < blocks.size(); ++b) {
                    json row;
                    row["labels"] = block_name(b, blocks[b].size(), order.size());
                    const auto t = subset(truth_series, blocks[b]);
                    for (std::size_t v = 0; v < variants.size(); ++v)
                        row[variants[v].first] = metrics::tendency_error(subset(pred_series[v], blocks[b]), t);
                    trows.push_back(row);
                }
                json ttotal;
                ttotal["labels"] = "1-" + std::to_string(order.size()) + " (cumulated)";
                for (std::size_t v = 0; v < variants.size(); ++v)
                    ttotal[variants[v].first] = metrics::tendency_error(pred_series[v], truth_series);
                trows.push_back(ttotal);
                j["tendency_error"] = trows;
            }
            run.finish(calibrate_out, dump(j));
        };
    });

    // truncate
    auto* truncate_cmd = app.add_subcommand("truncate", "Apply truncation thresholds to a probability matrix");
    std::string trunc_probs, trunc_out;
    double p_low = 0.0, p_high = 1.0;
    truncate_cmd->add_option("--probs", trunc_probs, "Probability matrix CSV")->required();
    truncate_cmd->add_option("--p-low", p_low, "Values below become 0");
    truncate_cmd->add_option("--p-high", p_high, "Values above become 1");
    truncate_cmd->add_option("--out", trunc_out, "Output CSV")->required();
    truncate_cmd->callback([&] {
        action = [&] {
            const auto probs = io::parse_prob_matrix(run.inputs.read(trunc_probs));
            run.finish(trunc_out, io::format_prob_matrix(calibration::truncate(probs, {p_low, p_high})));
        };
    });

    // sample
    auto* sample = app.add_subcommand("sample", "Importance-weighted validation sample");
    std::string sample_probs, sample_out = "sample.csv";
    std::size_t sample_n = sampling::kDefaultValidationSize;
    std::uint64_t sample_seed = 0;
    sample->add_option("--probs", sample_probs, "Probability matrix CSV")->required();
    sample->add_option("--n", sample_n, "Sample size");
    sample->add_option("--seed", sample_seed, "Random seed");
    sample->add_option("--out", sample_out, "index,weight CSV");
    sample->callback([&] {
        action = [&] {
            run.seed = sample_seed;
            const auto probs = io::parse_prob_matrix(run.inputs.read(sample_probs));
            const auto w = sampling::importance_weights(probs);
            std::string out = "index,weight\n";
            for (std::size_t i : sampling::weighted_sample(w, sample_n, sample_seed))
                out += std::to_string(i + 1) + "," + io::format_double(w[i]) + "\n";
            run.finish(sample_out, out);
        };
    });

    // size-curve
    auto* size_curve = app.add_subcommand("size-curve", "Bootstrap std of the mean score against sample size");
    std::string scores_file, curve_out = "size_curve.json", score_column = "score", group_column;
    std::size_t reps = 100, resamples = 10000, min_size = 50, max_size = 300, size_step = 10;
    std::uint64_t curve_seed = 0;
    size_curve->add_option("--scores", scores_file, "CSV with a score column")->required();
    size_curve->add_option("--column", score_column, "Score column name");
    size_curve->add_option("--group-column", group_column, "Column splitting scores into groups");
    size_curve->add_option("--reps", reps, "Subsamples per size and group");
    size_curve->add_option("--resamples", resamples, "Bootstrap resamples");
    size_curve->add_option("--min-size", min_size, "Smallest sample size");
    size_curve->add_option("--max-size", max_size, "Largest sample size");
    size_curve->add_option("--size-step", size_step, "Sample size increment");
    size_curve->add_option("--seed", curve_seed, "Random seed");
    size_curve->add_option("--out", curve_out, "JSON report");
    size_curve->callback([&] {
        action = [&] {
            run.seed = curve_seed;
            const auto table = io::parse_csv(run.inputs.read(scores_file));
            const auto scores = io::numeric_column(table, score_column);
            std::vector<std::vector<double>> groups;
            if (group_column.empty()) {
                groups.push_back(scores);
            } else {
                const std::size_t c = table.column(group_column);
                std::map<std::string, std::size_t> index;
                for (std::size_t r = 0; r < scores.size(); ++r) {
                    auto [it, fresh] = index.try_emplace(table.rows[r][c], groups.size());
                    if (fresh) groups.emplace_back();
                    groups[it->second].push_back(scores[r]);
                }
            }
            if (size_step == 0 || min_size > max_size) throw Error(ErrorCode::InvalidArgument, "invalid size range");
            sampling::SizingOptions options;
            for (std::size_t s = min_size; s <= max_size; s += size_step) options.sizes.push_back(s);
            options.reps = reps;
            options.resamples = resamples;
            options.seed = curve_seed;
            const auto curve = sampling::sizing_curve(std::span<const std::vector<double>>(groups), options);
            json points = json::array();
            for (const auto& p : curve)
                points.push_back({{"sample_size", p.sample_size}, {"mean_std", p.mean_std}, {"repetitions", p.repetitions}});
            json j;
            j["groups"] = groups.size();
            j["points"] = points;
            run.finish(curve_out, dump(j));
        };
    });

    // relnet
    auto* relnet_cmd = app.add_subcommand("relnet", "Label relation network as Graphviz DOT");
    std::string rel_probs, rel_truth, rel_out = "graph.dot", rel_json;
    double min_weight = 0.1;
    bool bridge = false;
    std::uint64_t rel_seed = 0;
    relnet_cmd->add_option("--probs", rel_probs, "Probability matrix CSV");
    relnet_cmd->add_option("--truth", rel_truth, "0/1 label matrix CSV");
    relnet_cmd->add_option("--min-weight", min_weight, "Smallest weight drawn as an edge");
    relnet_cmd->add_flag("--bridge", bridge, "Connect unrelated labels instead of failing");
    relnet_cmd->add_option("--seed", rel_seed, "Layout seed");
    relnet_cmd->add_option("--json", rel_json, "Also write the weight matrix as JSON");
    relnet_cmd->add_option("--out", rel_out, "DOT output");
    relnet_cmd->callback([&] {
        action = [&] {
            run.seed = rel_seed;
            if (rel_probs.empty() && rel_truth.empty())
                throw CLI::ValidationError("relnet", "--probs or --truth is required");
            relnet::RelationNetwork net;
            if (!rel_probs.empty() && !rel_truth.empty()) {
                // Both sources: annotation rows then prediction rows.
                const auto p = io::parse_prob_matrix(run.inputs.read(rel_probs));
                const auto t = io::parse_label_matrix(run.inputs.read(rel_truth));
                const std::vector<ProbMatrix> parts{t.as_probabilities(), p};
                if (p.labels() != t.labels())
                    throw Error(ErrorCode::Shape, "probability and truth files have different label columns");
                std::vector<double> values(parts[0].values().begin(), parts[0].values().end());
                values.insert(values.end(), p.values().begin(), p.values().end());
                net = relnet::network_from_probabilities(ProbMatrix(p.labels(), t.rows() + p.rows(), values));
            } else if (!rel_probs.empty()) {
                net = relnet::network_from_probabilities(io::parse_prob_matrix(run.inputs.read(rel_probs)));
            } else {
                net = relnet::network_from_annotations(io::parse_label_matrix(run.inputs.read(rel_truth)));
            }
            relnet::LayoutOptions options;
            options.seed = rel_seed;
            options.bridge_unrelated = bridge;
            const auto layout = relnet::kamada_kawai_layout(net, options);
            json extra = json::array();
            if (!rel_json.empty()) {
                io::write_file(rel_json, dump(relnet::to_json(net)));
                extra.push_back(rel_json);
            }
            run.finish(rel_out, relnet::export_dot(net, layout, min_weight), extra);
        };
    });

    // pbt-demo
    auto* pbt_demo = app.add_subcommand("pbt-demo", "Population-based training on a toy imbalanced problem");
    std::string mode = "multilabel", stop = "fixed", pbt_out = "history.json";
    std::size_t population = 100, generations = 30, patience = 10;
    std::uint64_t pbt_seed = 0;
    std::optional<double> toy_noise;
    pbt_demo->add_option("--mode", mode, "multilabel or multiclass")->check(CLI::IsMember({"multilabel", "multiclass"}));
    pbt_demo->add_option("--population", population, "Population size");
    pbt_demo->add_option("--generations", generations, "Generations (minimum when stopping on patience)");
    pbt_demo->add_option("--stop", stop, "fixed or patience")->check(CLI::IsMember({"fixed", "patience"}));
    pbt_demo->add_option("--patience", patience, "Generations without improvement before stopping");
    pbt_demo->add_option("--noise", toy_noise, "Label noise (multilabel, default 0.5) or class spread (multiclass, default 2)");
    pbt_demo->add_option("--seed", pbt_seed, "Random seed");
    pbt_demo->add_option("--out", pbt_out, "JSON history");
    pbt_demo->callback([&] {
        action = [&] {
            run.seed = pbt_seed;
            toy::ToySpec spec;
            spec.mode = mode == "multiclass" ? toy::Mode::Multiclass : toy::Mode::Multilabel;
            spec.seed = pbt_seed;
            spec.noise = toy_noise.value_or(spec.mode == toy::Mode::Multiclass ? 2.0 : 0.5);
            pbt::PbtConfig config;
            config.population_size = population;
            config.min_generations = generations;
            config.patience = patience;
            config.seed = pbt_seed;
            config.stop = stop == "patience" ? pbt::StopMode::Patience : pbt::StopMode::Fixed;
            const auto result = pbt::pbt_run(toy::toy_trainable(spec), toy::default_space(spec.mode), config);
            json j;
            j["mode"] = mode;
            j["best"] = {{"member", result.best.id},
                         {"generation", result.best.generation},
                         {"score", result.best.score},
                         {"hyperparameters", hyper_json(result.best.hyperparameters)}};
            json history = json::array();
            for (const auto& g : result.history) {
                json members = json::array();
                for (const auto& m : g.members)
                    members.push_back({{"id", m.id},
                                       {"score", m.score},
                                       {"elite", m.elite},
                                       {"copied_from", m.copied_from ? json(*m.copied_from) : json(nullptr)},
                                       {"hyperparameters", hyper_json(m.hyperparameters)}});
                history.push_back({{"generation", g.generation}, {"best_score", g.best_score}, {"members", members}});
            }
            j["history"] = history;
            run.finish(pbt_out, dump(j));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    set_max_threads(threads);
    for (auto* sub : app.get_subcommands()) run.sub = sub;
    try {
        action();
    } catch (const CLI::ValidationError& e) {
        std::cerr << "labelcal: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "labelcal " << run.sub->get_name() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "labelcal " << run.sub->get_name() << ": " << e.what() << "\n";
        return 2;
    }
    return 0;
}
