#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "labelcal/error.hpp"
#include "labelcal/io.hpp"
#include "labelcal/text.hpp"

namespace labelcal::segmentation {

/// One word box of tabular OCR output (level, page_num, block_num, par_num,
/// line_num, word_num, left, top, width, height, conf, text).
struct OcrToken {
    int level = 5;
    int page = 0, block = 0, paragraph = 0, line = 0, word = 0;
    double left = 0, top = 0, width = 0, height = 0;
    double confidence = 0;
    std::string text;
    std::size_t source_line = 0;
};

inline constexpr std::array<std::string_view, 12> kOcrColumns{
    "level", "page_num", "block_num", "par_num", "line_num", "word_num",
    "left",  "top",      "width",     "height",  "conf",     "text"};

/// Parses tab-separated OCR data. Rows whose text is empty (structural
/// page/block/line rows) are skipped. Errors carry the 1-based file line.
inline std::vector<OcrToken> parse_ocr_tsv(std::string_view input) {
    const auto ls = io::lines(input);
    if (ls.empty() || io::trim(ls[0]).empty()) throw Error(ErrorCode::Parse, "missing header row", 1);
    const auto header = io::split(ls[0], '\t');
    std::array<std::size_t, kOcrColumns.size()> at{};
    for (std::size_t c = 0; c < kOcrColumns.size(); ++c) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](std::string_view h) { return io::trim(h) == kOcrColumns[c]; });
        if (it == header.end())
            throw Error(ErrorCode::MissingColumn, "OCR header lacks a column", 1, std::string(kOcrColumns[c]));
        at[c] = static_cast<std::size_t>(it - header.begin());
    }
    const std::size_t text_col = at[11];

    std::vector<OcrToken> tokens;
    for (std::size_t r = 1; r < ls.size(); ++r) {
        const std::size_t line_no = r + 1;
        if (io::trim(ls[r]).empty()) continue;
        const auto fields = io::split(ls[r], '\t');
        const std::string_view text = text_col < fields.size() ? fields[text_col] : std::string_view{};
        if (io::trim(text).empty()) continue;
        if (fields.size() < header.size())
            throw Error(ErrorCode::MissingColumn, "row has fewer fields than the header", line_no);

        OcrToken t;
        t.source_line = line_no;
        t.text = std::string(io::trim(text));
        int* ints[] = {&t.level, &t.page, &t.block, &t.paragraph, &t.line, &t.word};
        for (std::size_t c = 0; c < 6; ++c) {
            const auto f = io::trim(fields[at[c]]);
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), *ints[c]);
            if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
                throw Error(ErrorCode::Parse, "non-numeric field \"" + std::string(f) + "\"", line_no,
                            std::string(kOcrColumns[c]));
            if (*ints[c] < 0) throw Error(ErrorCode::Range, "negative index", line_no, std::string(kOcrColumns[c]));
        }
        double* reals[] = {&t.left, &t.top, &t.width, &t.height, &t.confidence};
        for (std::size_t c = 6; c < 11; ++c)
            if (!io::parse_double(fields[at[c]], *reals[c - 6]))
                throw Error(ErrorCode::Parse, "non-numeric field \"" + std::string(fields[at[c]]) + "\"", line_no,
                            std::string(kOcrColumns[c]));
        if (!(t.width > 0)) throw Error(ErrorCode::Range, "box width must be positive", line_no, "width");
        if (!(t.height > 0)) throw Error(ErrorCode::Range, "box height must be positive", line_no, "height");
        tokens.push_back(std::move(t));
    }
    return tokens;
}

struct WordBox {
    double left = 0, top = 0, width = 0, height = 0;
    std::string text;
};

struct LineBox {
    int page = 0;
    double left = 0, top = 0, right = 0, bottom = 0;
    std::string text;
    std::vector<WordBox> words;
};

struct ParagraphStats {
    double median_char_height = 0;
    double mean_char_width = 0;
    double left_margin = 0;
    double right_extent = 0;
    std::size_t chars = 0;  // text mass
};

enum class ParagraphKind { Body, Footnote, Heading, Noise, Auxiliary };

struct ParagraphClass {
    ParagraphKind kind = ParagraphKind::Body;
    int auxiliary = 0;  // 1-based number for Auxiliary

    std::string name() const {
        switch (kind) {
            case ParagraphKind::Body: return "body";
            case ParagraphKind::Footnote: return "footnote";
            case ParagraphKind::Heading: return "heading";
            case ParagraphKind::Noise: return "noise";
            case ParagraphKind::Auxiliary: return "aux-" + std::to_string(auxiliary);
        }
        return "unknown";
    }
    friend bool operator==(const ParagraphClass&, const ParagraphClass&) = default;
};

struct ParagraphRecord {
    std::string id;
    int first_page = 0;
    int last_page = 0;
    std::vector<LineBox> lines;
    std::string text;
    ParagraphClass cls;
    ParagraphStats stats;
};

/// Character statistics from word boxes: a word's box height stands in for
/// its character height, width / code points for its character width.
inline ParagraphStats compute_stats(std::span<const LineBox> lines) {
    ParagraphStats s;
    std::vector<double> heights;
    double width_sum = 0.0;
    bool first = true;
    for (const auto& line : lines) {
        s.left_margin = first ? line.left : std::min(s.left_margin, line.left);
        s.right_extent = first ? line.right : std::max(s.right_extent, line.right);
        first = false;
        for (const auto& w : line.words) {
            const std::size_t n = text::code_points(w.text);
            if (n == 0) continue;
            heights.push_back(w.height);
            width_sum += w.width;
            s.chars += n;
        }
    }
    if (!heights.empty()) {
        std::sort(heights.begin(), heights.end());
        const std::size_t m = heights.size();
        s.median_char_height = m % 2 ? heights[m / 2] : 0.5 * (heights[m / 2 - 1] + heights[m / 2]);
        s.mean_char_width = width_sum / static_cast<double>(s.chars);
    }
    return s;
}

inline std::string join_line_texts(std::span<const LineBox> lines) {
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += ' ';
        out += l.text;
    }
    return out;
}

/// Groups word tokens into paragraphs per page, in order of appearance.
inline std::vector<std::vector<ParagraphRecord>> assemble_pages(std::span<const OcrToken> tokens) {
    std::vector<std::vector<ParagraphRecord>> pages;
    std::map<int, std::size_t> page_index;
    // (page, block, paragraph) -> position in its page
    std::map<std::tuple<int, int, int>, std::size_t> para_index;
    std::map<std::tuple<int, int, int, int>, std::size_t> line_index;
    for (const auto& t : tokens) {
        auto [pit, new_page] = page_index.try_emplace(t.page, pages.size());
        if (new_page) pages.emplace_back();
        auto& page = pages[pit->second];
        auto [qit, new_para] = para_index.try_emplace({t.page, t.block, t.paragraph}, page.size());
        if (new_para) {
            ParagraphRecord p;
            p.id = "p" + std::to_string(t.page) + "-b" + std::to_string(t.block) + "-" + std::to_string(t.paragraph);
            p.first_page = p.last_page = t.page;
            page.push_back(std::move(p));
        }
        auto& para = page[qit->second];
        auto [lit, new_line] = line_index.try_emplace({t.page, t.block, t.paragraph, t.line}, para.lines.size());
        if (new_line) {
            LineBox l;
            l.page = t.page;
            l.left = t.left;
            l.top = t.top;
            l.right = t.left + t.width;
            l.bottom = t.top + t.height;
            para.lines.push_back(std::move(l));
        }
        auto& line = para.lines[lit->second];
        line.left = std::min(line.left, t.left);
        line.top = std::min(line.top, t.top);
        line.right = std::max(line.right, t.left + t.width);
        line.bottom = std::max(line.bottom, t.top + t.height);
        if (!line.text.empty()) line.text += ' ';
        line.text += t.text;
        line.words.push_back({t.left, t.top, t.width, t.height, t.text});
    }
    for (auto& page : pages)
        for (auto& p : page) {
            p.text = join_line_texts(p.lines);
            p.stats = compute_stats(p.lines);
        }
    return pages;
}

inline constexpr int kNoise = -1;

/// Density-based clustering with the Euclidean metric. A point is core when
/// at least min_pts points (itself included) lie within eps. Cluster ids
/// follow first-visited order over ascending point index; border points go
/// to the first cluster that reaches them.
inline std::vector<int> dbscan(std::span<const double> points, std::size_t dims, double eps, std::size_t min_pts) {
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    if (min_pts < 1) throw Error(ErrorCode::InvalidArgument, "min_pts must be at least 1");
    if (dims == 0 || points.size() % dims != 0) throw Error(ErrorCode::Shape, "point array does not match dims");
    const std::size_t M = points.size() / dims;
    const double eps2 = eps * eps;
    auto neighbours = [&](std::size_t p) {
        std::vector<std::size_t> out;
        for (std::size_t q = 0; q < M; ++q) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < dims; ++k) {
                const double diff = points[p * dims + k] - points[q * dims + k];
                d2 += diff * diff;
            }
            if (d2 <= eps2) out.push_back(q);
        }
        return out;
    };

    constexpr int kUnvisited = -2;
    std::vector<int> label(M, kUnvisited);
    int cluster = 0;
    for (std::size_t p = 0; p < M; ++p) {
        if (label[p] != kUnvisited) continue;
        const auto seeds = neighbours(p);
        if (seeds.size() < min_pts) {
            label[p] = kNoise;
            continue;
        }
        label[p] = cluster;
        std::deque<std::size_t> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            const std::size_t q = queue.front();
            queue.pop_front();
            if (label[q] == kNoise) label[q] = cluster;  // border point
            if (label[q] != kUnvisited) continue;
            label[q] = cluster;
            const auto more = neighbours(q);
            if (more.size() >= min_pts) queue.insert(queue.end(), more.begin(), more.end());
        }
        ++cluster;
    }
    return label;
}

/// eps from the sorted k-distance curve (k = min_pts, the point itself
/// included): the value at the knee, taken as the point farthest from the
/// chord joining the curve's ends.
inline double k_distance_eps(std::span<const double> points, std::size_t dims, std::size_t min_pts) {
    const std::size_t M = points.size() / dims;
    if (M == 0) throw Error(ErrorCode::InvalidArgument, "no points");
    const std::size_t k = std::min(std::max<std::size_t>(min_pts, 1), M) - 1;
    std::vector<double> kdist(M), d(M);
    for (std::size_t p = 0; p < M; ++p) {
        for (std::size_t q = 0; q < M; ++q) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < dims; ++c) {
                const double diff = points[p * dims + c] - points[q * dims + c];
                d2 += diff * diff;
            }
            d[q] = std::sqrt(d2);
        }
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        kdist[p] = d[k];
    }
    std::sort(kdist.begin(), kdist.end());
    double eps = kdist.back();
    if (M >= 3 && kdist.back() > kdist.front()) {
        const double x1 = static_cast<double>(M - 1), y0 = kdist.front(), y1 = kdist.back();
        double best = -1.0;
        for (std::size_t i = 0; i < M; ++i) {
            // Distance to the chord in normalized coordinates.
            const double x = static_cast<double>(i) / x1, y = (kdist[i] - y0) / (y1 - y0);
            const double gap = std::fabs(y - x);
            if (gap > best) {
                best = gap;
                eps = kdist[i];
            }
        }
    }
    if (!(eps > 0.0)) {
        const auto positive = std::find_if(kdist.begin(), kdist.end(), [](double v) { return v > 0.0; });
        eps = positive != kdist.end() ? *positive : 0.5;
    }
    return eps;
}

struct ClassifyOptions {
    std::optional<double> eps;  // k-distance heuristic when absent
    std::size_t min_pts = 3;
    /// Features are divided by max(sd, relative_scale_floor * |mean|), so
    /// sub-pixel jitter in a single-class document is not blown up to unit
    /// variance.
    double relative_scale_floor = 0.15;
    /// Lower bound for the heuristic eps, in standardized units.
    double min_eps = 0.6;
};

/// Clusters paragraphs on z-scored (median char height, mean char width).
/// The cluster with the largest text mass is body; among the others the
/// heaviest cluster with smaller characters is footnote and the heaviest
/// with larger characters is heading. Further clusters become numbered
/// auxiliary classes; DBSCAN noise is the noise class.
inline std::vector<ParagraphClass> classify_paragraphs(std::span<const ParagraphRecord> paragraphs,
                                                       const ClassifyOptions& options = {}) {
    if (paragraphs.empty()) throw Error(ErrorCode::InvalidArgument, "no paragraphs to classify");
    const std::size_t M = paragraphs.size();
    std::vector<double> features(M * 2);
    for (std::size_t i = 0; i < M; ++i) {
        features[i * 2] = paragraphs[i].stats.median_char_height;
        features[i * 2 + 1] = paragraphs[i].stats.mean_char_width;
    }
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < M; ++i) mean += features[i * 2 + c];
        mean /= static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) var += (features[i * 2 + c] - mean) * (features[i * 2 + c] - mean);
        const double sd = std::max(std::sqrt(var / static_cast<double>(M)), options.relative_scale_floor * std::fabs(mean));
        for (std::size_t i = 0; i < M; ++i) features[i * 2 + c] = sd > 0.0 ? (features[i * 2 + c] - mean) / sd : 0.0;
    }
    const double eps =
        options.eps ? *options.eps : std::max(k_distance_eps(features, 2, options.min_pts), options.min_eps);
    const auto ids = dbscan(features, 2, eps, options.min_pts);

    const int clusters = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
    std::vector<ParagraphClass> out(M, ParagraphClass{ParagraphKind::Noise, 0});
    if (clusters == 0) return out;

    std::vector<double> mass(static_cast<std::size_t>(clusters), 0.0);
    std::vector<std::vector<double>> heights(static_cast<std::size_t>(clusters));
    for (std::size_t i = 0; i < M; ++i) {
        if (ids[i] < 0) continue;
        mass[static_cast<std::size_t>(ids[i])] += static_cast<double>(paragraphs[i].stats.chars);
        heights[static_cast<std::size_t>(ids[i])].push_back(paragraphs[i].stats.median_char_height);
    }
    std::vector<double> median(static_cast<std::size_t>(clusters));
    for (std::size_t c = 0; c < median.size(); ++c) {
        auto& h = heights[c];
        std::sort(h.begin(), h.end());
        median[c] = h.size() % 2 ? h[h.size() / 2] : 0.5 * (h[h.size() / 2 - 1] + h[h.size() / 2]);
    }
    const std::size_t body = static_cast<std::size_t>(std::max_element(mass.begin(), mass.end()) - mass.begin());
    std::optional<std::size_t> footnote, heading;
    for (std::size_t c = 0; c < median.size(); ++c) {
        if (c == body) continue;
        auto& slot = median[c] < median[body] ? footnote : heading;
        if (!slot || mass[c] > mass[*slot]) slot = c;
    }
    std::vector<ParagraphClass> cluster_class(median.size());
    int aux = 0;
    for (std::size_t c = 0; c < median.size(); ++c) {
        if (c == body) cluster_class[c] = {ParagraphKind::Body, 0};
        else if (footnote && c == *footnote) cluster_class[c] = {ParagraphKind::Footnote, 0};
        else if (heading && c == *heading) cluster_class[c] = {ParagraphKind::Heading, 0};
        else cluster_class[c] = {ParagraphKind::Auxiliary, ++aux};
    }
    for (std::size_t i = 0; i < M; ++i)
        if (ids[i] >= 0) out[i] = cluster_class[static_cast<std::size_t>(ids[i])];
    return out;
}

struct PageGeometry {
    bool has_body = false;
    double left_margin = 0;
    double right_margin = 0;
    double char_width = 0;
};

/// Body margins of one page: left is the most common left edge of body
/// lines (2px bins, smallest edge of the modal bin); right is the 95th
/// percentile of body line right edges.
inline PageGeometry page_geometry(std::span<const ParagraphRecord> page) {
    PageGeometry g;
    std::vector<double> lefts, rights;
    double width_sum = 0.0, chars = 0.0;
    for (const auto& p : page) {
        if (p.cls.kind != ParagraphKind::Body) continue;
        for (const auto& l : p.lines) {
            lefts.push_back(l.left);
            rights.push_back(l.right);
        }
        width_sum += p.stats.mean_char_width * static_cast<double>(p.stats.chars);
        chars += static_cast<double>(p.stats.chars);
    }
    if (lefts.empty()) return g;
    g.has_body = true;
    std::map<long long, std::pair<std::size_t, double>> bins;  // bin -> (count, min edge)
    for (double l : lefts) {
        auto& [count, lo] = bins.try_emplace(static_cast<long long>(std::floor(l / 2.0)), 0, l).first->second;
        ++count;
        lo = std::min(lo, l);
    }
    std::size_t best = 0;
    for (const auto& [bin, cl] : bins)
        if (cl.first > best) {
            best = cl.first;
            g.left_margin = cl.second;
        }
    std::sort(rights.begin(), rights.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(rights.size())));
    g.right_margin = rights[std::max<std::size_t>(rank, 1) - 1];
    g.char_width = chars > 0 ? width_sum / chars : 0.0;
    return g;
}

struct MergeOptions {
    double right_tolerance = 1.5;   // in mean character widths
    double indent_tolerance = 1.0;  // in mean character widths
    bool disjunctive = false;       // merge when either cue holds
};

/// Page-boundary rule: the previous paragraph's last line reaches the right
/// margin, the next paragraph's first line is not indented, both are body.
inline bool should_merge(const ParagraphRecord& prev, const PageGeometry& prev_page, const ParagraphRecord& next,
                         const PageGeometry& next_page, const MergeOptions& options = {}) {
    if (prev.cls.kind != ParagraphKind::Body || next.cls.kind != ParagraphKind::Body) return false;
    if (!prev_page.has_body || !next_page.has_body || prev.lines.empty() || next.lines.empty()) return false;
    const bool full_last_line =
        prev.lines.back().right >= prev_page.right_margin - options.right_tolerance * prev_page.char_width;
    const bool flush_first_line =
        next.lines.front().left - next_page.left_margin <= options.indent_tolerance * next_page.char_width;
    return options.disjunctive ? (full_last_line || flush_first_line) : (full_last_line && flush_first_line);
}

inline ParagraphRecord merge_records(const ParagraphRecord& a, const ParagraphRecord& b) {
    ParagraphRecord out = a;
    out.last_page = b.last_page;
    out.lines.insert(out.lines.end(), b.lines.begin(), b.lines.end());
    out.text = a.text.empty() ? b.text : (b.text.empty() ? a.text : a.text + " " + b.text);
    out.stats = compute_stats(out.lines);
    return out;
}

struct MergeResult {
    std::vector<ParagraphRecord> paragraphs;
    std::vector<std::string> warnings;
    std::size_t merges = 0;
};

/// Joins the last paragraph of each page with the first of the next when
/// should_merge holds. One boundary is decided at a time, left to right, so
/// a paragraph may chain across several pages. Pages without body
/// paragraphs are never merged across and produce a warning.
inline MergeResult merge_cross_page(const std::vector<std::vector<ParagraphRecord>>& pages,
                                    const MergeOptions& options = {}) {
    MergeResult out;
    PageGeometry prev_geometry;
    bool prev_usable = false;
    for (std::size_t p = 0; p < pages.size(); ++p) {
        const auto& page = pages[p];
        const PageGeometry geometry = page_geometry(page);
        if (!geometry.has_body)
            out.warnings.push_back("page " + std::to_string(p + 1) + " has no body paragraphs; not merged across");
        std::size_t start = 0;
        if (prev_usable && geometry.has_body && !page.empty() && !out.paragraphs.empty() &&
            should_merge(out.paragraphs.back(), prev_geometry, page.front(), geometry, options)) {
            out.paragraphs.back() = merge_records(out.paragraphs.back(), page.front());
            ++out.merges;
            start = 1;
        }
        for (std::size_t i = start; i < page.size(); ++i) out.paragraphs.push_back(page[i]);
        prev_geometry = geometry;
        prev_usable = geometry.has_body && !page.empty();
    }
    return out;
}

struct SegmentOptions {
    ClassifyOptions classify;
    MergeOptions merge;
};

/// Classifies all paragraphs of a document together, then merges across
/// page boundaries.
inline MergeResult segment_pages(std::vector<std::vector<ParagraphRecord>> pages, const SegmentOptions& options = {}) {
    std::vector<ParagraphRecord> flat;
    for (const auto& page : pages) flat.insert(flat.end(), page.begin(), page.end());
    if (flat.empty()) return {};
    const auto classes = classify_paragraphs(flat, options.classify);
    std::size_t k = 0;
    for (auto& page : pages)
        for (auto& p : page) p.cls = classes[k++];
    return merge_cross_page(pages, options.merge);
}

struct BowMatch {
    std::size_t index = 0;
    double distance = 1.0;
};

inline std::unordered_map<std::string, double> bag_of_words(std::string_view s) {
    std::unordered_map<std::string, double> counts;
    for (auto& t : text::word_tokens(s)) counts[t] += 1.0;
    return counts;
}

/// 1 - cosine similarity of token count vectors.
inline double bow_distance(const std::unordered_map<std::string, double>& a,
                           const std::unordered_map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, c] : a) {
        na += c * c;
        if (const auto it = b.find(t); it != b.end()) dot += c * it->second;
    }
    for (const auto& [t, c] : b) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 1.0);
}

/// Paragraph closest to the quote by bag-of-words distance; ties go to
/// the lowest index.
inline BowMatch bow_match(std::string_view quote, std::span<const std::string> paragraphs) {
    if (paragraphs.empty()) throw Error(ErrorCode::InvalidArgument, "no paragraphs to match against");
    const auto q = bag_of_words(quote);
    if (q.empty()) throw Error(ErrorCode::InvalidArgument, "quote has no word tokens");
    BowMatch best{0, 2.0};
    for (std::size_t i = 0; i < paragraphs.size(); ++i) {
        const double d = bow_distance(q, bag_of_words(paragraphs[i]));
        if (d < best.distance) best = {i, d};
    }
    return best;
}

}  // namespace labelcal::segmentation
