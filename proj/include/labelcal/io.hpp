#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelcal/core.hpp"
#include "labelcal/error.hpp"

namespace labelcal::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

/// Lines without terminators; trailing blank lines dropped.
inline std::vector<std::string_view> lines(std::string_view content) {
    auto out = split(content, '\n');
    for (auto& l : out)
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    while (!out.empty() && trim(out.back()).empty()) out.pop_back();
    return out;
}

/// Strict, locale-independent double parse of the whole field.
inline bool parse_double(std::string_view field, double& out) {
    field = trim(field);
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw Error(ErrorCode::MissingColumn, "no column named \"" + std::string(name) + "\"");
    }
    bool has_column(std::string_view name) const {
        return std::find(header.begin(), header.end(), name) != header.end();
    }
};

/// Comma-separated table with a header row; rows must have the header's width.
inline CsvTable parse_csv(std::string_view content) {
    const auto ls = lines(content);
    if (ls.empty()) throw Error(ErrorCode::Parse, "missing header row");
    CsvTable table;
    for (auto f : split(ls[0], ',')) table.header.emplace_back(trim(f));
    for (std::size_t r = 1; r < ls.size(); ++r) {
        auto fields = split(ls[r], ',');
        if (fields.size() != table.header.size())
            throw Error(ErrorCode::Shape,
                        "expected " + std::to_string(table.header.size()) + " fields, found " +
                            std::to_string(fields.size()),
                        r);
        auto& row = table.rows.emplace_back();
        for (auto f : fields) row.emplace_back(trim(f));
    }
    return table;
}

inline ProbMatrix parse_prob_matrix(std::string_view content) {
    const CsvTable table = parse_csv(content);
    detail::validate_label_names(table.header);
    const std::size_t L = table.header.size();
    std::vector<double> values;
    values.reserve(table.rows.size() * L);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < L; ++c) {
            double v = 0.0;
            if (!parse_double(table.rows[r][c], v))
                throw Error(ErrorCode::Parse, "malformed number \"" + table.rows[r][c] + "\"", r + 1,
                            table.header[c]);
            if (v < -kProbabilityClampTolerance || v > 1.0 + kProbabilityClampTolerance)
                throw Error(ErrorCode::Range, "probability " + table.rows[r][c] + " outside [0, 1]", r + 1,
                            table.header[c]);
            values.push_back(std::clamp(v, 0.0, 1.0));
        }
    }
    return ProbMatrix(table.header, table.rows.size(), std::move(values));
}

inline ProbMatrix load_prob_matrix(const std::filesystem::path& path) {
    return parse_prob_matrix(read_file(path));
}

inline std::string format_prob_matrix(const ProbMatrix& m) {
    std::string out;
    for (std::size_t l = 0; l < m.cols(); ++l) {
        if (l) out += ',';
        out += m.labels()[l];
    }
    out += '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t l = 0; l < m.cols(); ++l) {
            if (l) out += ',';
            out += format_double(m(i, l));
        }
        out += '\n';
    }
    return out;
}

inline void save_prob_matrix(const std::filesystem::path& path, const ProbMatrix& m) {
    write_file(path, format_prob_matrix(m));
}

/// Same layout as probability files, entries exactly 0 or 1.
inline LabelMatrix parse_label_matrix(std::string_view content, LabelKind kind = LabelKind::Multilabel) {
    const CsvTable table = parse_csv(content);
    detail::validate_label_names(table.header);
    const std::size_t L = table.header.size();
    std::vector<std::uint8_t> values;
    values.reserve(table.rows.size() * L);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < L; ++c) {
            double v = 0.0;
            if (!parse_double(table.rows[r][c], v))
                throw Error(ErrorCode::Parse, "malformed number \"" + table.rows[r][c] + "\"", r + 1,
                            table.header[c]);
            if (v != 0.0 && v != 1.0)
                throw Error(ErrorCode::Range, "label entry must be 0 or 1", r + 1, table.header[c]);
            values.push_back(static_cast<std::uint8_t>(v));
        }
    }
    return LabelMatrix(table.header, table.rows.size(), std::move(values), kind);
}

inline LabelMatrix load_label_matrix(const std::filesystem::path& path, LabelKind kind = LabelKind::Multilabel) {
    return parse_label_matrix(read_file(path), kind);
}

/// Numeric column of a CSV table.
inline std::vector<double> numeric_column(const CsvTable& table, std::string_view name) {
    const std::size_t c = table.column(name);
    std::vector<double> out(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        if (!parse_double(table.rows[r][c], out[r]))
            throw Error(ErrorCode::Parse, "malformed number \"" + table.rows[r][c] + "\"", r + 1,
                        std::string(name));
    return out;
}

struct TextRecord {
    std::string id;
    std::string text;
};

/// JSON-lines with fields id (string or number) and text.
inline std::vector<TextRecord> parse_text_records(std::string_view content) {
    std::vector<TextRecord> out;
    const auto ls = lines(content);
    for (std::size_t r = 0; r < ls.size(); ++r) {
        if (trim(ls[r]).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(ls[r]);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Parse, e.what(), r + 1);
        }
        if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
            throw Error(ErrorCode::MissingColumn, "record needs a string field \"text\"", r + 1, "text");
        TextRecord rec;
        if (!j.contains("id")) throw Error(ErrorCode::MissingColumn, "record needs a field \"id\"", r + 1, "id");
        rec.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        rec.text = j["text"].get<std::string>();
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<TextRecord> load_text_records(const std::filesystem::path& path) {
    return parse_text_records(read_file(path));
}

}  // namespace labelcal::io
