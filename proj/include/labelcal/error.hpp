#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace labelcal {

enum class ErrorCode {
    Parse,           // malformed number or field
    Range,           // value outside its allowed interval
    Shape,           // ragged rows, mismatched dimensions
    DuplicateLabel,  // repeated or empty label name
    MissingColumn,
    InvalidArgument,
    Undefined,       // metric undefined for the given data
    Disconnected,    // layout distance graph has infinite entries
    Io,
    Trainable,       // failure raised from a user trainable
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Parse: return "parse error";
        case ErrorCode::Range: return "range error";
        case ErrorCode::Shape: return "shape error";
        case ErrorCode::DuplicateLabel: return "duplicate label";
        case ErrorCode::MissingColumn: return "missing column";
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::Undefined: return "undefined";
        case ErrorCode::Disconnected: return "disconnected";
        case ErrorCode::Io: return "io error";
        case ErrorCode::Trainable: return "trainable failure";
    }
    return "error";
}

/// Data error raised by every labelcal operation. Carries an optional
/// 1-based data row and column name when the failure is tied to a cell.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message,
          std::optional<std::size_t> row = std::nullopt,
          std::optional<std::string> column = std::nullopt)
        : std::runtime_error(format(code, message, row, column)),
          code_(code), row_(row), column_(std::move(column)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::optional<std::size_t>& row() const noexcept { return row_; }
    const std::optional<std::string>& column() const noexcept { return column_; }

private:
    static std::string format(ErrorCode code, const std::string& message,
                              const std::optional<std::size_t>& row,
                              const std::optional<std::string>& column) {
        std::string out = to_string(code);
        if (row) out += " at row " + std::to_string(*row);
        if (column) out += ", column \"" + *column + "\"";
        out += ": " + message;
        return out;
    }

    ErrorCode code_;
    std::optional<std::size_t> row_;
    std::optional<std::string> column_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

}  // namespace labelcal
