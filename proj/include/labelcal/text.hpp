#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "labelcal/error.hpp"

namespace labelcal::text {

/// Unicode NFC of a UTF-8 string.
inline std::string nfc(std::string_view utf8) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorCode::Io, "ICU NFC normalizer unavailable");
    const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
        icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    icu::UnicodeString out = normalizer->normalize(src, status);
    if (U_FAILURE(status)) throw Error(ErrorCode::Parse, "text is not valid for NFC normalization");
    std::string result;
    out.toUTF8String(result);
    return result;
}

/// Full Unicode case folding followed by NFC.
inline std::string casefold(std::string_view utf8) {
    icu::UnicodeString s = icu::UnicodeString::fromUTF8(
        icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    s.foldCase();
    std::string folded;
    s.toUTF8String(folded);
    return nfc(folded);
}

inline std::string normalize(std::string_view utf8, bool fold_case) {
    return fold_case ? casefold(utf8) : nfc(utf8);
}

inline std::size_t code_points(std::string_view utf8) {
    std::size_t count = 0;
    int32_t i = 0;
    const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
    const auto len = static_cast<int32_t>(utf8.size());
    while (i < len) {
        UChar32 c;
        U8_NEXT(s, i, len, c);
        ++count;
    }
    return count;
}

/// Lowercased maximal alphanumeric runs (Unicode letters and digits).
inline std::vector<std::string> word_tokens(std::string_view utf8) {
    const std::string normalized = nfc(utf8);
    std::vector<std::string> tokens;
    std::string current;
    int32_t i = 0;
    const auto* s = reinterpret_cast<const uint8_t*>(normalized.data());
    const auto len = static_cast<int32_t>(normalized.size());
    while (i < len) {
        UChar32 c;
        U8_NEXT(s, i, len, c);
        if (c >= 0 && u_isalnum(c)) {
            const UChar32 lower = u_tolower(c);
            char buf[U8_MAX_LENGTH];
            int32_t n = 0;
            U8_APPEND_UNSAFE(reinterpret_cast<uint8_t*>(buf), n, lower);
            current.append(buf, static_cast<std::size_t>(n));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace labelcal::text
