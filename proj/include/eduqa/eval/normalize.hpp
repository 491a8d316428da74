// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "eduqa/errors.hpp"

namespace eduqa::text {

inline icu::UnicodeString from_utf8(std::string_view s) {
    return icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<std::int32_t>(s.size())));
}

inline std::string to_utf8(const icu::UnicodeString& u) {
    std::string out;
    u.toUTF8String(out);
    return out;
}

inline icu::UnicodeString nfc(const icu::UnicodeString& u) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(std::string("ICU NFC unavailable: ") + u_errorName(status));
    icu::UnicodeString out = n->normalize(u, status);
    if (U_FAILURE(status)) throw Error(std::string("ICU NFC failed: ") + u_errorName(status));
    return out;
}

/// Canonical composition; invalid UTF-8 bytes become U+FFFD.
inline std::string nfc(std::string_view s) { return to_utf8(nfc(from_utf8(s))); }

/// Number of Unicode code points in a UTF-8 string.
inline std::size_t code_points(std::string_view s) {
    const auto u = from_utf8(s);
    return static_cast<std::size_t>(u.countChar32());
}

inline bool is_punctuation(UChar32 c) {
    return u_ispunct(c) || (c < 0x80 && std::string_view("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~").find(static_cast<char>(c)) !=
                                            std::string_view::npos);
}

/// NFC, lowercase, punctuation removed, split on Unicode whitespace.
inline std::vector<std::string> normalize(std::string_view s) {
    icu::UnicodeString u = nfc(from_utf8(s));
    u.toLower(icu::Locale::getRoot());
    u = nfc(u);
    std::vector<std::string> tokens;
    icu::UnicodeString current;
    for (std::int32_t i = 0; i < u.length();) {
        const UChar32 c = u.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            if (!current.isEmpty()) tokens.push_back(to_utf8(current));
            current.remove();
        } else if (!is_punctuation(c)) {
            current.append(c);
        }
    }
    if (!current.isEmpty()) tokens.push_back(to_utf8(current));
    return tokens;
}

inline std::string normalize_joined(std::string_view s) {
    std::string out;
    for (const auto& t : normalize(s)) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

}  // namespace eduqa::text
