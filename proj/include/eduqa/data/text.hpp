// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <functional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "eduqa/errors.hpp"
#include "eduqa/eval/normalize.hpp"

namespace eduqa::data {

/// NFC, control and format characters removed, every whitespace run
/// collapsed to one space, ends trimmed. Idempotent.
inline std::string clean_text(std::string_view raw) {
    const icu::UnicodeString u = text::nfc(text::from_utf8(raw));
    icu::UnicodeString out;
    bool pending_space = false;
    for (std::int32_t i = 0; i < u.length();) {
        const UChar32 c = u.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            pending_space = !out.isEmpty();
            continue;
        }
        const auto cat = u_charType(c);
        if (cat == U_CONTROL_CHAR || cat == U_FORMAT_CHAR) continue;
        if (pending_space) out.append(UChar32{' '});
        pending_space = false;
        out.append(c);
    }
    return text::to_utf8(text::nfc(out));
}

/// clean_text applied to each line; line breaks are kept.
inline std::string clean_text_lines(std::string_view raw) {
    std::string out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        std::size_t end = raw.find('\n', start);
        if (end == std::string_view::npos) end = raw.size();
        if (start > 0) out.push_back('\n');
        out += clean_text(raw.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

inline bool is_article_heading(std::string_view paragraph) {
    static const std::regex heading("^Điều [0-9]+\\.");
    return std::regex_search(paragraph.begin(), paragraph.end(), heading);
}

namespace detail {

inline std::size_t cp_len(const std::string& s) { return text::code_points(s); }

/// Splits one over-long paragraph into pieces of at most max code points,
/// breaking at the last space that fits, or mid-word when there is none.
inline std::vector<std::string> hard_split(const std::string& para, std::size_t max) {
    std::vector<std::string> out;
    icu::UnicodeString rest = text::from_utf8(para);
    while (static_cast<std::size_t>(rest.countChar32()) > max) {
        const std::int32_t cut = rest.moveIndex32(0, static_cast<std::int32_t>(max));
        std::int32_t space = -1;
        for (std::int32_t i = cut; i > 0; --i)
            if (rest.charAt(i) == u' ') {
                space = i;
                break;
            }
        if (space > 0) {
            icu::UnicodeString head;
            rest.extract(0, space, head);
            out.push_back(text::to_utf8(head));
            rest.remove(0, space + 1);
        } else {
            icu::UnicodeString head;
            rest.extract(0, cut, head);
            out.push_back(text::to_utf8(head));
            rest.remove(0, cut);
        }
    }
    if (!rest.isEmpty()) out.push_back(text::to_utf8(rest));
    return out;
}

}  // namespace detail

/// Splits a regulation document into contexts.
///
/// Lines are paragraphs. A paragraph starting "Điều <n>." opens a new
/// article; text before the first heading forms its own segment. Articles
/// longer than max_chars code points are packed greedily at paragraph
/// boundaries, and a single paragraph that is still too long is split at
/// spaces. Joining the result with single spaces gives clean_text(document)
/// unless a run of max_chars characters had no space to break at.
inline std::vector<std::string> segment(std::string_view document, std::size_t max_chars) {
    if (max_chars < 200) throw ConfigError("segment: max_chars must be >= 200");
    std::vector<std::vector<std::string>> articles;
    std::size_t start = 0;
    while (start <= document.size()) {
        std::size_t end = document.find_first_of("\n\r\f\v", start);
        if (end == std::string_view::npos) end = document.size();
        auto para = clean_text(document.substr(start, end - start));
        start = end + 1;
        if (para.empty()) continue;
        if (articles.empty() || is_article_heading(para)) articles.emplace_back();
        articles.back().push_back(std::move(para));
    }

    std::vector<std::string> out;
    for (const auto& paras : articles) {
        std::string current;
        std::size_t current_len = 0;
        auto flush = [&] {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
            current_len = 0;
        };
        for (const auto& p : paras) {
            const std::size_t len = detail::cp_len(p);
            if (current_len > 0 && current_len + 1 + len <= max_chars) {
                current += " " + p;
                current_len += 1 + len;
                continue;
            }
            flush();
            if (len <= max_chars) {
                current = p;
                current_len = len;
            } else {
                for (auto& piece : detail::hard_split(p, max_chars)) out.push_back(std::move(piece));
            }
        }
        flush();
    }
    return out;
}

// --- formula markup ----------------------------------------------------------

namespace detail {

inline std::string rewrite_math(std::string s) {
    static const std::regex frac("([A-Za-z0-9.]+)\\s*/\\s*([A-Za-z0-9.]+)");
    static const std::regex power("\\^([A-Za-z0-9]+)");
    s = std::regex_replace(s, frac, "\\frac{$1}{$2}");
    s = std::regex_replace(s, power, "^{$1}");
    static const std::pair<std::string_view, std::string_view> symbols[] = {
        {"×", "\\times"}, {"÷", "\\div"}, {"≤", "\\leq"}, {"≥", "\\geq"}, {"≠", "\\neq"}};
    for (const auto& [sym, cmd] : symbols) {
        std::string out;
        std::size_t pos = 0;
        for (std::size_t hit; (hit = s.find(sym, pos)) != std::string::npos; pos = hit + sym.size()) {
            out.append(s, pos, hit - pos);
            out += cmd;
            const std::size_t next = hit + sym.size();
            if (next < s.size() && std::isalnum(static_cast<unsigned char>(s[next]))) out.push_back(' ');
        }
        out.append(s, pos);
        s = std::move(out);
    }
    return s;
}

}  // namespace detail

/// Rewrites <math>...</math> spans into $...$ KaTeX markup:
///
///     a/b -> \frac{a}{b}     x^n -> x^{n}
///     ×   -> \times          ÷   -> \div
///     ≤   -> \leq            ≥   -> \geq       ≠ -> \neq
///
/// Operands are runs of ASCII letters, digits and dots. Text outside the
/// markers, including existing $...$ markup, is left alone, so applying the
/// function twice changes nothing.
inline std::string normalize_formula(std::string_view input) {
    static constexpr std::string_view open = "<math>", close = "</math>";
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t a = input.find(open, pos);
        if (a == std::string_view::npos) break;
        const std::size_t b = input.find(close, a + open.size());
        if (b == std::string_view::npos) break;
        out.append(input.substr(pos, a - pos));
        const std::string inner = clean_text(input.substr(a + open.size(), b - a - open.size()));
        out += "$" + detail::rewrite_math(inner) + "$";
        pos = b + close.size();
    }
    out.append(input.substr(pos));
    return out;
}

// --- preprocessing -------------------------------------------------------------

/// Spell-correction hook applied to each segment. The default leaves text
/// unchanged.
using SpellChecker = std::function<std::string(std::string_view)>;

inline std::string no_spellcheck(std::string_view s) { return std::string(s); }

/// Formula markup, segmentation, then the spell-check pass.
inline std::vector<std::string> preprocess(std::string_view document, std::size_t max_chars,
                                           const SpellChecker& spell = no_spellcheck) {
    auto segments = segment(normalize_formula(document), max_chars);
    for (auto& s : segments) s = clean_text(spell(s));
    std::erase_if(segments, [](const std::string& s) { return s.empty(); });
    return segments;
}

}  // namespace eduqa::data
