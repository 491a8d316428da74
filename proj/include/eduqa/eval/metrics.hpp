// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/data/types.hpp"
#include "eduqa/eval/normalize.hpp"

namespace eduqa::eval {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// 1 when the normalized prediction equals some normalized gold. An empty
/// gold marks a negative question, which only an empty prediction matches.
inline int exact_match(std::string_view pred, const std::vector<std::string>& golds) {
    const auto p = text::normalize_joined(pred);
    for (const auto& g : golds)
        if (text::normalize_joined(g) == p) return 1;
    return 0;
}

inline int exact_match(std::string_view pred, std::string_view gold) {
    return exact_match(pred, std::vector<std::string>{std::string(gold)});
}

/// Token overlap counted as a multiset intersection. Two empty sides score
/// (1, 1, 1); exactly one empty side scores (0, 0, 0).
inline Prf token_f1(std::string_view pred, std::string_view gold) {
    const auto p = text::normalize(pred);
    const auto g = text::normalize(gold);
    if (p.empty() && g.empty()) return {1.0, 1.0, 1.0};
    if (p.empty() || g.empty()) return {};
    std::map<std::string, std::size_t> counts;
    for (const auto& t : g) ++counts[t];
    std::size_t matched = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++matched;
        }
    }
    Prf r;
    r.precision = static_cast<double>(matched) / static_cast<double>(p.size());
    r.recall = static_cast<double>(matched) / static_cast<double>(g.size());
    r.f1 = harmonic(r.precision, r.recall);
    return r;
}

// --- n-gram metrics ----------------------------------------------------------

using Tokens = std::vector<std::string>;

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<Tokens, std::size_t> out;
    if (n == 0 || t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

inline constexpr double kBleuEpsilon = 1e-9;

/// Sentence BLEU over normalized tokens: clipped n-gram precisions for
/// orders 1..max_n, geometric mean, brevity penalty against the reference
/// whose length is closest (shorter on ties). A zero match count becomes
/// kBleuEpsilon; orders for which the candidate has no n-grams at all are
/// left out of the mean.
inline double bleu_tokens(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t max_n = 4) {
    if (max_n < 1) throw ConfigError("bleu: max_n must be >= 1");
    if (cand.empty() || refs.empty()) return 0.0;
    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto c = ngram_counts(cand, n);
        if (c.empty()) continue;
        std::map<Tokens, std::size_t> max_ref;
        for (const auto& r : refs)
            for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
        std::size_t clipped = 0, total = 0;
        for (const auto& [g, k] : c) {
            total += k;
            auto it = max_ref.find(g);
            clipped += std::min(k, it == max_ref.end() ? std::size_t{0} : it->second);
        }
        const double p = clipped == 0 ? kBleuEpsilon / static_cast<double>(total)
                                       : static_cast<double>(clipped) / static_cast<double>(total);
        log_sum += std::log(p);
        ++orders;
    }
    const double c = static_cast<double>(cand.size());
    double r = static_cast<double>(refs.front().size());
    for (const auto& ref : refs) {
        const double len = static_cast<double>(ref.size());
        if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

inline double bleu(std::string_view candidate, const std::vector<std::string>& references, std::size_t max_n = 4) {
    std::vector<Tokens> refs;
    for (const auto& r : references) refs.push_back(text::normalize(r));
    return bleu_tokens(text::normalize(candidate), refs, max_n);
}

inline Prf rouge_n_tokens(const Tokens& cand, const Tokens& ref, std::size_t n) {
    if (n < 1) throw ConfigError("rouge_n: n must be >= 1");
    const auto c = ngram_counts(cand, n);
    const auto r = ngram_counts(ref, n);
    std::size_t overlap = 0, nc = 0, nr = 0;
    for (const auto& [g, k] : c) {
        nc += k;
        auto it = r.find(g);
        if (it != r.end()) overlap += std::min(k, it->second);
    }
    for (const auto& [_, k] : r) nr += k;
    Prf out;
    if (nc > 0) out.precision = static_cast<double>(overlap) / static_cast<double>(nc);
    if (nr > 0) out.recall = static_cast<double>(overlap) / static_cast<double>(nr);
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

inline Prf rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
    return rouge_n_tokens(text::normalize(candidate), text::normalize(reference), n);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline Prf rouge_l_tokens(const Tokens& cand, const Tokens& ref) {
    const auto l = static_cast<double>(lcs_length(cand, ref));
    Prf out;
    if (!cand.empty()) out.precision = l / static_cast<double>(cand.size());
    if (!ref.empty()) out.recall = l / static_cast<double>(ref.size());
    out.f1 = harmonic(out.precision, out.recall);
    return out;
}

inline Prf rouge_l(std::string_view candidate, std::string_view reference) {
    return rouge_l_tokens(text::normalize(candidate), text::normalize(reference));
}

// --- corpus scoring ----------------------------------------------------------

struct ExampleScore {
    std::string id;
    int em = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double exact = 0.0;  // percent
    double f1 = 0.0;     // percent
    std::size_t n = 0;
    std::vector<ExampleScore> per_example;
};

using Prediction = std::pair<std::string, std::string>;  // (id, text)

/// Scores every gold id once. Several gold rows sharing an id are
/// alternative answers: EM takes the best, F1 the triple with the highest
/// F1. A gold id without a prediction is scored against the empty string.
inline MetricReport score_corpus(const std::vector<Prediction>& predictions, const std::vector<data::QaExample>& gold) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> answers;
    for (const auto& g : gold) {
        auto [it, fresh] = answers.try_emplace(g.id);
        if (fresh) order.push_back(g.id);
        it->second.push_back(g.answer);
    }
    std::map<std::string, std::string> pred;
    for (const auto& [id, text] : predictions) {
        if (!answers.count(id)) throw InputError("prediction for unknown id '" + id + "'");
        if (!pred.emplace(id, text).second) throw InputError("duplicate prediction id '" + id + "'");
    }
    MetricReport rep;
    rep.n = order.size();
    for (const auto& id : order) {
        const auto it = pred.find(id);
        const std::string p = it == pred.end() ? std::string() : it->second;
        ExampleScore s;
        s.id = id;
        s.em = exact_match(p, answers[id]);
        bool first = true;
        for (const auto& a : answers[id]) {
            const auto prf = token_f1(p, a);
            if (first || prf.f1 > s.f1) {
                first = false;
                s.precision = prf.precision;
                s.recall = prf.recall;
                s.f1 = prf.f1;
            }
        }
        rep.exact += s.em;
        rep.f1 += s.f1;
        rep.per_example.push_back(std::move(s));
    }
    if (rep.n > 0) {
        rep.exact = 100.0 * rep.exact / static_cast<double>(rep.n);
        rep.f1 = 100.0 * rep.f1 / static_cast<double>(rep.n);
    }
    return rep;
}

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j{{"exact", r.exact}, {"f1", r.f1}, {"n", r.n}, {"per_example", nlohmann::json::array()}};
    for (const auto& s : r.per_example) {
        j["per_example"].push_back(
            {{"id", s.id}, {"em", s.em}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
    }
    return j;
}

inline std::string format_table(const MetricReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %10s %10s\n%-10zu %10.2f %10.2f\n", "Examples", "Exact", "F1-score", r.n,
                  r.exact, r.f1);
    return buf;
}

/// Line-delimited {"id": ..., "prediction": ...} records; blank lines skipped.
inline std::vector<Prediction> parse_predictions(std::string_view jsonl) {
    std::vector<Prediction> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("predictions line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("prediction") ||
            !j["prediction"].is_string()) {
            throw ParseError("predictions line " + std::to_string(lineno) + ": need string fields id and prediction");
        }
        out.emplace_back(j["id"].get<std::string>(), j["prediction"].get<std::string>());
    }
    return out;
}

}  // namespace eduqa::eval
