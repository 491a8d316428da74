// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eduqa/data/types.hpp"
#include "eduqa/eval/metrics.hpp"

namespace eduqa::data {

// --- quality scoring ---------------------------------------------------------

/// Lower-inclusive rouge_l_f1 cut-offs for VeryGood, Good, Medium, Bad.
/// Calibration knobs, not measured values.
struct QualityThresholds {
    double very_good = 0.9;
    double good = 0.75;
    double medium = 0.5;
    double bad = 0.25;
};

inline QualityLevel level_for(double rouge_l_f1, const QualityThresholds& t = {}) {
    if (rouge_l_f1 >= t.very_good) return QualityLevel::VeryGood;
    if (rouge_l_f1 >= t.good) return QualityLevel::Good;
    if (rouge_l_f1 >= t.medium) return QualityLevel::Medium;
    if (rouge_l_f1 >= t.bad) return QualityLevel::Bad;
    return QualityLevel::VeryBad;
}

struct QualityScore {
    double rouge_l_f1 = 0;
    double bleu = 0;
    QualityLevel provisional = QualityLevel::VeryBad;
};

/// Scores the answer against a reference span, normally the source context.
inline QualityScore score_quality(const QaExample& ex, std::string_view reference, const QualityThresholds& t = {}) {
    if (reference.empty()) throw ContractError("score_quality: reference must be non-empty");
    QualityScore s;
    s.rouge_l_f1 = eval::rouge_l(ex.answer, reference).f1;
    s.bleu = eval::bleu(ex.answer, {std::string(reference)});
    s.provisional = level_for(s.rouge_l_f1, t);
    return s;
}

/// Fills in provisional labels against each example's own context. An
/// existing label is kept when the example came from a human.
inline void label_corpus(std::vector<QaExample>& corpus, const QualityThresholds& t = {}) {
    for (auto& ex : corpus) {
        if (ex.quality && ex.provenance != Provenance::generated) continue;
        ex.quality = score_quality(ex, ex.context, t).provisional;
    }
}

// --- statistics --------------------------------------------------------------

struct FieldStats {
    std::size_t count = 0;
    double mean = 0, std = 0, min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

struct CorpusStats {
    FieldStats context, question, answer;
};

/// Linear interpolation between order statistics at rank p·(n−1).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline FieldStats field_stats(std::vector<double> v) {
    if (v.empty()) throw ContractError("statistics of an empty sample");
    std::sort(v.begin(), v.end());
    FieldStats s;
    s.count = v.size();
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    s.min = v.front();
    s.max = v.back();
    s.q25 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.q75 = quantile_sorted(v, 0.75);
    return s;
}

/// Code-point length statistics for each field.
inline CorpusStats compute_stats(const std::vector<QaExample>& corpus) {
    if (corpus.empty()) throw ContractError("compute_stats: corpus is empty");
    std::vector<double> c, q, a;
    for (const auto& ex : corpus) {
        c.push_back(static_cast<double>(text::code_points(ex.context)));
        q.push_back(static_cast<double>(text::code_points(ex.question)));
        a.push_back(static_cast<double>(text::code_points(ex.answer)));
    }
    return {field_stats(std::move(c)), field_stats(std::move(q)), field_stats(std::move(a))};
}

inline std::string format_stats(const CorpusStats& s) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s\n", "", "Context", "Question", "Answer");
    out << buf;
    auto row = [&](const char* name, double FieldStats::*m) {
        std::snprintf(buf, sizeof buf, "%-8s %10.2f %10.2f %10.2f\n", name, s.context.*m, s.question.*m, s.answer.*m);
        out << buf;
    };
    std::snprintf(buf, sizeof buf, "%-8s %10zu %10zu %10zu\n", "count", s.context.count, s.question.count, s.answer.count);
    out << buf;
    row("mean", &FieldStats::mean);
    row("std", &FieldStats::std);
    row("min", &FieldStats::min);
    row("25%", &FieldStats::q25);
    row("50%", &FieldStats::median);
    row("75%", &FieldStats::q75);
    row("max", &FieldStats::max);
    return out.str();
}

inline nlohmann::json to_json(const FieldStats& f) {
    return {{"count", f.count}, {"mean", f.mean}, {"std", f.std},   {"min", f.min},
            {"q25", f.q25},     {"median", f.median}, {"q75", f.q75}, {"max", f.max}};
}

inline nlohmann::json to_json(const CorpusStats& s) {
    return {{"context", to_json(s.context)}, {"question", to_json(s.question)}, {"answer", to_json(s.answer)}};
}

// --- quality report ----------------------------------------------------------

struct QualityReport {
    std::size_t total = 0;
    std::array<std::size_t, 5> counts{};      // in kQualityLevels order
    std::array<double, 5> percentages{};      // rounded to 2 decimals
};

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

inline QualityReport quality_report(const std::vector<QaExample>& corpus) {
    std::vector<std::string> unlabeled;
    QualityReport r;
    for (const auto& ex : corpus) {
        if (!ex.quality) {
            unlabeled.push_back(ex.id);
            continue;
        }
        ++r.counts[static_cast<std::size_t>(*ex.quality)];
    }
    if (!unlabeled.empty()) {
        std::string ids;
        for (const auto& id : unlabeled) ids += (ids.empty() ? "" : ", ") + id;
        throw InputError("quality_report: unlabeled examples: " + ids);
    }
    r.total = corpus.size();
    for (std::size_t i = 0; i < 5 && r.total > 0; ++i)
        r.percentages[i] = round2(100.0 * static_cast<double>(r.counts[i]) / static_cast<double>(r.total));
    return r;
}

inline std::string format_quality_report(const QualityReport& r) {
    std::ostringstream out;
    char buf[120];
    for (std::size_t i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof buf, "%-10s %8zu %8.2f%%\n", to_string(kQualityLevels[i]).c_str(), r.counts[i], r.percentages[i]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-10s %8zu\n", "total", r.total);
    out << buf;
    return out.str();
}

}  // namespace eduqa::data
