// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eduqa/errors.hpp"

namespace eduqa::model {

class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::int64_t> encode(std::string_view text) const = 0;
    virtual std::string decode(const std::vector<std::int64_t>& ids) const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::int64_t bos() const = 0;
    virtual std::int64_t eos() const = 0;
    virtual std::int64_t pad() const = 0;
};

/// UTF-8 bytes map to ids 0..255; three specials follow. Vietnamese
/// diacritics need no vocabulary file.
class ByteTokenizer final : public Tokenizer {
  public:
    static constexpr std::int64_t kBos = 256;
    static constexpr std::int64_t kEos = 257;
    static constexpr std::int64_t kPad = 258;
    static constexpr std::size_t kVocabSize = 259;

    std::vector<std::int64_t> encode(std::string_view text) const override {
        std::vector<std::int64_t> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(c);
        return ids;
    }

    /// Specials are dropped; invalid byte sequences pass through unchanged.
    std::string decode(const std::vector<std::int64_t>& ids) const override {
        std::string out;
        for (auto id : ids)
            if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
        return out;
    }

    std::size_t vocab_size() const override { return kVocabSize; }
    std::int64_t bos() const override { return kBos; }
    std::int64_t eos() const override { return kEos; }
    std::int64_t pad() const override { return kPad; }
};

/// Whitespace-split word vocabulary built from a fixed text sample. Ids 0-3
/// are <pad>, <bos>, <eos>, <unk>.
class WhitespaceTokenizer final : public Tokenizer {
  public:
    explicit WhitespaceTokenizer(const std::vector<std::string>& sample) {
        for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) intern(s);
        for (const auto& text : sample) {
            std::istringstream is(text);
            std::string word;
            while (is >> word) intern(word);
        }
    }

    std::vector<std::int64_t> encode(std::string_view text) const override {
        std::vector<std::int64_t> ids;
        std::istringstream is{std::string(text)};
        std::string word;
        while (is >> word) {
            auto it = ids_.find(word);
            ids.push_back(it == ids_.end() ? kUnk : it->second);
        }
        return ids;
    }

    std::string decode(const std::vector<std::int64_t>& ids) const override {
        std::string out;
        for (auto id : ids) {
            if (id < 4 || static_cast<std::size_t>(id) >= words_.size()) continue;
            if (!out.empty()) out.push_back(' ');
            out += words_[static_cast<std::size_t>(id)];
        }
        return out;
    }

    std::size_t vocab_size() const override { return words_.size(); }
    std::int64_t bos() const override { return 1; }
    std::int64_t eos() const override { return 2; }
    std::int64_t pad() const override { return 0; }

  private:
    static constexpr std::int64_t kUnk = 3;

    void intern(const std::string& w) {
        if (ids_.count(w)) return;
        ids_[w] = static_cast<std::int64_t>(words_.size());
        words_.push_back(w);
    }

    std::map<std::string, std::int64_t> ids_;
    std::vector<std::string> words_;
};

}  // namespace eduqa::model
