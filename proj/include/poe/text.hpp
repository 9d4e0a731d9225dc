#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "poe/common.hpp"

namespace poe {

// Whitespace tokenizer vocabulary with four fixed special ids. Tokens below
// the frequency cutoff fall back to UNK.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kMask = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // index = id, specials included

  int size() const { return static_cast<int>(id_to_token.size()); }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  // Content hash binding checkpoints to the vocabulary they were trained with.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& tok : id_to_token) {
      h = fnv1a64(tok, h);
      h = fnv1a64("\x1f", h);
    }
    return h;
  }
};

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// Ids are assigned in first-occurrence order over the corpus, after the four
// specials, so vocabulary construction is deterministic.
inline Vocabulary build_vocab(const std::vector<std::string>& raw_texts, std::size_t min_freq) {
  require(!raw_texts.empty(), "build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  std::vector<std::string> order;
  for (const auto& text : raw_texts) {
    for (auto& tok : split_whitespace(text)) {
      auto [it, inserted] = freq.try_emplace(tok, 0);
      if (inserted) order.push_back(tok);
      ++it->second;
    }
  }
  Vocabulary v;
  v.id_to_token = {"[PAD]", "[CLS]", "[MASK]", "[UNK]"};
  for (const auto& tok : order) {
    if (freq[tok] >= min_freq) {
      v.token_to_id.emplace(tok, v.size());
      v.id_to_token.push_back(tok);
    }
  }
  return v;
}

// One tokenized sentence. ids has fixed length max_seq_len: CLS, then the
// real tokens (UNK for out-of-vocabulary words), then PAD. Positions 1..length
// are exactly the maskable positions.
struct TokenizedExample {
  std::vector<int> ids;
  int label = -1;  // [0, K) for ID examples, K marks the surrogate OOD class
  int length = 0;  // S, number of real tokens

  bool maskable(int pos) const { return pos >= 1 && pos <= length; }
  int max_seq_len() const { return static_cast<int>(ids.size()); }

  bool operator==(const TokenizedExample& o) const = default;
};

inline TokenizedExample tokenize(const std::string& text, const Vocabulary& vocab, int max_seq_len) {
  require(max_seq_len >= 1, "tokenize: max_seq_len must be >= 1");
  TokenizedExample ex;
  ex.ids.assign(static_cast<std::size_t>(max_seq_len), Vocabulary::kPad);
  ex.ids[0] = Vocabulary::kCls;
  const auto tokens = split_whitespace(text);
  const std::size_t keep = std::min(tokens.size(), static_cast<std::size_t>(max_seq_len - 1));
  for (std::size_t i = 0; i < keep; ++i) ex.ids[i + 1] = vocab.id_of(tokens[i]);
  ex.length = static_cast<int>(keep);
  return ex;
}

}  // namespace poe
