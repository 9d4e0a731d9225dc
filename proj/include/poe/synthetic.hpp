#pragma once

#include <string>
#include <vector>

#include "poe/corpus.hpp"

namespace poe {

// Desk-scale corpus generator. Every topic (K in-distribution plus a held-out
// OOD set) owns a pool of content words; all topics share one pool of function
// words, so OOD sentences keep the ID text style while shifting content.
// OOD content additionally borrows from ID pools with probability
// `ood_id_content_mix`, which keeps the OOD set near the ID distribution.
struct SyntheticConfig {
  std::uint64_t seed = 0;
  int num_classes = 4;  // K
  int n_per_class = 200;
  int ood_classes = 3;
  int n_dev_per_class = 50;
  int n_test_per_class = 50;
  int n_function_words = 10;
  int n_content_per_class = 10;
  int min_sentence_len = 6;
  int max_sentence_len = 18;
  double function_word_prob = 0.4;
  double ood_id_content_mix = 0.5;

  void validate() const {
    require(num_classes >= 2, "synthetic corpus requires K >= 2");
    require(ood_classes >= 1, "synthetic corpus requires at least one OOD class");
    require(n_per_class >= 1 && n_dev_per_class >= 0 && n_test_per_class >= 1,
            "synthetic corpus: invalid split sizes");
    require(min_sentence_len >= 1 && max_sentence_len >= min_sentence_len,
            "synthetic corpus: invalid sentence lengths");
    require(n_function_words >= 1 && n_content_per_class >= 1,
            "synthetic corpus: word pools must be non-empty");
  }
};

namespace detail {

inline std::string function_word(int i) {
  static const std::vector<std::string> kCommon = {
      "the", "a",  "of", "to",   "and",  "in",    "is",   "it",   "for", "on",
      "with", "as", "at", "this", "that", "from", "by", "was", "are", "an"};
  if (i < static_cast<int>(kCommon.size())) return kCommon[static_cast<std::size_t>(i)];
  return "fw" + std::to_string(i);
}

inline std::string content_word(int topic, int i) {
  return "t" + std::to_string(topic) + "w" + std::to_string(i);
}

}  // namespace detail

// Word types appearing in the ID corpus, in a fixed order. Useful as an
// enumeration oracle for vocabulary construction.
inline std::vector<std::string> synthetic_id_word_list(const SyntheticConfig& cfg) {
  std::vector<std::string> words;
  for (int i = 0; i < cfg.n_function_words; ++i) words.push_back(detail::function_word(i));
  for (int k = 0; k < cfg.num_classes; ++k)
    for (int i = 0; i < cfg.n_content_per_class; ++i)
      words.push_back(detail::content_word(k, i));
  return words;
}

struct SyntheticRaw {
  std::vector<RawExample> id_records;
  std::vector<RawExample> ood_records;
  std::string provenance;
};

inline SyntheticRaw generate_synthetic_raw(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  auto sentence = [&](int topic, bool is_ood) {
    const int len = cfg.min_sentence_len +
                    static_cast<int>(rng.uniform_int(
                        static_cast<std::size_t>(cfg.max_sentence_len - cfg.min_sentence_len + 1)));
    std::string text;
    for (int i = 0; i < len; ++i) {
      std::string word;
      if (rng.bernoulli(cfg.function_word_prob)) {
        word = detail::function_word(static_cast<int>(rng.uniform_int(cfg.n_function_words)));
      } else {
        int pool = topic;
        if (is_ood && rng.bernoulli(cfg.ood_id_content_mix))
          pool = static_cast<int>(rng.uniform_int(cfg.num_classes));
        word = detail::content_word(pool, static_cast<int>(rng.uniform_int(cfg.n_content_per_class)));
      }
      if (i) text += ' ';
      text += word;
    }
    return text;
  };

  SyntheticRaw out;
  out.provenance = "synthetic:seed=" + std::to_string(cfg.seed) +
                   ",K=" + std::to_string(cfg.num_classes) +
                   ",n=" + std::to_string(cfg.n_per_class) +
                   ",ood=" + std::to_string(cfg.ood_classes);

  auto emit = [&](std::vector<RawExample>& dst, int topic, int label, bool is_ood, Split split,
                  int count) {
    for (int i = 0; i < count; ++i)
      dst.push_back({sentence(topic, is_ood), "class" + std::to_string(label), split});
  };

  for (int k = 0; k < cfg.num_classes; ++k) {
    emit(out.id_records, k, k, false, Split::kTrain, cfg.n_per_class);
    emit(out.id_records, k, k, false, Split::kDev, cfg.n_dev_per_class);
    emit(out.id_records, k, k, false, Split::kTest, cfg.n_test_per_class);
  }
  for (int o = 0; o < cfg.ood_classes; ++o)
    emit(out.ood_records, cfg.num_classes + o, o, true, Split::kTest, cfg.n_test_per_class);
  return out;
}

struct SyntheticCorpus {
  Vocabulary vocab;  // built from the ID train split
  Corpus id;
  Corpus ood;
};

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg, int max_seq_len,
                                                 std::size_t min_freq = 1) {
  const SyntheticRaw raw = generate_synthetic_raw(cfg);
  std::vector<std::string> train_texts;
  for (const auto& r : raw.id_records)
    if (r.split == Split::kTrain) train_texts.push_back(r.text);
  SyntheticCorpus out;
  out.vocab = build_vocab(train_texts, min_freq);
  out.id = tokenize_corpus(raw.id_records, out.vocab, max_seq_len, raw.provenance);
  out.ood = tokenize_corpus(raw.ood_records, out.vocab, max_seq_len, raw.provenance + ",part=ood");
  return out;
}

inline SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, int num_classes,
                                                 int n_per_class, int ood_classes,
                                                 int max_seq_len = 24) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  cfg.num_classes = num_classes;
  cfg.n_per_class = n_per_class;
  cfg.ood_classes = ood_classes;
  return generate_synthetic_corpus(cfg, max_seq_len);
}

}  // namespace poe
