#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poe/text.hpp"

namespace poe {

using Json = nlohmann::json;

enum class Split { kTrain, kDev, kTest };

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  fail("unknown split tag '" + s + "' (expected train|dev|test)");
}

struct RawExample {
  std::string text;
  std::string label;
  Split split = Split::kTrain;
};

struct Corpus {
  std::vector<TokenizedExample> train, dev, test;
  int num_classes = 0;
  std::string provenance;
  std::vector<std::string> label_names;  // first-seen order

  const std::vector<TokenizedExample>& split(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kDev: return dev;
      default: return test;
    }
  }
  std::vector<TokenizedExample>& split(Split s) {
    return const_cast<std::vector<TokenizedExample>&>(
        static_cast<const Corpus*>(this)->split(s));
  }
};

namespace detail {

inline std::string get_record_field(const Json& rec, const char* key, std::size_t line_no) {
  if (!rec.contains(key))
    fail("record on line " + std::to_string(line_no) + " is missing field '" + key + "'");
  const auto& v = rec.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  fail("field '" + std::string(key) + "' on line " + std::to_string(line_no) +
       " must be a string or integer");
}

}  // namespace detail

inline std::vector<RawExample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: " + path);
  std::vector<RawExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const std::exception& e) {
      fail("invalid json on line " + std::to_string(line_no) + " of " + path + ": " + e.what());
    }
    RawExample ex;
    ex.text = detail::get_record_field(rec, "text", line_no);
    ex.label = detail::get_record_field(rec, "label", line_no);
    ex.split = parse_split(detail::get_record_field(rec, "split", line_no));
    out.push_back(std::move(ex));
  }
  return out;
}

// Tab-separated with a header naming the text/label/split columns. Fields may
// not contain tabs; no quoting is supported.
inline std::vector<RawExample> read_tsv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "tsv file has no header: " + path);

  auto split_tabs = [](const std::string& s) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = s.find('\t', start);
      if (tab == std::string::npos) {
        cols.push_back(s.substr(start));
        break;
      }
      cols.push_back(s.substr(start, tab - start));
      start = tab + 1;
    }
    return cols;
  };

  const auto header = split_tabs(line);
  int text_col = -1, label_col = -1, split_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "text") text_col = static_cast<int>(i);
    else if (header[i] == "label") label_col = static_cast<int>(i);
    else if (header[i] == "split") split_col = static_cast<int>(i);
  }
  require(text_col >= 0 && label_col >= 0 && split_col >= 0,
          "tsv header must name text, label and split columns: " + path);

  std::vector<RawExample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (static_cast<int>(cols.size()) <= std::max({text_col, label_col, split_col}))
      fail("line " + std::to_string(line_no) + " of " + path + " has too few columns");
    RawExample ex;
    ex.text = cols[text_col];
    ex.label = cols[label_col];
    ex.split = parse_split(cols[split_col]);
    out.push_back(std::move(ex));
  }
  return out;
}

enum class FileFormat { kJsonl, kTsv };

inline std::vector<RawExample> read_raw(const std::string& path, FileFormat format) {
  return format == FileFormat::kJsonl ? read_jsonl(path) : read_tsv(path);
}

// Labels are remapped to contiguous [0, K) in first-seen order over the file.
inline Corpus tokenize_corpus(const std::vector<RawExample>& records, const Vocabulary& vocab,
                              int max_seq_len, const std::string& provenance) {
  Corpus c;
  c.provenance = provenance;
  std::map<std::string, int> label_ids;
  for (const auto& rec : records) {
    auto [it, inserted] = label_ids.try_emplace(rec.label, static_cast<int>(c.label_names.size()));
    if (inserted) c.label_names.push_back(rec.label);
    TokenizedExample ex = tokenize(rec.text, vocab, max_seq_len);
    ex.label = it->second;
    c.split(rec.split).push_back(std::move(ex));
  }
  c.num_classes = static_cast<int>(c.label_names.size());
  return c;
}

struct LoadedCorpus {
  Vocabulary vocab;
  Corpus corpus;
};

// Builds the vocabulary from the train split of the file, then tokenizes all
// splits with it.
inline LoadedCorpus load_corpus(const std::string& path, FileFormat format,
                                std::size_t min_freq, int max_seq_len) {
  const auto records = read_raw(path, format);
  require(!records.empty(), "corpus file is empty: " + path);
  std::vector<std::string> train_texts;
  for (const auto& r : records)
    if (r.split == Split::kTrain) train_texts.push_back(r.text);
  require(!train_texts.empty(),
          "corpus file has no train split, cannot build a vocabulary: " + path);
  LoadedCorpus lc;
  lc.vocab = build_vocab(train_texts, min_freq);
  lc.corpus = tokenize_corpus(records, lc.vocab, max_seq_len, path);
  return lc;
}

// ---- serialization --------------------------------------------------------

inline Json to_json(const Vocabulary& v) {
  return Json{{"tokens", v.id_to_token}};
}

inline Vocabulary vocab_from_json(const Json& j) {
  Vocabulary v;
  v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  require(v.size() >= Vocabulary::kNumSpecials, "vocabulary json is missing special tokens");
  for (int i = Vocabulary::kNumSpecials; i < v.size(); ++i)
    v.token_to_id.emplace(v.id_to_token[i], i);
  return v;
}

inline Json to_json(const TokenizedExample& ex) {
  return Json{{"ids", ex.ids}, {"label", ex.label}, {"length", ex.length}};
}

inline TokenizedExample example_from_json(const Json& j) {
  TokenizedExample ex;
  ex.ids = j.at("ids").get<std::vector<int>>();
  ex.label = j.at("label").get<int>();
  ex.length = j.at("length").get<int>();
  return ex;
}

inline Json to_json(const Corpus& c) {
  auto enc = [](const std::vector<TokenizedExample>& v) {
    Json arr = Json::array();
    for (const auto& ex : v) arr.push_back(to_json(ex));
    return arr;
  };
  return Json{{"num_classes", c.num_classes},
              {"provenance", c.provenance},
              {"label_names", c.label_names},
              {"train", enc(c.train)},
              {"dev", enc(c.dev)},
              {"test", enc(c.test)}};
}

inline Corpus corpus_from_json(const Json& j) {
  Corpus c;
  c.num_classes = j.at("num_classes").get<int>();
  c.provenance = j.at("provenance").get<std::string>();
  c.label_names = j.at("label_names").get<std::vector<std::string>>();
  auto dec = [](const Json& arr, std::vector<TokenizedExample>& out) {
    for (const auto& e : arr) out.push_back(example_from_json(e));
  };
  dec(j.at("train"), c.train);
  dec(j.at("dev"), c.dev);
  dec(j.at("test"), c.test);
  return c;
}

}  // namespace poe
