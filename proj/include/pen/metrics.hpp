// Copyright 2026 The PEN Toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Evaluation: character/word error rates and bag-of-words overlap.

#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pen/error.hpp"
#include "pen/unicode.hpp"

namespace pen {

// Unit-cost Levenshtein distance, no transpositions.
template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const std::u32string& t : split_whitespace(to_u32(text))) {
    out.push_back(to_utf8(t));
  }
  return out;
}

// Removes every punctuation character from each token; drops tokens left empty.
inline std::vector<std::string> strip_punctuation(
    const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const std::string& t : tokens) {
    std::u32string kept;
    for (char32_t c : to_u32(t)) {
      if (!is_unicode_punctuation(c)) kept.push_back(c);
    }
    if (!kept.empty()) out.push_back(to_utf8(kept));
  }
  return out;
}

inline std::vector<std::string> stripped_tokens(std::string_view text) {
  return strip_punctuation(whitespace_tokens(text));
}

using Tokenizer = std::vector<std::string> (*)(std::string_view);

struct EditCount {
  std::size_t edits = 0;
  std::size_t length = 0;  // reference length
};

inline EditCount char_edits(std::string_view pred, std::string_view gold) {
  const std::u32string g = to_u32(gold);
  return {levenshtein(to_u32(pred), g), g.size()};
}

inline EditCount word_edits(std::string_view pred, std::string_view gold,
                            Tokenizer tokenize = whitespace_tokens) {
  const auto g = tokenize(gold);
  return {levenshtein(tokenize(pred), g), g.size()};
}

inline double cer(std::string_view pred, std::string_view gold) {
  const EditCount c = char_edits(pred, gold);
  if (c.length == 0) throw Error(ErrorKind::kEmptyReference, "empty gold text");
  return static_cast<double>(c.edits) / static_cast<double>(c.length);
}

inline double wer(std::string_view pred, std::string_view gold,
                  Tokenizer tokenize = whitespace_tokens) {
  const EditCount c = word_edits(pred, gold, tokenize);
  if (c.length == 0) throw Error(ErrorKind::kEmptyReference, "gold has no tokens");
  return static_cast<double>(c.edits) / static_cast<double>(c.length);
}

inline constexpr const char* kMixedLanguage = "mixed";

struct EditScores {
  double cer = 0;
  double wer = 0;
  std::size_t samples = 0;
  bool operator==(const EditScores&) const = default;
};

struct EditReport {
  EditScores all;
  std::map<std::string, EditScores> per_language;
  bool macro = false;
};

// Sums of edits and lengths (micro) plus sums of per-sample rates (macro);
// merging two accumulators is exact.
class EditAccumulator {
 public:
  explicit EditAccumulator(Tokenizer tokenize = whitespace_tokens)
      : tokenize_(tokenize) {}

  void add(const std::string& language, std::string_view pred,
           std::string_view gold) {
    const EditCount c = char_edits(pred, gold);
    const EditCount w = word_edits(pred, gold, tokenize_);
    if (c.length == 0 || w.length == 0) {
      throw Error(ErrorKind::kEmptyReference, "empty gold text");
    }
    Sums s{c.edits, c.length, w.edits, w.length,
           static_cast<double>(c.edits) / static_cast<double>(c.length),
           static_cast<double>(w.edits) / static_cast<double>(w.length), 1};
    all_ += s;
    // Mixed-language samples count only toward the overall figures.
    if (language != kMixedLanguage) by_language_[language] += s;
  }

  void merge(const EditAccumulator& other) {
    all_ += other.all_;
    for (const auto& [lang, s] : other.by_language_) by_language_[lang] += s;
  }

  EditReport report(bool macro = false) const {
    EditReport r;
    r.macro = macro;
    r.all = all_.scores(macro);
    for (const auto& [lang, s] : by_language_) r.per_language[lang] = s.scores(macro);
    return r;
  }

 private:
  struct Sums {
    std::size_t char_edits = 0, char_len = 0, word_edits = 0, word_len = 0;
    double cer_sum = 0, wer_sum = 0;
    std::size_t samples = 0;

    Sums& operator+=(const Sums& o) {
      char_edits += o.char_edits;
      char_len += o.char_len;
      word_edits += o.word_edits;
      word_len += o.word_len;
      cer_sum += o.cer_sum;
      wer_sum += o.wer_sum;
      samples += o.samples;
      return *this;
    }
    EditScores scores(bool macro) const {
      EditScores e;
      e.samples = samples;
      if (samples == 0) return e;
      if (macro) {
        e.cer = cer_sum / static_cast<double>(samples);
        e.wer = wer_sum / static_cast<double>(samples);
      } else {
        e.cer = static_cast<double>(char_edits) / static_cast<double>(char_len);
        e.wer = static_cast<double>(word_edits) / static_cast<double>(word_len);
      }
      return e;
    }
  };

  Tokenizer tokenize_;
  Sums all_;
  std::map<std::string, Sums> by_language_;
};

// ---------------------------------------------------------------------------
// Bag of words.

struct BowReport {
  std::size_t tp = 0;
  std::size_t gold = 0;  // |G|
  std::size_t pred = 0;  // |P|
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool operator==(const BowReport&) const = default;
};

inline BowReport bow_from_counts(std::size_t tp, std::size_t gold, std::size_t pred) {
  BowReport r{tp, gold, pred, 0, 0, 0};
  if (pred > 0) r.precision = static_cast<double>(tp) / static_cast<double>(pred);
  if (gold > 0) r.recall = static_cast<double>(tp) / static_cast<double>(gold);
  if (r.precision + r.recall > 0) {
    r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

// Label multisets; associative merge, tp = sum over labels of min counts.
template <typename Label>
class BowCounter {
 public:
  void add(const std::vector<Label>& gold, const std::vector<Label>& pred) {
    for (const Label& l : gold) ++counts_[l].first;
    for (const Label& l : pred) ++counts_[l].second;
  }
  void merge(const BowCounter& other) {
    for (const auto& [l, c] : other.counts_) {
      counts_[l].first += c.first;
      counts_[l].second += c.second;
    }
  }
  BowReport report() const {
    std::size_t tp = 0, g = 0, p = 0;
    for (const auto& [l, c] : counts_) {
      tp += std::min(c.first, c.second);
      g += c.first;
      p += c.second;
    }
    return bow_from_counts(tp, g, p);
  }

 private:
  std::map<Label, std::pair<std::size_t, std::size_t>> counts_;
};

template <typename Label>
BowReport bow(const std::vector<Label>& gold, const std::vector<Label>& pred) {
  BowCounter<Label> c;
  c.add(gold, pred);
  return c.report();
}

// The k most frequent gold tokens after punctuation stripping; ties go to the
// lexicographically smaller token.
inline std::vector<std::string> most_frequent(const std::vector<std::string>& gold,
                                              std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const std::string& t : strip_punctuation(gold)) ++freq[t];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    out.push_back(ranked[i].first);
  }
  return out;
}

inline std::vector<std::string> restrict_to(const std::vector<std::string>& tokens,
                                            const std::vector<std::string>& vocab) {
  std::vector<std::string> sorted = vocab;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> out;
  for (const std::string& t : tokens) {
    if (std::binary_search(sorted.begin(), sorted.end(), t)) out.push_back(t);
  }
  return out;
}

inline BowReport bow_mfw(const std::vector<std::string>& gold,
                         const std::vector<std::string>& pred, std::size_t k = 100) {
  const auto vocab = most_frequent(gold, k);
  return bow(restrict_to(strip_punctuation(gold), vocab),
             restrict_to(strip_punctuation(pred), vocab));
}

inline std::vector<std::vector<std::string>> label_ngrams(
    const std::vector<std::string>& labels, std::size_t n = 3) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "n must be >= 1");
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i + n <= labels.size(); ++i) {
    out.emplace_back(labels.begin() + static_cast<long>(i),
                     labels.begin() + static_cast<long>(i + n));
  }
  return out;
}

// One decimal, as a percentage: 0.2051 -> "20.5".
inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

// ---------------------------------------------------------------------------
// Corpus evaluation over {id, gold, pred, language, labels?} records.

struct LabelLayer {
  std::vector<std::string> gold;
  std::vector<std::string> pred;
};

struct EvalRecord {
  std::string id;
  std::string gold;
  std::string pred;
  std::string language;
  std::map<std::string, LabelLayer> labels;  // e.g. "lemma", "pos"
};

struct EvalOptions {
  bool macro = false;
  std::size_t mfw_k = 100;
  std::size_t ngram_n = 3;
};

struct EvalReport {
  EditReport edit;
  // Layer -> report; layers are "token", "token-mfw", every supplied label
  // layer, and "<layer>-<n>gram" for "pos".
  std::map<std::string, BowReport> bow;
  std::map<std::string, std::map<std::string, BowReport>> bow_per_language;
};

inline EvalReport evaluate(const std::vector<EvalRecord>& records,
                           const EvalOptions& options = {}) {
  EditAccumulator edits;
  using Key = std::pair<std::string, std::string>;  // (language, layer)
  std::map<Key, BowCounter<std::string>> flat;
  std::map<Key, BowCounter<std::vector<std::string>>> grams;
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>>
      mfw_tokens;  // language -> (gold, pred), "" = all

  auto add_flat = [&](const std::string& lang, const std::string& layer,
                      const std::vector<std::string>& g, const std::vector<std::string>& p) {
    flat[{"", layer}].add(g, p);
    if (lang != kMixedLanguage) flat[{lang, layer}].add(g, p);
  };

  for (const EvalRecord& r : records) {
    edits.add(r.language, r.pred, r.gold);
    const auto g = whitespace_tokens(r.gold), p = whitespace_tokens(r.pred);
    add_flat(r.language, "token", g, p);
    for (const std::string& lang : {std::string(), r.language}) {
      if (lang == kMixedLanguage) continue;
      auto& slot = mfw_tokens[lang];
      slot.first.insert(slot.first.end(), g.begin(), g.end());
      slot.second.insert(slot.second.end(), p.begin(), p.end());
    }
    for (const auto& [layer, l] : r.labels) {
      add_flat(r.language, layer, l.gold, l.pred);
      if (layer == "pos") {
        const std::string name = layer + "-" + std::to_string(options.ngram_n) + "gram";
        const auto gg = label_ngrams(l.gold, options.ngram_n);
        const auto pg = label_ngrams(l.pred, options.ngram_n);
        grams[{"", name}].add(gg, pg);
        if (r.language != kMixedLanguage) grams[{r.language, name}].add(gg, pg);
      }
    }
  }

  EvalReport out;
  out.edit = edits.report(options.macro);
  auto place = [&](const Key& key, const BowReport& b) {
    if (key.first.empty()) {
      out.bow[key.second] = b;
    } else {
      out.bow_per_language[key.first][key.second] = b;
    }
  };
  for (const auto& [key, c] : flat) place(key, c.report());
  for (const auto& [key, c] : grams) place(key, c.report());
  for (const auto& [lang, gp] : mfw_tokens) {
    place({lang, "token-mfw"}, bow_mfw(gp.first, gp.second, options.mfw_k));
  }
  return out;
}

}  // namespace pen
