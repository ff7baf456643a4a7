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

// Synthetic corpora with known answers: pages that copy noisy excerpts of
// generated editions, and aligned pairs with planted substitution rates.

#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "pen/aligner.hpp"
#include "pen/io.hpp"
#include "pen/pairbuilder.hpp"
#include "pen/textprep.hpp"

namespace pen {

struct SynthSpec {
  std::size_t editions = 200;
  std::size_t pages = 500;
  std::size_t edition_chars = 6000;
  std::size_t excerpt_min = 1100;  // characters
  std::size_t excerpt_max = 1900;
  double noise = 0.10;     // per-character substitution/insertion/deletion
  double swap_halves = 0.5;  // probability a page's halves are exchanged
  std::size_t line_chars = 64;
  std::size_t vocabulary = 50000;  // distinct words shared by all editions
  uint64_t seed = 1;
};

struct PlantedLink {
  std::string page_ref;
  std::string work_id;
  std::size_t start = 0;  // code point offset in the edition
  std::size_t length = 0;
  bool swapped = false;
};

struct SynthCorpus {
  std::vector<EditionRecord> editions;
  std::vector<SourcePage> pages;
  std::vector<PlantedLink> truth;
};

inline void to_json(Json& j, const PlantedLink& l) {
  j = Json{{"page", l.page_ref}, {"work_id", l.work_id}, {"start", l.start},
           {"length", l.length}, {"swapped", l.swapped}};
}
inline void from_json(const Json& j, PlantedLink& l) {
  l.page_ref = detail::required<std::string>(j, "page");
  l.work_id = detail::required<std::string>(j, "work_id");
  l.start = detail::optional_field<std::size_t>(j, "start", 0);
  l.length = detail::optional_field<std::size_t>(j, "length", 0);
  l.swapped = detail::optional_field<bool>(j, "swapped", false);
}

namespace synth_detail {

inline std::size_t below(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Latin-looking vocabulary: 2-3 syllables from a fixed inventory.
inline std::vector<std::string> make_vocabulary(std::mt19937_64& rng, std::size_t size) {
  static const char* onsets[] = {"",   "b",  "c",  "d",  "f",  "g",  "h",  "l",  "m",
                                 "n",  "p",  "qu", "r",  "s",  "t",  "v",  "pr", "tr",
                                 "st", "gr", "cl", "br", "cr", "dr", "fl", "pl", "sc",
                                 "sp", "x",  "ph", "th", "ch", "fr", "gl", "sm"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ae", "io", "ue", "au", "ei", "y", "oe"};
  static const char* codas[] = {"", "", "", "s", "m", "n", "t", "r", "x", "l", "nt", "st", "ns", "c"};
  std::vector<std::string> words;
  while (words.size() < size) {
    std::string w;
    const std::size_t syl = 2 + below(rng, 2);
    for (std::size_t s = 0; s < syl; ++s) {
      w += onsets[below(rng, std::size(onsets))];
      w += vowels[below(rng, std::size(vowels))];
      if (s + 1 == syl) w += codas[below(rng, std::size(codas))];
    }
    words.push_back(std::move(w));
  }
  return words;
}

inline std::string make_text(std::mt19937_64& rng, const std::vector<std::string>& vocab,
                             std::size_t chars) {
  std::string out;
  std::size_t since_stop = 0;
  while (out.size() < chars) {
    if (!out.empty()) out.push_back(' ');
    out += vocab[below(rng, vocab.size())];
    ++since_stop;
    if (since_stop > 6 && below(rng, 8) == 0) {
      out.push_back(below(rng, 3) == 0 ? ',' : '.');
      since_stop = 0;
    }
  }
  return out;
}

inline std::u32string add_noise(std::mt19937_64& rng, std::u32string_view text, double rate) {
  static const std::u32string letters = U"abcdefgilmnopqrstuvx";
  std::u32string out;
  for (char32_t c : text) {
    if (unit(rng) >= rate) {
      out.push_back(c);
      continue;
    }
    switch (below(rng, 3)) {
      case 0: out.push_back(letters[below(rng, letters.size())]); break;
      case 1:
        out.push_back(c);
        out.push_back(letters[below(rng, letters.size())]);
        break;
      default: break;  // deletion
    }
  }
  return out;
}

// Wraps at spaces into lines of about `width` characters.
inline std::vector<std::string> wrap(std::u32string_view text, std::size_t width) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = std::min(text.size(), start + width);
    if (end < text.size()) {
      const auto space = text.rfind(U' ', end);
      if (space != std::u32string::npos && space > start + width / 2) end = space;
    }
    std::u32string line(text.substr(start, end - start));
    while (!line.empty() && line.front() == U' ') line.erase(line.begin());
    if (!line.empty()) lines.push_back(to_utf8(line));
    start = end;
  }
  return lines;
}

}  // namespace synth_detail

inline SynthCorpus make_synth_corpus(const SynthSpec& spec) {
  using namespace synth_detail;
  std::mt19937_64 rng(spec.seed);
  const auto vocab = make_vocabulary(rng, spec.vocabulary);
  SynthCorpus c;
  for (std::size_t e = 0; e < spec.editions; ++e) {
    EditionRecord r;
    r.work_id = "work" + std::to_string(1000 + e);
    r.language = e % 3 == 2 ? "fro" : "la";
    r.text = make_text(rng, vocab, spec.edition_chars);
    r.metadata = Json{{"title", "Synthetic work " + std::to_string(e)}};
    c.editions.push_back(std::move(r));
  }
  for (std::size_t p = 0; p < spec.pages; ++p) {
    const EditionRecord& ed = c.editions[below(rng, c.editions.size())];
    const std::u32string text = to_u32(ed.text);
    const std::size_t len = std::min(
        text.size(), spec.excerpt_min + below(rng, spec.excerpt_max - spec.excerpt_min + 1));
    std::size_t start = below(rng, text.size() - len + 1);
    std::u32string excerpt = text.substr(start, len);
    bool swapped = false;
    if (unit(rng) < spec.swap_halves) {
      std::size_t mid = excerpt.find(U' ', excerpt.size() / 2);
      if (mid == std::u32string::npos) mid = excerpt.size() / 2;
      excerpt = excerpt.substr(mid + 1) + U" " + excerpt.substr(0, mid);
      swapped = true;
    }
    const std::u32string noisy = add_noise(rng, excerpt, spec.noise);
    SourcePage page;
    page.doc_id = "ms" + std::to_string(100 + p / 4);
    page.page_id = "f" + std::to_string(p) + (p % 2 ? "v" : "r");
    page.language = ed.language;
    page.lines.push_back({"fol. " + std::to_string(p), "header"});
    for (const std::string& line : wrap(noisy, spec.line_chars)) {
      page.lines.push_back({line, "main"});
    }
    page.lines.push_back({"nota bene", "margin"});
    c.truth.push_back({page.doc_id + "/" + page.page_id, ed.work_id, start, len, swapped});
    c.pages.push_back(std::move(page));
  }
  return c;
}

inline void write_synth_corpus(const SynthCorpus& c, const std::string& dir) {
  write_jsonl(dir + "/pages.jsonl", c.pages);
  write_jsonl(dir + "/editions.jsonl", c.editions);
  write_jsonl(dir + "/truth.jsonl", c.truth);
}

// ---------------------------------------------------------------------------
// Pairs with a planted rate of marker-free substituted tokens.

struct SubstitutionSpec {
  double rate = 0.3;              // fraction of source tokens substituted
  std::size_t pairs_per_language = 100;
  std::size_t tokens_per_pair = 100;
  double marker_tokens = 0.15;    // abbreviated tokens, resolved in the target
  std::vector<std::string> languages = {"la", "fro"};
  uint64_t seed = 1;
};

// Every pair has exactly round(rate * tokens) substituted tokens, so the
// planted per-pair (and mean) fraction is that count over tokens_per_pair.
inline std::vector<AlignedPair> make_substitution_corpus(const SubstitutionSpec& spec) {
  using namespace synth_detail;
  std::mt19937_64 rng(spec.seed);
  const auto vocab = make_vocabulary(rng, 3000);
  const std::size_t n = spec.tokens_per_pair;
  const auto substituted = static_cast<std::size_t>(spec.rate * static_cast<double>(n) + 0.5);
  static const std::u32string letters = U"bcdfglmprst";
  std::vector<AlignedPair> out;
  for (const std::string& lang : spec.languages) {
    for (std::size_t k = 0; k < spec.pairs_per_language; ++k) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      detail::portable_shuffle(order, rng);
      std::vector<int> kind(n, 0);  // 0 identical, 1 substituted, 2 abbreviated
      for (std::size_t i = 0; i < substituted; ++i) kind[order[i]] = 1;
      const auto marked = static_cast<std::size_t>(spec.marker_tokens * static_cast<double>(n));
      for (std::size_t i = substituted; i < std::min(n, substituted + marked); ++i) {
        kind[order[i]] = 2;
      }
      std::u32string src, tgt;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) {
          src.push_back(U' ');
          tgt.push_back(U' ');
        }
        std::u32string word = to_u32(vocab[below(rng, vocab.size())]);
        if (kind[i] == 2) {
          // Nasal abbreviation: target "...an...", source "...ã..." (decomposed).
          const std::size_t at = below(rng, word.size());
          std::u32string t = word;
          t.insert(at + 1, U"n");
          std::u32string s = word;
          s.insert(at + 1, U"̃");
          src += s;
          tgt += t;
        } else if (kind[i] == 1) {
          // The target differs by one letter: replaced, dropped or added.
          std::u32string t = word;
          const std::size_t at = below(rng, t.size());
          char32_t c;
          do {
            c = letters[below(rng, letters.size())];
          } while (c == t[at]);
          switch (below(rng, 3)) {
            case 0: t[at] = c; break;
            case 1:
              if (t.size() > 2) {
                t.erase(at, 1);
              } else {
                t[at] = c;
              }
              break;
            default: t.insert(at, 1, c); break;
          }
          src += word;
          tgt += t;
        } else {
          // Punctuation-only differences keep the token identical.
          src += word;
          tgt += word;
          if (below(rng, 10) == 0) src.push_back(U'.');
        }
      }
      AlignParams params;
      params.min_align_chars = 1;
      const CharAlignment a = align_beam(src, tgt, params);
      std::vector<EditOp> ops;
      std::size_t s_at = 0, t_at = 0;
      for (const AlignSegment& seg : a.segments) {
        for (; s_at < seg.src.begin; ++s_at) ops.push_back(EditOp::kDel);
        for (; t_at < seg.tgt.begin; ++t_at) ops.push_back(EditOp::kIns);
        ops.insert(ops.end(), seg.ops.begin(), seg.ops.end());
        s_at = seg.src.end;
        t_at = seg.tgt.end;
      }
      for (; s_at < src.size(); ++s_at) ops.push_back(EditOp::kDel);
      for (; t_at < tgt.size(); ++t_at) ops.push_back(EditOp::kIns);
      AlignedPair p;
      p.id = lang + "-" + std::to_string(k);
      p.src = to_utf8(src);
      p.tgt = to_utf8(tgt);
      p.src_bytes = p.src.size();
      p.ops = encode_ops(ops);
      p.language = lang;
      p.match_rate = a.match_rate;
      p.lineage = {"synthetic", p.id, "work-" + lang, p.id, {0, src.size()}, {0, tgt.size()}};
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace pen
