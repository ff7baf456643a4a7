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

// Abbreviation markers, token alignment inside a pair, and substitution
// statistics over a pair stream.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pen/aligner.hpp"
#include "pen/error.hpp"
#include "pen/pairbuilder.hpp"
#include "pen/unicode.hpp"

namespace pen {

struct MarkerRange {
  char32_t first = 0;
  char32_t last = 0;  // inclusive
  std::string label;

  bool operator==(const MarkerRange&) const = default;
};

// Same content as data/markers.txt; a unit test keeps the two in sync.
inline constexpr std::string_view kDefaultMarkerTable =
    R"(# pen-markers 1
# first[..last]<TAB>label. Code points as U+XXXX. Ranges are inclusive.
U+0300..U+036F	combining diacritical marks
U+1DC0..U+1DFF	combining diacritical marks supplement
U+1D2C..U+1D6A	modifier letters
U+2070..U+209F	superscripts and subscripts
U+0142	l with stroke (ol, vel)
U+204A	tironian et
U+A741	k with stroke
U+A751	p with stroke through descender (per)
U+A753	p with flourish (pro)
U+A755	p with squirrel tail
U+A757	q with stroke through descender
U+A759	q with diagonal stroke
U+A75B	r rotunda
U+A75D	rum rotunda
U+A75F	v with diagonal stroke
U+A76B	et
U+A76D	is
U+A76F	con
U+A770	modifier us
)";

class MarkerTable {
 public:
  static constexpr int kVersion = 1;

  MarkerTable() = default;
  explicit MarkerTable(std::vector<MarkerRange> ranges)
      : ranges_(std::move(ranges)) {
    std::sort(ranges_.begin(), ranges_.end(),
              [](const MarkerRange& a, const MarkerRange& b) {
                return a.first < b.first;
              });
    for (std::size_t i = 0; i < ranges_.size(); ++i) {
      if (ranges_[i].first > ranges_[i].last) {
        throw Error(ErrorKind::kConfigError,
                    "marker range " + ranges_[i].label + " is reversed");
      }
      if (i > 0 && ranges_[i].first <= ranges_[i - 1].last) {
        throw Error(ErrorKind::kConfigError,
                    "marker entries overlap: " + ranges_[i - 1].label +
                        " and " + ranges_[i].label);
      }
    }
  }

  static MarkerTable parse(std::string_view text) {
    std::vector<MarkerRange> ranges;
    std::istringstream in{std::string(text)};
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("# pen-markers ", 0) == 0) {
        if (std::stoi(line.substr(14)) != kVersion) {
          throw Error(ErrorKind::kConfigError,
                      "unsupported marker table version: " + line);
        }
        saw_header = true;
        continue;
      }
      if (line.empty() || line[0] == '#') continue;
      const std::size_t tab = line.find('\t');
      const std::string spec = line.substr(0, tab);
      const std::string label =
          tab == std::string::npos ? std::string() : line.substr(tab + 1);
      const std::size_t dots = spec.find("..");
      try {
        const char32_t first = parse_code_point(spec.substr(0, dots));
        const char32_t last = dots == std::string::npos
                                  ? first
                                  : parse_code_point(spec.substr(dots + 2));
        ranges.push_back({first, last, label});
      } catch (const Error&) {
        throw Error(ErrorKind::kConfigError,
                    "bad marker entry on line " + std::to_string(line_no) +
                        ": " + line);
      }
    }
    if (!saw_header) {
      throw Error(ErrorKind::kConfigError,
                  "marker table lacks a '# pen-markers' version header");
    }
    return MarkerTable(std::move(ranges));
  }

  static MarkerTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kMissingInput, "cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
  }

  static const MarkerTable& defaults() {
    static const MarkerTable table = parse(kDefaultMarkerTable);
    return table;
  }

  bool contains(char32_t c) const {
    auto it = std::upper_bound(
        ranges_.begin(), ranges_.end(), c,
        [](char32_t v, const MarkerRange& r) { return v < r.first; });
    if (it == ranges_.begin()) return false;
    --it;
    return c <= it->last;
  }

  bool any_in(std::u32string_view text) const {
    return std::any_of(text.begin(), text.end(),
                       [&](char32_t c) { return contains(c); });
  }

  const std::vector<MarkerRange>& ranges() const { return ranges_; }
  bool operator==(const MarkerTable&) const = default;

 private:
  static char32_t parse_code_point(const std::string& s) {
    if (s.size() < 3 || s[0] != 'U' || s[1] != '+') {
      throw Error(ErrorKind::kConfigError, "bad code point " + s);
    }
    std::size_t used = 0;
    const unsigned long v = std::stoul(s.substr(2), &used, 16);
    if (used != s.size() - 2 || v > 0x10FFFF) {
      throw Error(ErrorKind::kConfigError, "bad code point " + s);
    }
    return static_cast<char32_t>(v);
  }

  std::vector<MarkerRange> ranges_;
};

enum class TokenClass {
  kIdentical,
  kAbbrevResolution,
  kSubstitution,
  kInsertion,
  kDeletion
};

inline const char* token_class_name(TokenClass c) {
  switch (c) {
    case TokenClass::kIdentical: return "identical";
    case TokenClass::kAbbrevResolution: return "abbrev_resolution";
    case TokenClass::kSubstitution: return "substitution";
    case TokenClass::kInsertion: return "insertion";
    case TokenClass::kDeletion: return "deletion";
  }
  return "unknown";
}

struct TokenAlignmentRecord {
  std::string src_token;  // empty for insertions
  std::string tgt_token;  // empty for deletions
  TokenClass cls = TokenClass::kIdentical;

  bool operator==(const TokenAlignmentRecord&) const = default;
};

struct TokenOptions {
  bool case_fold = false;
};

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline std::vector<TokenSpan> token_spans(std::u32string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_whitespace(text[i])) ++i;
    if (i == text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !is_whitespace(text[i])) ++i;
    out.push_back({b, i});
  }
  return out;
}

// Token with leading and trailing punctuation removed, for comparison.
inline std::u32string comparison_core(std::u32string_view token,
                                      bool case_fold) {
  std::size_t b = 0, e = token.size();
  while (b < e && is_unicode_punctuation(token[b])) ++b;
  while (e > b && is_unicode_punctuation(token[e - 1])) --e;
  std::u32string core(token.substr(b, e - b));
  return case_fold ? to_lower(core) : core;
}

// Projects source tokens through the character alignment `ops` (covering all
// of src and tgt from their starts). Each target token goes to the source
// token with the most character links into it (ties: the earlier source
// token); a source token takes all target tokens assigned to it. Target
// tokens without any link become insertions, appended after the source
// records.
inline std::vector<TokenAlignmentRecord> align_tokens(
    std::u32string_view src, std::u32string_view tgt,
    const std::vector<EditOp>& ops, const MarkerTable& markers,
    const TokenOptions& options = {}) {
  const std::vector<TokenSpan> src_tokens = token_spans(src);
  const std::vector<TokenSpan> tgt_tokens = token_spans(tgt);
  auto token_of = [](const std::vector<TokenSpan>& tokens,
                     std::size_t pos) -> std::ptrdiff_t {
    auto it = std::upper_bound(
        tokens.begin(), tokens.end(), pos,
        [](std::size_t p, const TokenSpan& t) { return p < t.begin; });
    if (it == tokens.begin()) return -1;
    --it;
    return pos < it->end ? it - tokens.begin() : -1;
  };

  // links[target token] -> (source token -> count)
  std::vector<std::map<std::size_t, std::size_t>> links(tgt_tokens.size());
  std::size_t s = 0, t = 0;
  for (EditOp op : ops) {
    if (op == EditOp::kMatch || op == EditOp::kSub) {
      if (s < src.size() && t < tgt.size()) {
        const auto st = token_of(src_tokens, s);
        const auto tt = token_of(tgt_tokens, t);
        if (st >= 0 && tt >= 0) {
          ++links[static_cast<std::size_t>(tt)][static_cast<std::size_t>(st)];
        }
      }
    }
    if (op != EditOp::kIns) ++s;
    if (op != EditOp::kDel) ++t;
  }

  std::vector<std::vector<std::size_t>> assigned(src_tokens.size());
  std::vector<bool> linked(tgt_tokens.size(), false);
  for (std::size_t k = 0; k < tgt_tokens.size(); ++k) {
    std::size_t best = 0, best_count = 0;
    for (const auto& [st, count] : links[k]) {
      if (count > best_count) {
        best = st;
        best_count = count;
      }
    }
    if (best_count > 0) {
      assigned[best].push_back(k);
      linked[k] = true;
    }
  }

  auto text_of = [](std::u32string_view text, const TokenSpan& span) {
    return text.substr(span.begin, span.end - span.begin);
  };
  std::vector<TokenAlignmentRecord> out;
  out.reserve(src_tokens.size());
  for (std::size_t k = 0; k < src_tokens.size(); ++k) {
    const std::u32string_view token = text_of(src, src_tokens[k]);
    TokenAlignmentRecord r;
    r.src_token = to_utf8(token);
    if (assigned[k].empty()) {
      r.cls = TokenClass::kDeletion;
      out.push_back(std::move(r));
      continue;
    }
    std::u32string joined;
    for (std::size_t tt : assigned[k]) {
      if (!joined.empty()) joined.push_back(U' ');
      joined += text_of(tgt, tgt_tokens[tt]);
    }
    r.tgt_token = to_utf8(joined);
    if (comparison_core(token, options.case_fold) ==
        comparison_core(joined, options.case_fold)) {
      r.cls = TokenClass::kIdentical;
    } else if (markers.any_in(token)) {
      r.cls = TokenClass::kAbbrevResolution;
    } else {
      r.cls = TokenClass::kSubstitution;
    }
    out.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < tgt_tokens.size(); ++k) {
    if (!linked[k]) {
      out.push_back({"", to_utf8(text_of(tgt, tgt_tokens[k])),
                     TokenClass::kInsertion});
    }
  }
  return out;
}

// Uses the pair's stored run-length ops.
inline std::vector<TokenAlignmentRecord> align_tokens(
    const AlignedPair& pair, const MarkerTable& markers,
    const TokenOptions& options = {}) {
  return align_tokens(to_u32(pair.src), to_u32(pair.tgt), decode_ops(pair.ops),
                      markers, options);
}

// Fraction of source tokens classed as substitutions.
inline double substitution_fraction(
    const std::vector<TokenAlignmentRecord>& records) {
  std::size_t source_tokens = 0, substitutions = 0;
  for (const auto& r : records) {
    if (r.cls == TokenClass::kInsertion) continue;
    ++source_tokens;
    substitutions += r.cls == TokenClass::kSubstitution;
  }
  return source_tokens == 0 ? 0.0
                            : static_cast<double>(substitutions) /
                                  static_cast<double>(source_tokens);
}

struct LanguageStats {
  std::size_t pairs = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<std::size_t> histogram;  // counts per bin over [0, 1]
};

struct SubstitutionStats {
  std::size_t bins = 10;
  std::map<std::string, LanguageStats> per_language;
  LanguageStats all;
};

// Collects per-pair fractions. merge() is associative and the report does
// not depend on insertion order, so shards can be aggregated in any order.
class SubstitutionAccumulator {
 public:
  void add(const std::string& language, double fraction) {
    fractions_[language].push_back(fraction);
  }

  void merge(const SubstitutionAccumulator& other) {
    for (const auto& [language, values] : other.fractions_) {
      auto& mine = fractions_[language];
      mine.insert(mine.end(), values.begin(), values.end());
    }
  }

  SubstitutionStats report(std::size_t bins = 10) const {
    if (bins == 0) throw Error(ErrorKind::kInvalidArgument, "bins must be >= 1");
    SubstitutionStats out;
    out.bins = bins;
    std::vector<double> everything;
    for (const auto& [language, values] : fractions_) {
      out.per_language[language] = summarize(values, bins);
      everything.insert(everything.end(), values.begin(), values.end());
    }
    out.all = summarize(everything, bins);
    return out;
  }

 private:
  static LanguageStats summarize(std::vector<double> values,
                                 std::size_t bins) {
    LanguageStats s;
    s.histogram.assign(bins, 0);
    s.pairs = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    const std::size_t n = values.size();
    s.median = n % 2 == 1 ? values[n / 2]
                          : (values[n / 2 - 1] + values[n / 2]) / 2.0;
    for (double v : values) {
      auto bin = static_cast<std::size_t>(v * static_cast<double>(bins));
      s.histogram[std::min(bin, bins - 1)]++;
    }
    return s;
  }

  std::map<std::string, std::vector<double>> fractions_;
};

inline SubstitutionStats substitution_stats(
    const std::vector<AlignedPair>& pairs, const MarkerTable& markers,
    std::size_t bins = 10, const TokenOptions& options = {}) {
  SubstitutionAccumulator acc;
  for (const AlignedPair& p : pairs) {
    acc.add(p.language, substitution_fraction(align_tokens(p, markers, options)));
  }
  return acc.report(bins);
}

}  // namespace pen
