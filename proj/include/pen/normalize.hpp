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

// Rule-based normalizer: marker expansion, u/v and i/j regularization,
// capitalization, plus the mechanical task-definition checks that apply to
// any normalizer's output.
//
// All positions are code point indices into the canonically decomposed
// input and output.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pen/abbrev.hpp"
#include "pen/aligner.hpp"
#include "pen/error.hpp"
#include "pen/unicode.hpp"

namespace pen {

// Punctuation as far as the task is concerned: Unicode P* minus abbreviation
// markers (U+204A TIRONIAN SIGN ET is Po but stands for a word).
inline bool is_task_punctuation(char32_t c, const MarkerTable& markers) {
  return is_unicode_punctuation(c) && !markers.contains(c);
}

inline std::map<char32_t, int> punctuation_multiset(std::u32string_view text,
                                                    const MarkerTable& markers) {
  std::map<char32_t, int> out;
  for (char32_t c : text) {
    if (is_task_punctuation(c, markers)) ++out[c];
  }
  return out;
}

namespace detail {

inline bool roman_run(std::u32string_view s, std::size_t& i, char32_t c,
                      std::size_t max) {
  std::size_t n = 0;
  while (i < s.size() && s[i] == c && n < max) ++i, ++n;
  return n > 0;
}

inline bool roman_pair(std::u32string_view s, std::size_t& i, char32_t a,
                       char32_t b) {
  if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
    i += 2;
    return true;
  }
  return false;
}

}  // namespace detail

// Arabic digits (dots allowed between them) or a well-formed roman numeral,
// medieval style: i{0,4} ones and an optional final j standing for i.
inline bool is_numeral_token(std::u32string_view token) {
  std::size_t b = 0, e = token.size();
  while (b < e && is_unicode_punctuation(token[b])) ++b;
  while (e > b && is_unicode_punctuation(token[e - 1])) --e;
  if (b == e) return false;
  const std::u32string core = to_lower(token.substr(b, e - b));
  if (std::all_of(core.begin(), core.end(),
                  [](char32_t c) { return is_digit(c) || c == U'.'; })) {
    return std::any_of(core.begin(), core.end(), is_digit);
  }
  std::u32string s = core;
  if (s.back() == U'j') s.back() = U'i';
  std::size_t i = 0;
  detail::roman_run(s, i, U'm', 4);
  if (!detail::roman_pair(s, i, U'c', U'm') &&
      !detail::roman_pair(s, i, U'c', U'd')) {
    detail::roman_run(s, i, U'd', 1);
    detail::roman_run(s, i, U'c', 4);
  }
  if (!detail::roman_pair(s, i, U'x', U'c') &&
      !detail::roman_pair(s, i, U'x', U'l')) {
    detail::roman_run(s, i, U'l', 1);
    detail::roman_run(s, i, U'x', 4);
  }
  if (!detail::roman_pair(s, i, U'i', U'x') &&
      !detail::roman_pair(s, i, U'i', U'v')) {
    detail::roman_run(s, i, U'v', 1);
    detail::roman_run(s, i, U'i', 4);
  }
  return i == s.size();
}

// A character set used by before= / after= contexts.
struct CharClass {
  bool letter = false;  // any alphabetic character
  std::u32string chars;

  bool matches(char32_t c) const {
    return (letter && is_letter(c)) ||
           chars.find(c) != std::u32string::npos;
  }
  bool operator==(const CharClass&) const = default;
};

struct RuleContext {
  bool initial = false;  // no alphanumeric base character before the match
  bool final = false;    // no alphanumeric base character after the match
  std::optional<CharClass> before;  // next base character after the match
  std::optional<CharClass> after;   // previous base character
  std::string text = "any";

  bool operator==(const RuleContext&) const = default;
};

struct NormalizationRule {
  std::u32string pattern;
  std::u32string replacement;
  RuleContext context;
  std::string language = "*";
  int priority = 0;

  std::string label() const {
    return to_utf8(pattern) + " -> " + to_utf8(replacement) + " [" +
           context.text + ", " + language + ", " + std::to_string(priority) +
           "]";
  }
  bool applies_to(const std::string& lang) const {
    return language == "*" || language == lang;
  }
};

namespace detail {

inline std::u32string unescape_field(const std::string& field) {
  std::u32string out;
  const std::u32string in = to_u32(field);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != U'\\' || i + 1 >= in.size() || in[i + 1] != U'u') {
      out.push_back(in[i]);
      continue;
    }
    if (i + 6 > in.size()) {
      throw Error(ErrorKind::kConfigError, "bad \\u escape in " + field);
    }
    char32_t v = 0;
    for (std::size_t k = i + 2; k < i + 6; ++k) {
      const char32_t h = in[k];
      int d = -1;
      if (h >= U'0' && h <= U'9') d = static_cast<int>(h - U'0');
      if (h >= U'a' && h <= U'f') d = static_cast<int>(h - U'a') + 10;
      if (h >= U'A' && h <= U'F') d = static_cast<int>(h - U'A') + 10;
      if (d < 0) throw Error(ErrorKind::kConfigError, "bad \\u escape in " + field);
      v = v * 16 + static_cast<char32_t>(d);
    }
    out.push_back(v);
    i += 5;
  }
  return canonical_decompose(out);
}

inline CharClass parse_char_class(const std::string& spec) {
  CharClass cls;
  if (spec == "letter") {
    cls.letter = true;
  } else if (spec.size() >= 2 && spec.front() == '[' && spec.back() == ']') {
    cls.chars = unescape_field(spec.substr(1, spec.size() - 2));
  } else {
    throw Error(ErrorKind::kConfigError, "bad character class " + spec);
  }
  return cls;
}

inline RuleContext parse_context(const std::string& text) {
  RuleContext ctx;
  ctx.text = text;
  if (text == "any") return ctx;
  std::stringstream parts(text);
  std::string part;
  while (std::getline(parts, part, '&')) {
    if (part == "initial") {
      ctx.initial = true;
    } else if (part == "final") {
      ctx.final = true;
    } else if (part.rfind("before=", 0) == 0) {
      ctx.before = parse_char_class(part.substr(7));
    } else if (part.rfind("after=", 0) == 0) {
      ctx.after = parse_char_class(part.substr(6));
    } else {
      throw Error(ErrorKind::kConfigError, "bad rule context " + text);
    }
  }
  return ctx;
}

}  // namespace detail

// Default rule table; data/rules.tsv carries the same rows.
inline constexpr std::string_view kDefaultRuleTable =
    R"(# pen-rules 1
# pattern	replacement	context	language	priority
# Fields may use \uXXXX escapes. Contexts: any, initial, final,
# before=[chars], before=letter, after=[chars], joined with '&'.
\u0303	m	before=[bpm]	*	10
\u0303	n	any	*	0
\u0304	m	before=[bpm]	*	10
\u0304	n	any	*	0
q\u0303	que	any	*	20
Q\u0303	Que	any	*	20
ꝯ	com	before=[bpm]	*	10
ꝯ	con	any	*	0
Ꝯ	Com	before=[bpm]	*	10
Ꝯ	Con	any	*	0
9	com	initial&before=[bpm]	*	10
9	con	initial&before=letter	*	5
ꝰ	us	any	*	0
⁊	et	any	*	0
ł	vel	initial&final	la	10
ł	ol	any	*	0
Ł	Ol	any	*	0
q\u0365	qui	any	*	20
q\u0363	qua	any	*	20
q\u0366	quo	any	*	20
Q\u0365	Qui	any	*	20
Q\u0363	Qua	any	*	20
Q\u0366	Quo	any	*	20
\u1DD1	ur	any	*	0
\u1DD2	us	any	*	0
\u033E	er	any	*	0
ꝝ	rum	any	*	0
ꝫ	us	after=[b]	*	10
ꝫ	et	any	*	0
ꝑ	per	any	*	0
Ꝑ	Per	any	*	0
ꝓ	pro	any	*	0
Ꝓ	Pro	any	*	0
ꝭ	is	any	*	0
@ramist-exception	ii
@ramist-exception	iis
@ramist-exception	iidem
@ramist-exception	iisdem
@proper-name	Christus
@proper-name	Iesus
@proper-name	Jesus
@proper-name	Maria
@proper-name	Petrus
@proper-name	Paulus
@proper-name	Roma
@proper-name	Parisius
@proper-name	Francia
)";

class RuleSet {
 public:
  static constexpr int kVersion = 1;

  RuleSet() = default;
  RuleSet(std::vector<NormalizationRule> rules,
          std::set<std::u32string> ramist_exceptions,
          std::map<std::u32string, std::u32string> proper_names,
          const MarkerTable& markers = MarkerTable::defaults())
      : rules_(std::move(rules)),
        ramist_exceptions_(std::move(ramist_exceptions)),
        proper_names_(std::move(proper_names)),
        markers_(markers) {
    validate();
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      by_first_[rules_[i].pattern.front()].push_back(i);
    }
    for (auto& [first, list] : by_first_) {
      std::stable_sort(list.begin(), list.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (rules_[a].priority != rules_[b].priority) {
                           return rules_[a].priority > rules_[b].priority;
                         }
                         return rules_[a].pattern.size() >
                                rules_[b].pattern.size();
                       });
    }
  }

  static RuleSet parse(std::string_view text,
                       const MarkerTable& markers = MarkerTable::defaults()) {
    std::vector<NormalizationRule> rules;
    std::set<std::u32string> exceptions;
    std::map<std::u32string, std::u32string> names;
    std::istringstream in{std::string(text)};
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("# pen-rules ", 0) == 0) {
        if (std::stoi(line.substr(12)) != kVersion) {
          throw Error(ErrorKind::kConfigError,
                      "unsupported rule table version: " + line);
        }
        saw_header = true;
        continue;
      }
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> fields;
      std::stringstream split(line);
      std::string field;
      while (std::getline(split, field, '\t')) fields.push_back(field);
      const std::string where = " on line " + std::to_string(line_no);
      if (fields[0] == "@ramist-exception" && fields.size() == 2) {
        exceptions.insert(to_lower(detail::unescape_field(fields[1])));
        continue;
      }
      if (fields[0] == "@proper-name" && fields.size() == 2) {
        const std::u32string name = detail::unescape_field(fields[1]);
        names[to_lower(name)] = name;
        continue;
      }
      if (fields.size() != 5) {
        throw Error(ErrorKind::kConfigError, "expected 5 fields" + where);
      }
      NormalizationRule r;
      r.pattern = detail::unescape_field(fields[0]);
      r.replacement = detail::unescape_field(fields[1]);
      r.context = detail::parse_context(fields[2]);
      r.language = fields[3];
      try {
        r.priority = std::stoi(fields[4]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::kConfigError, "bad priority" + where);
      }
      if (r.pattern.empty()) {
        throw Error(ErrorKind::kConfigError, "empty pattern" + where);
      }
      rules.push_back(std::move(r));
    }
    if (!saw_header) {
      throw Error(ErrorKind::kConfigError,
                  "rule table lacks a '# pen-rules' version header");
    }
    return RuleSet(std::move(rules), std::move(exceptions), std::move(names),
                   markers);
  }

  static RuleSet load(const std::string& path,
                      const MarkerTable& markers = MarkerTable::defaults()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kMissingInput, "cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), markers);
  }

  static const RuleSet& defaults() {
    static const RuleSet set = parse(kDefaultRuleTable);
    return set;
  }

  const std::vector<NormalizationRule>& rules() const { return rules_; }
  const std::set<std::u32string>& ramist_exceptions() const {
    return ramist_exceptions_;
  }
  const std::map<std::u32string, std::u32string>& proper_names() const {
    return proper_names_;
  }
  const MarkerTable& markers() const { return markers_; }

  // Candidate rule indices for a pattern starting with `c`, best first.
  const std::vector<std::size_t>* starting_with(char32_t c) const {
    auto it = by_first_.find(c);
    return it == by_first_.end() ? nullptr : &it->second;
  }

  bool same_content(const RuleSet& other) const {
    if (rules_.size() != other.rules_.size()) return false;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& a = rules_[i];
      const auto& b = other.rules_[i];
      if (a.pattern != b.pattern || a.replacement != b.replacement ||
          !(a.context == b.context) || a.language != b.language ||
          a.priority != b.priority) {
        return false;
      }
    }
    return ramist_exceptions_ == other.ramist_exceptions_ &&
           proper_names_ == other.proper_names_;
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const NormalizationRule& r = rules_[i];
      if (punctuation_multiset(r.pattern, markers_) !=
          punctuation_multiset(r.replacement, markers_)) {
        throw Error(ErrorKind::kRuleConflict,
                    "rule changes punctuation: " + r.label());
      }
      for (const NormalizationRule& other : rules_) {
        if (r.replacement.find(other.pattern) != std::u32string::npos) {
          throw Error(ErrorKind::kRuleConflict,
                      "replacement of " + r.label() + " contains the pattern of " +
                          other.label());
        }
      }
      for (std::size_t j = i + 1; j < rules_.size(); ++j) {
        const NormalizationRule& o = rules_[j];
        const bool languages_overlap = r.language == "*" || o.language == "*" ||
                                       r.language == o.language;
        if (r.pattern == o.pattern && r.priority == o.priority &&
            languages_overlap) {
          throw Error(ErrorKind::kRuleConflict,
                      "rules overlap at equal priority: " + r.label() +
                          " and " + o.label());
        }
      }
    }
  }

  std::vector<NormalizationRule> rules_;
  std::set<std::u32string> ramist_exceptions_;
  std::map<std::u32string, std::u32string> proper_names_;
  MarkerTable markers_;
  std::unordered_map<char32_t, std::vector<std::size_t>> by_first_;
};

// A provenance link: input span [in) became output span [out). Rule -1 marks
// a copied or case/ramist-adjusted character; opaque links come from
// external normalizers.
struct ProvenanceLink {
  Span input;
  Span output;
  int rule = -1;
  bool operator==(const ProvenanceLink&) const = default;
};

struct AppliedRule {
  std::size_t rule = 0;
  Span input;
  bool operator==(const AppliedRule&) const = default;
};

struct NormalizerResult {
  std::string text;  // canonically decomposed UTF-8
  std::vector<ProvenanceLink> spans;
  std::vector<AppliedRule> applied_rules;
  bool opaque = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool is_alnum(char32_t c) { return is_letter(c) || is_digit(c); }

// Previous / next character that is not a combining mark.
inline std::optional<char32_t> base_before(std::u32string_view t,
                                           std::size_t i) {
  while (i > 0) {
    --i;
    if (!is_combining_mark(t[i])) return t[i];
  }
  return std::nullopt;
}

inline std::optional<char32_t> base_from(std::u32string_view t,
                                         std::size_t i) {
  for (; i < t.size(); ++i) {
    if (!is_combining_mark(t[i])) return t[i];
  }
  return std::nullopt;
}

inline bool context_holds(const RuleContext& ctx, std::u32string_view t,
                          std::size_t begin, std::size_t end) {
  const auto prev = base_before(t, begin);
  const auto next = base_from(t, end);
  if (ctx.initial && prev && is_alnum(*prev)) return false;
  if (ctx.final && next && is_alnum(*next)) return false;
  if (ctx.before && (!next || !ctx.before->matches(*next))) return false;
  if (ctx.after && (!prev || !ctx.after->matches(*prev))) return false;
  return true;
}

inline bool is_vowel(char32_t c) {
  switch (to_lower(c)) {
    case U'a': case U'e': case U'i': case U'o': case U'u': case U'y':
      return true;
    default:
      return false;
  }
}

inline char32_t with_case_of(char32_t source, char32_t lower) {
  return is_upper(source) ? to_upper(lower) : lower;
}

// u/v and i/j by position inside one word (letters and marks only).
// Consonantal u: word-initial or after a vowel, and before a vowel.
// Consonantal i: word-initial and before a vowel.
// The following letter is read from a skeleton with v->u and j->i, so the
// result does not depend on how the input already spelled those letters.
inline void ramist_word(std::u32string& t, std::size_t begin, std::size_t end) {
  std::u32string skeleton(t.begin() + static_cast<long>(begin),
                          t.begin() + static_cast<long>(end));
  for (char32_t& c : skeleton) {
    const char32_t l = to_lower(c);
    if (l == U'v') c = with_case_of(c, U'u');
    if (l == U'j') c = with_case_of(c, U'i');
  }
  auto prev_base = [&](std::size_t i) -> std::optional<char32_t> {
    while (i > begin) {
      --i;
      if (!is_combining_mark(t[i])) return t[i];
    }
    return std::nullopt;
  };
  auto next_base = [&](std::size_t i) -> std::optional<char32_t> {
    for (++i; i < end; ++i) {
      if (!is_combining_mark(skeleton[i - begin])) return skeleton[i - begin];
    }
    return std::nullopt;
  };
  for (std::size_t i = begin; i < end; ++i) {
    const char32_t lower = to_lower(skeleton[i - begin]);
    if (lower != U'u' && lower != U'i') continue;
    const auto prev = prev_base(i);
    const auto next = next_base(i);
    const bool before_vowel = next && is_vowel(*next);
    if (lower == U'u') {
      const bool consonantal = before_vowel && (!prev || is_vowel(*prev));
      t[i] = with_case_of(t[i], consonantal ? U'v' : U'u');
    } else {
      t[i] = with_case_of(t[i], !prev && before_vowel ? U'j' : U'i');
    }
  }
}

struct TokenRange {
  std::size_t begin;
  std::size_t end;
};

inline std::vector<TokenRange> whitespace_tokens(std::u32string_view t) {
  std::vector<TokenRange> out;
  for (const TokenSpan& s : token_spans(t)) out.push_back({s.begin, s.end});
  return out;
}

inline bool is_strong_punctuation(char32_t c) {
  return c == U'.' || c == U'?' || c == U'!';
}

// A single letter followed by a period, e.g. "S.".
inline bool is_initial_token(std::u32string_view token) {
  std::size_t letters = 0, i = 0;
  while (i < token.size() && is_unicode_punctuation(token[i]) &&
         token[i] != U'.') {
    ++i;
  }
  if (i < token.size() && is_letter(token[i])) {
    ++letters;
    ++i;
  }
  while (i < token.size() && is_combining_mark(token[i])) ++i;
  return letters == 1 && i < token.size() && token[i] == U'.' &&
         i + 1 == token.size();
}

}  // namespace detail

// Marker expansion to a fixpoint: each round rewrites left to right, taking
// the best applicable rule at each position; rounds repeat while any rule
// fired (contexts may depend on text produced by an earlier expansion).
class RuleNormalizer {
 public:
  explicit RuleNormalizer(const RuleSet& rules = RuleSet::defaults(),
                          bool capitalize = true)
      : rules_(rules), capitalize_(capitalize) {}

  NormalizerResult normalize(std::string_view text,
                             const std::string& language) const {
    const std::u32string input = canonical_decompose(to_u32(text));
    std::u32string t = input;
    std::vector<Span> origin(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) origin[i] = {i, i + 1};
    NormalizerResult result;

    for (int round = 0; round < kMaxRounds; ++round) {
      if (!expand_round(t, origin, language, result)) break;
    }
    ramist(t);
    if (capitalize_) capitalize(t);

    result.text = to_utf8(t);
    result.spans = build_links(input.size(), t.size(), origin, result);
    return result;
  }

  const RuleSet& rules() const { return rules_; }

 private:
  static constexpr int kMaxRounds = 16;

  bool expand_round(std::u32string& t, std::vector<Span>& origin,
                    const std::string& language,
                    NormalizerResult& result) const {
    std::u32string out;
    std::vector<Span> out_origin;
    out.reserve(t.size());
    bool fired = false;
    std::size_t i = 0;
    while (i < t.size()) {
      const NormalizationRule* chosen = nullptr;
      std::size_t chosen_index = 0;
      if (const auto* candidates = rules_.starting_with(t[i])) {
        for (std::size_t idx : *candidates) {
          const NormalizationRule& r = rules_.rules()[idx];
          if (!r.applies_to(language)) continue;
          if (t.compare(i, r.pattern.size(), r.pattern) != 0) continue;
          if (!detail::context_holds(r.context, t, i, i + r.pattern.size())) {
            continue;
          }
          chosen = &r;
          chosen_index = idx;
          break;
        }
      }
      if (chosen == nullptr) {
        out.push_back(t[i]);
        out_origin.push_back(origin[i]);
        ++i;
        continue;
      }
      const std::size_t end = i + chosen->pattern.size();
      const Span from{origin[i].begin, origin[end - 1].end};
      for (char32_t c : chosen->replacement) {
        out.push_back(c);
        out_origin.push_back(from);
      }
      result.applied_rules.push_back({chosen_index, from});
      fired = true;
      i = end;
    }
    if (fired) {
      // Marks may now follow new base letters; restore canonical order.
      canonical_order(out, &out_origin);
      t = std::move(out);
      origin = std::move(out_origin);
    }
    return fired;
  }

  void ramist(std::u32string& t) const {
    for (const detail::TokenRange& tok : detail::whitespace_tokens(t)) {
      const std::u32string_view view(t.data() + tok.begin, tok.end - tok.begin);
      if (is_numeral_token(view)) continue;
      std::size_t i = tok.begin;
      while (i < tok.end) {
        if (!is_letter(t[i])) {
          ++i;
          continue;
        }
        std::size_t j = i;
        while (j < tok.end && (is_letter(t[j]) || is_combining_mark(t[j]))) ++j;
        const std::u32string word = to_lower(t.substr(i, j - i));
        if (rules_.ramist_exceptions().count(word) == 0) {
          detail::ramist_word(t, i, j);
        }
        i = j;
      }
    }
  }

  void capitalize(std::u32string& t) const {
    const auto tokens = detail::whitespace_tokens(t);
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      const auto& tok = tokens[k];
      const std::u32string_view view(t.data() + tok.begin, tok.end - tok.begin);
      if (is_numeral_token(view)) continue;
      std::size_t first = tok.begin;
      while (first < tok.end && !is_letter(t[first])) {
        if (!is_unicode_punctuation(t[first])) break;
        ++first;
      }
      if (first == tok.end || !is_letter(t[first])) continue;

      bool upper = false;
      if (k > 0) {
        const auto& prev = tokens[k - 1];
        const std::u32string_view pv(t.data() + prev.begin,
                                     prev.end - prev.begin);
        std::size_t e = pv.size();
        while (e > 0 && is_unicode_punctuation(pv[e - 1]) &&
               !detail::is_strong_punctuation(pv[e - 1])) {
          --e;  // closing quotes and brackets
        }
        upper = e > 0 && detail::is_strong_punctuation(pv[e - 1]) &&
                !detail::is_initial_token(pv) && !is_numeral_token(pv);
      }
      std::size_t core_end = tok.end;
      while (core_end > first && is_unicode_punctuation(t[core_end - 1])) {
        --core_end;
      }
      const std::u32string core = to_lower(t.substr(first, core_end - first));
      if (rules_.proper_names().count(core)) upper = true;
      if (upper) t[first] = to_upper(t[first]);
    }
  }

  std::vector<ProvenanceLink> build_links(std::size_t input_size,
                                          std::size_t output_size,
                                          const std::vector<Span>& origin,
                                          const NormalizerResult& result) const {
    std::vector<ProvenanceLink> links;
    for (std::size_t o = 0; o < output_size; ++o) {
      const Span& from = origin[o];
      if (!links.empty() && from.begin < links.back().input.end) {
        links.back().input.begin = std::min(links.back().input.begin, from.begin);
        links.back().input.end = std::max(links.back().input.end, from.end);
        links.back().output.end = o + 1;
        continue;
      }
      links.push_back({from, {o, o + 1}, -1});
    }
    // Inputs with no output (empty replacements) get empty output spans.
    std::vector<ProvenanceLink> full;
    std::size_t at = 0;
    for (const ProvenanceLink& l : links) {
      if (l.input.begin > at) {
        full.push_back({{at, l.input.begin}, {l.output.begin, l.output.begin}, -1});
      }
      full.push_back(l);
      at = l.input.end;
    }
    if (at < input_size) {
      full.push_back({{at, input_size}, {output_size, output_size}, -1});
    }
    // Attach the rule that produced each link, when exactly one did.
    for (ProvenanceLink& l : full) {
      for (const AppliedRule& a : result.applied_rules) {
        if (a.input.begin >= l.input.begin && a.input.end <= l.input.end) {
          l.rule = static_cast<int>(a.rule);
        }
      }
    }
    return full;
  }

  const RuleSet& rules_;
  bool capitalize_;
};

inline NormalizerResult normalize_rules(std::string_view text,
                                        const RuleSet& rules,
                                        const std::string& language) {
  return RuleNormalizer(rules).normalize(text, language);
}

// ---------------------------------------------------------------------------
// Task-definition checks.

enum class ViolationKind {
  kPunctuationAdded,
  kPunctuationRemoved,
  kNumeralAltered,
  kInitialExpanded,
  kLengthRatio,
  kAmbiguousForm,
};

inline const char* violation_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::kPunctuationAdded: return "punctuation-added";
    case ViolationKind::kPunctuationRemoved: return "punctuation-removed";
    case ViolationKind::kNumeralAltered: return "numeral-altered";
    case ViolationKind::kInitialExpanded: return "initial-expanded";
    case ViolationKind::kLengthRatio: return "length-ratio";
    case ViolationKind::kAmbiguousForm: return "ambiguous-form";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
  bool operator==(const Violation&) const = default;
};

struct TaskCheckOptions {
  double max_length_ratio = 3.0;
  // Source tokens with more than one defensible expansion (e.g. "młt" for
  // molt / moult); a change to such a token is flagged for review.
  std::set<std::string> ambiguous_forms = {"młt"};
};

namespace detail {

inline std::vector<std::u32string> token_texts(std::u32string_view t) {
  std::vector<std::u32string> out;
  for (const TokenSpan& s : token_spans(t)) {
    out.emplace_back(t.substr(s.begin, s.end - s.begin));
  }
  return out;
}

inline std::u32string strip_punctuation(std::u32string_view token) {
  std::size_t b = 0, e = token.size();
  while (b < e && is_unicode_punctuation(token[b])) ++b;
  while (e > b && is_unicode_punctuation(token[e - 1])) --e;
  return std::u32string(token.substr(b, e - b));
}

// Each wanted token must appear among `have`, in order.
template <typename Eq>
inline std::vector<std::u32string> missing_in_order(
    const std::vector<std::u32string>& wanted,
    const std::vector<std::u32string>& have, Eq eq) {
  std::vector<std::u32string> missing;
  std::size_t h = 0;
  for (const std::u32string& w : wanted) {
    std::size_t k = h;
    while (k < have.size() && !eq(w, have[k])) ++k;
    if (k == have.size()) {
      missing.push_back(w);
    } else {
      h = k + 1;
    }
  }
  return missing;
}

}  // namespace detail

inline std::vector<Violation> validate_against_task(
    std::string_view output_text, std::string_view source_text,
    const TaskCheckOptions& options = {},
    const MarkerTable& markers = MarkerTable::defaults()) {
  const std::u32string src = canonical_decompose(to_u32(source_text));
  const std::u32string out = canonical_decompose(to_u32(output_text));
  std::vector<Violation> v;

  const auto ps = punctuation_multiset(src, markers);
  const auto po = punctuation_multiset(out, markers);
  for (const auto& [c, n] : po) {
    const auto it = ps.find(c);
    const int have = it == ps.end() ? 0 : it->second;
    if (n > have) {
      v.push_back({ViolationKind::kPunctuationAdded,
                   to_utf8(std::u32string(1, c)) + " x" + std::to_string(n - have)});
    }
  }
  for (const auto& [c, n] : ps) {
    const auto it = po.find(c);
    const int have = it == po.end() ? 0 : it->second;
    if (n > have) {
      v.push_back({ViolationKind::kPunctuationRemoved,
                   to_utf8(std::u32string(1, c)) + " x" + std::to_string(n - have)});
    }
  }

  const auto src_tokens = detail::token_texts(src);
  const auto out_tokens = detail::token_texts(out);
  std::vector<std::u32string> out_cores;
  for (const auto& t : out_tokens) out_cores.push_back(detail::strip_punctuation(t));

  std::vector<std::u32string> numerals, initials;
  for (const auto& t : src_tokens) {
    if (is_numeral_token(t)) numerals.push_back(detail::strip_punctuation(t));
    if (detail::is_initial_token(t)) initials.push_back(detail::strip_punctuation(t));
  }
  for (const auto& m : detail::missing_in_order(
           numerals, out_cores,
           [](const std::u32string& a, const std::u32string& b) { return a == b; })) {
    v.push_back({ViolationKind::kNumeralAltered, to_utf8(m)});
  }
  for (const auto& m : detail::missing_in_order(
           initials, out_cores,
           [](const std::u32string& a, const std::u32string& b) {
             return to_lower(a) == to_lower(b);
           })) {
    v.push_back({ViolationKind::kInitialExpanded, to_utf8(m) + "."});
  }

  if (!src.empty() && static_cast<double>(out.size()) >
                          options.max_length_ratio *
                              static_cast<double>(src.size())) {
    v.push_back({ViolationKind::kLengthRatio,
                 std::to_string(out.size()) + "/" + std::to_string(src.size())});
  }

  std::vector<std::u32string> ambiguous;
  for (const auto& t : src_tokens) {
    const std::u32string core = detail::strip_punctuation(t);
    if (options.ambiguous_forms.count(canonical_decompose_utf8(to_utf8(core))) ||
        options.ambiguous_forms.count(to_utf8(canonical_compose(core)))) {
      ambiguous.push_back(core);
    }
  }
  for (const auto& m : detail::missing_in_order(
           ambiguous, out_cores,
           [](const std::u32string& a, const std::u32string& b) { return a == b; })) {
    v.push_back({ViolationKind::kAmbiguousForm, to_utf8(canonical_compose(m))});
  }
  return v;
}

inline std::vector<Violation> validate_against_task(
    const NormalizerResult& result, std::string_view source_text,
    const TaskCheckOptions& options = {},
    const MarkerTable& markers = MarkerTable::defaults()) {
  return validate_against_task(result.text, source_text, options, markers);
}

}  // namespace pen
