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

// JSON records and line-delimited files.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pen/abbrev.hpp"
#include "pen/aligner.hpp"
#include "pen/error.hpp"
#include "pen/fingerprint.hpp"
#include "pen/metrics.hpp"
#include "pen/normalize.hpp"
#include "pen/pairbuilder.hpp"
#include "pen/textprep.hpp"

namespace pen {

using Json = nlohmann::json;

// A whole edited work, as supplied; the pipeline cuts it into passages.
struct EditionRecord {
  std::string work_id;
  std::string text;
  std::string language;
  Json metadata = Json::object();
};

namespace detail {

template <typename T>
T required(const Json& j, const char* key) {
  if (!j.contains(key)) {
    throw Error(ErrorKind::kFormatError, std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::kFormatError, std::string("bad type for field '") + key + "'");
  }
}

template <typename T>
T optional_field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::kFormatError, std::string("bad type for field '") + key + "'");
  }
}

}  // namespace detail

// --- input records ---------------------------------------------------------

inline void to_json(Json& j, const SourceLine& l) { j = Json{{"text", l.text}, {"zone", l.zone}}; }
inline void from_json(const Json& j, SourceLine& l) {
  l.text = detail::required<std::string>(j, "text");
  l.zone = detail::optional_field<std::string>(j, "zone", "main");
}

inline void to_json(Json& j, const SourcePage& p) {
  j = Json{{"doc_id", p.doc_id}, {"page_id", p.page_id}, {"lines", p.lines}};
  if (p.language) j["language"] = *p.language;
}
inline void from_json(const Json& j, SourcePage& p) {
  p.doc_id = detail::required<std::string>(j, "doc_id");
  p.page_id = detail::required<std::string>(j, "page_id");
  p.lines = detail::required<std::vector<SourceLine>>(j, "lines");
  if (j.contains("language") && j["language"].is_string()) {
    p.language = j["language"].get<std::string>();
  } else {
    p.language.reset();
  }
}

inline void to_json(Json& j, const EditionRecord& e) {
  j = Json{{"work_id", e.work_id}, {"text", e.text}, {"language", e.language},
           {"metadata", e.metadata}};
}
inline void from_json(const Json& j, EditionRecord& e) {
  e.work_id = detail::required<std::string>(j, "work_id");
  e.text = detail::required<std::string>(j, "text");
  e.metadata = j.contains("metadata") ? j["metadata"] : Json::object();
  e.language = detail::optional_field<std::string>(
      j, "language", detail::optional_field<std::string>(e.metadata, "language", ""));
}

inline void to_json(Json& j, const EditionPassage& p) {
  j = Json{{"work_id", p.work_id}, {"passage_id", p.passage_id}, {"text", p.text},
           {"char_offset", p.char_offset}, {"language", p.language}};
}
inline void from_json(const Json& j, EditionPassage& p) {
  p.work_id = detail::required<std::string>(j, "work_id");
  p.passage_id = detail::required<std::string>(j, "passage_id");
  p.text = detail::required<std::string>(j, "text");
  p.char_offset = detail::optional_field<int64_t>(j, "char_offset", 0);
  p.language = detail::optional_field<std::string>(j, "language", "");
}

// --- alignment and pairs ---------------------------------------------------

inline void to_json(Json& j, const Span& s) { j = Json::array({s.begin, s.end}); }
inline void from_json(const Json& j, Span& s) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::kFormatError, "span must be [begin, end]");
  s.begin = j[0].get<std::size_t>();
  s.end = j[1].get<std::size_t>();
}

inline void to_json(Json& j, const AlignSegment& s) {
  j = Json{{"src", s.src}, {"tgt", s.tgt}, {"ops", encode_ops(s.ops)}};
}
inline void from_json(const Json& j, AlignSegment& s) {
  s.src = detail::required<Span>(j, "src");
  s.tgt = detail::required<Span>(j, "tgt");
  s.ops = decode_ops(detail::required<std::string>(j, "ops"));
}

inline void to_json(Json& j, const CharAlignment& a) {
  j = Json{{"page", a.page_ref},          {"passage", a.passage_ref},
           {"work_id", a.work_id},        {"segments", a.segments},
           {"score", a.score},            {"matched_chars", a.matched_chars},
           {"covered_chars", a.covered_chars}, {"match_rate", a.match_rate}};
}
inline void from_json(const Json& j, CharAlignment& a) {
  a.page_ref = detail::required<std::string>(j, "page");
  a.passage_ref = detail::required<std::string>(j, "passage");
  a.work_id = detail::optional_field<std::string>(j, "work_id", "");
  a.segments = detail::required<std::vector<AlignSegment>>(j, "segments");
  a.score = detail::optional_field<double>(j, "score", 0.0);
  tally(a);
}

inline void to_json(Json& j, const PairLineage& l) {
  j = Json{{"doc_id", l.doc_id},         {"page_id", l.page_id},
           {"work_id", l.work_id},       {"passage_id", l.passage_id},
           {"src_span", l.src_span},     {"tgt_span", l.tgt_span}};
}
inline void from_json(const Json& j, PairLineage& l) {
  l.doc_id = detail::required<std::string>(j, "doc_id");
  l.page_id = detail::required<std::string>(j, "page_id");
  l.work_id = detail::required<std::string>(j, "work_id");
  l.passage_id = detail::required<std::string>(j, "passage_id");
  l.src_span = detail::optional_field<Span>(j, "src_span", {});
  l.tgt_span = detail::optional_field<Span>(j, "tgt_span", {});
}

inline void to_json(Json& j, const AlignedPair& p) {
  j = Json{{"id", p.id},
           {"src", p.src},
           {"tgt", p.tgt},
           {"src_bytes", p.src_bytes},
           {"match_rate", p.match_rate},
           {"ops", p.ops},
           {"lineage", p.lineage},
           {"language", p.language}};
}
inline void from_json(const Json& j, AlignedPair& p) {
  p.id = detail::required<std::string>(j, "id");
  p.src = detail::required<std::string>(j, "src");
  p.tgt = detail::required<std::string>(j, "tgt");
  p.src_bytes = detail::optional_field<std::size_t>(j, "src_bytes", p.src.size());
  p.match_rate = detail::optional_field<double>(j, "match_rate", 0.0);
  p.ops = detail::optional_field<std::string>(j, "ops", "");
  p.lineage = detail::required<PairLineage>(j, "lineage");
  p.language = detail::optional_field<std::string>(j, "language", "");
}

inline void to_json(Json& j, const CandidatePair& c) {
  j = Json{{"page", c.page_ref}, {"passage", c.passage_ref}, {"shared_grams", c.shared_grams}};
}
inline void from_json(const Json& j, CandidatePair& c) {
  c.page_ref = detail::required<std::string>(j, "page");
  c.passage_ref = detail::required<std::string>(j, "passage");
  c.shared_grams = detail::optional_field<std::size_t>(j, "shared_grams", 0);
}

// --- reports ---------------------------------------------------------------

inline void to_json(Json& j, const EditScores& s) {
  j = Json{{"cer", s.cer}, {"wer", s.wer}, {"cer_pct", percent(s.cer)},
           {"wer_pct", percent(s.wer)}, {"samples", s.samples}};
}
inline void to_json(Json& j, const EditReport& r) {
  j = Json{{"aggregation", r.macro ? "macro" : "micro"},
           {"all", r.all},
           {"per_language", r.per_language}};
}
inline void to_json(Json& j, const BowReport& b) {
  j = Json{{"tp", b.tp},
           {"gold", b.gold},
           {"pred", b.pred},
           {"precision", b.precision},
           {"recall", b.recall},
           {"f1", b.f1},
           {"precision_pct", percent(b.precision)},
           {"recall_pct", percent(b.recall)},
           {"f1_pct", percent(b.f1)}};
}
inline void to_json(Json& j, const EvalReport& r) {
  j = Json{{"edit", r.edit}, {"bow", r.bow}, {"bow_per_language", r.bow_per_language}};
}
inline void to_json(Json& j, const LanguageStats& s) {
  j = Json{{"pairs", s.pairs},
           {"mean", s.mean},
           {"median", s.median},
           {"mean_pct", percent(s.mean)},
           {"median_pct", percent(s.median)},
           {"histogram", s.histogram}};
}
inline void to_json(Json& j, const SubstitutionStats& s) {
  j = Json{{"bins", s.bins}, {"all", s.all}, {"per_language", s.per_language}};
}

inline void from_json(const Json& j, EvalRecord& r) {
  r.id = detail::optional_field<std::string>(j, "id", "");
  r.gold = detail::required<std::string>(j, "gold");
  r.pred = detail::required<std::string>(j, "pred");
  r.language = detail::optional_field<std::string>(j, "language", "");
  r.labels.clear();
  if (j.contains("labels")) {
    for (const auto& [layer, v] : j["labels"].items()) {
      LabelLayer l;
      l.gold = detail::required<std::vector<std::string>>(v, "gold");
      l.pred = detail::required<std::vector<std::string>>(v, "pred");
      r.labels[layer] = std::move(l);
    }
  }
}

inline void to_json(Json& j, const Violation& v) {
  j = Json{{"kind", violation_name(v.kind)}, {"detail", v.detail}};
}

// --- files -----------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingInput, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kMissingInput, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(ErrorKind::kMissingInput, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

// Calls `fn` for each non-blank line parsed as JSON. Parse and field errors
// name the file and line.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingInput, "cannot open " + path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kFormatError,
                  path + ":" + std::to_string(n) + ": " + e.what());
    }
    try {
      fn(j, n);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kFormatError) throw;
      throw Error(ErrorKind::kFormatError, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  std::vector<T> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t) {
    try {
      out.push_back(j.get<T>());
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kFormatError, e.what());
    }
  });
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& records) {
  std::string out;
  for (const T& r : records) {
    out += Json(r).dump();
    out.push_back('\n');
  }
  return out;
}

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
  write_file_atomic(path, to_jsonl(records));
}

}  // namespace pen
