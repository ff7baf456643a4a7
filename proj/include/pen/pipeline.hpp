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

// Batch pipeline: prep -> index -> candidates -> align -> pairs -> analyze,
// and pairs -> normalize -> eval. Each stage writes into
// <workdir>/<stage>-<hash>, where the hash covers the stage's parameters,
// its input file contents and the upstream stage's hash. Data files are
// deterministic; wall time is only printed and written to timing.json.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "pen/abbrev.hpp"
#include "pen/aligner.hpp"
#include "pen/error.hpp"
#include "pen/external.hpp"
#include "pen/fingerprint.hpp"
#include "pen/io.hpp"
#include "pen/metrics.hpp"
#include "pen/normalize.hpp"
#include "pen/pairbuilder.hpp"
#include "pen/textprep.hpp"

namespace pen {

enum class Stage { kPrep, kIndex, kCandidates, kAlign, kPairs, kAnalyze, kNormalize, kEval };

inline constexpr Stage kAllStages[] = {Stage::kPrep,  Stage::kIndex,   Stage::kCandidates,
                                       Stage::kAlign, Stage::kPairs,   Stage::kAnalyze,
                                       Stage::kNormalize, Stage::kEval};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kPrep: return "prep";
    case Stage::kIndex: return "index";
    case Stage::kCandidates: return "candidates";
    case Stage::kAlign: return "align";
    case Stage::kPairs: return "pairs";
    case Stage::kAnalyze: return "analyze";
    case Stage::kNormalize: return "normalize";
    case Stage::kEval: return "eval";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(const std::string& name) {
  for (Stage s : kAllStages) {
    if (name == stage_name(s)) return s;
  }
  return std::nullopt;
}

struct NormalizerConfig {
  std::string kind = "rules";  // rules | identity | external
  std::string rules;           // rule table path; empty = built-in table
  bool capitalize = true;
  std::vector<std::string> command;  // external subprocess argv
  std::string url;                   // external HTTP endpoint
  int timeout_ms = 30000;
  std::size_t concurrency = 4;
};

struct PipelineConfig {
  std::string pages;
  std::string editions;
  std::string workdir = "work";
  std::string markers;  // marker table path; empty = built-in table
  std::set<std::string> zones = default_main_zones();
  std::size_t passage_chars = 4000;
  std::size_t passage_overlap = 2000;
  std::size_t gram_n = 10;
  std::size_t doc_freq_cap = 100;
  std::size_t min_shared_grams = 5;
  std::size_t max_candidates_per_page = 5;  // strongest by shared grams; 0 = all
  AlignParams align;
  FilterPolicy filter;
  ChunkBounds chunk;
  std::map<std::string, int> upsample;
  uint64_t seed = 0;
  std::size_t analysis_bins = 10;
  bool case_fold = false;
  NormalizerConfig normalizer;
  std::string eval_input;  // optional {id,gold,pred,language,labels} JSONL
  EvalOptions eval;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfigError, what); };
    if (passage_chars == 0) fail("passage_chars must be >= 1");
    if (passage_overlap >= passage_chars) fail("passage_overlap must be < passage_chars");
    if (gram_n < 2) fail("gram_n must be >= 2");
    if (doc_freq_cap == 0) fail("doc_freq_cap must be >= 1");
    if (analysis_bins == 0) fail("analysis_bins must be >= 1");
    if (eval.mfw_k == 0) fail("eval.mfw_k must be >= 1");
    if (eval.ngram_n == 0) fail("eval.ngram_n must be >= 1");
    if (chunk.min_bytes == 0 || chunk.min_bytes > chunk.max_bytes) fail("bad chunk byte bounds");
    for (const auto& [lang, f] : upsample) {
      if (f < 1) fail("upsample factor for " + lang + " must be >= 1");
    }
    try {
      align.validate();
      filter.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
    const std::string& k = normalizer.kind;
    if (k != "rules" && k != "identity" && k != "external") {
      fail("normalizer.kind must be rules, identity or external");
    }
    if (k == "external") {
      if (normalizer.command.empty() == normalizer.url.empty()) {
        fail("external normalizer needs exactly one of command or url");
      }
      if (normalizer.timeout_ms <= 0) fail("normalizer.timeout_ms must be positive");
    }
  }

  // Unknown keys are rejected so that typos do not silently fall back to
  // defaults. Relative paths are resolved against `base_dir`.
  static PipelineConfig from_json(const Json& j, const std::string& base_dir = ".") {
    if (!j.is_object()) throw Error(ErrorKind::kConfigError, "config must be a JSON object");
    PipelineConfig c;
    auto path = [&](const std::string& p) {
      if (p.empty()) return p;
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? p : (std::filesystem::path(base_dir) / fp).lexically_normal().string();
    };
    auto check_keys = [](const Json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
      if (!obj.is_object()) throw Error(ErrorKind::kConfigError, where + " must be an object");
      for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
          throw Error(ErrorKind::kConfigError, "unknown config key '" + where + key + "'");
        }
      }
    };
    try {
      check_keys(j,
                 {"pages", "editions", "workdir", "markers", "zones", "passage_chars",
                  "passage_overlap", "gram_n", "doc_freq_cap", "min_shared_grams", "max_candidates_per_page", "align",
                  "filter", "chunk", "upsample", "seed", "analysis_bins", "case_fold",
                  "normalizer", "eval", "threads"},
                 "");
      c.pages = path(j.value("pages", std::string()));
      c.editions = path(j.value("editions", std::string()));
      c.workdir = path(j.value("workdir", c.workdir));
      c.markers = path(j.value("markers", std::string()));
      if (j.contains("zones")) c.zones = j["zones"].get<std::set<std::string>>();
      c.passage_chars = j.value("passage_chars", c.passage_chars);
      c.passage_overlap = j.value("passage_overlap", c.passage_overlap);
      c.gram_n = j.value("gram_n", c.gram_n);
      c.doc_freq_cap = j.value("doc_freq_cap", c.doc_freq_cap);
      c.min_shared_grams = j.value("min_shared_grams", c.min_shared_grams);
      c.max_candidates_per_page = j.value("max_candidates_per_page", c.max_candidates_per_page);
      if (j.contains("align")) {
        const Json& a = j["align"];
        check_keys(a,
                   {"beam_width", "min_align_chars", "match", "substitute", "insert", "delete",
                    "jump_open", "jump_per_char", "unaligned"},
                   "align.");
        c.align.beam_width = a.value("beam_width", c.align.beam_width);
        c.align.min_align_chars = a.value("min_align_chars", c.align.min_align_chars);
        c.align.match = a.value("match", c.align.match);
        c.align.substitute = a.value("substitute", c.align.substitute);
        c.align.insert = a.value("insert", c.align.insert);
        c.align.remove = a.value("delete", c.align.remove);
        c.align.jump_open = a.value("jump_open", c.align.jump_open);
        c.align.jump_per_char = a.value("jump_per_char", c.align.jump_per_char);
        c.align.unaligned = a.value("unaligned", c.align.unaligned);
      }
      if (j.contains("filter")) {
        const Json& f = j["filter"];
        check_keys(f,
                   {"min_continuous_lines", "min_match_rate", "line_coverage_threshold",
                    "require_same_work"},
                   "filter.");
        c.filter.min_continuous_lines = f.value("min_continuous_lines", c.filter.min_continuous_lines);
        c.filter.min_match_rate = f.value("min_match_rate", c.filter.min_match_rate);
        c.filter.line_coverage_threshold =
            f.value("line_coverage_threshold", c.filter.line_coverage_threshold);
        c.filter.require_same_work = f.value("require_same_work", c.filter.require_same_work);
      }
      if (j.contains("chunk")) {
        const Json& b = j["chunk"];
        check_keys(b, {"min_bytes", "max_bytes", "target_bytes"}, "chunk.");
        c.chunk.min_bytes = b.value("min_bytes", c.chunk.min_bytes);
        c.chunk.max_bytes = b.value("max_bytes", c.chunk.max_bytes);
        c.chunk.target_bytes = b.value("target_bytes", c.chunk.target_bytes);
      }
      if (j.contains("upsample")) c.upsample = j["upsample"].get<std::map<std::string, int>>();
      c.seed = j.value("seed", c.seed);
      c.analysis_bins = j.value("analysis_bins", c.analysis_bins);
      c.case_fold = j.value("case_fold", c.case_fold);
      if (j.contains("normalizer")) {
        const Json& n = j["normalizer"];
        check_keys(n, {"kind", "rules", "capitalize", "command", "url", "timeout_ms", "concurrency"},
                   "normalizer.");
        NormalizerConfig& nc = c.normalizer;
        nc.kind = n.value("kind", nc.kind);
        nc.rules = path(n.value("rules", std::string()));
        nc.capitalize = n.value("capitalize", nc.capitalize);
        if (n.contains("command")) nc.command = n["command"].get<std::vector<std::string>>();
        nc.url = n.value("url", nc.url);
        nc.timeout_ms = n.value("timeout_ms", nc.timeout_ms);
        nc.concurrency = n.value("concurrency", nc.concurrency);
      }
      if (j.contains("eval")) {
        const Json& e = j["eval"];
        check_keys(e, {"input", "macro", "mfw_k", "ngram_n"}, "eval.");
        c.eval_input = path(e.value("input", std::string()));
        c.eval.macro = e.value("macro", c.eval.macro);
        c.eval.mfw_k = e.value("mfw_k", c.eval.mfw_k);
        c.eval.ngram_n = e.value("ngram_n", c.eval.ngram_n);
      }
      c.threads = j.value("threads", c.threads);
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kConfigError, std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  static PipelineConfig load(const std::string& file) {
    std::string text;
    try {
      text = read_file(file);
    } catch (const Error&) {
      throw Error(ErrorKind::kConfigError, "cannot read config " + file);
    }
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kConfigError, file + ": " + e.what());
    }
    const auto parent = std::filesystem::path(file).parent_path();
    return from_json(j, parent.empty() ? "." : parent.string());
  }
};

// Cuts an edition into passages of `chars` code points; consecutive passages
// share `overlap` code points, so any excerpt up to `overlap` long lies
// wholly inside one passage.
inline std::vector<EditionPassage> split_edition(const EditionRecord& e, std::size_t chars,
                                                 std::size_t overlap) {
  const std::u32string text = to_u32(e.text);
  const std::size_t stride = chars - overlap;
  std::vector<EditionPassage> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = std::min(text.size(), start + chars);
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", out.size());
    out.push_back({e.work_id, id, to_utf8(std::u32string_view(text).substr(start, end - start)),
                   static_cast<int64_t>(start), e.language});
    if (end == text.size()) break;
    start += stride;
  }
  return out;
}

struct StageReport {
  Stage stage = Stage::kPrep;
  std::string dir;
  Json summary = Json::object();  // counts and rejection tallies
  double wall_seconds = 0.0;

  Json to_json() const {
    Json j = summary;
    j["stage"] = stage_name(stage);
    j["dir"] = dir;
    j["wall_seconds"] = wall_seconds;
    return j;
  }
};

namespace detail {

inline uint64_t fnv1a(std::string_view data, uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string content_hash(const std::string& path) {
  if (path.empty()) return "-";
  return hex16(fnv1a(read_file(path)));
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorKind::kConfigError, what + " path is not configured");
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kMissingInput, what + " not found: " + path);
  }
}

inline std::size_t thread_count(std::size_t configured) {
  if (configured) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::min(threads, n); ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline Json json_of(const std::set<std::string>& s) { return Json(s); }

}  // namespace detail

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config) : c_(std::move(config)) {
    c_.validate();
    markers_ = c_.markers.empty() ? MarkerTable::defaults() : MarkerTable::load(c_.markers);
  }

  const PipelineConfig& config() const { return c_; }

  // Directory a stage writes to under the current config and inputs.
  std::string stage_dir(Stage s) const {
    return (std::filesystem::path(c_.workdir) / (std::string(stage_name(s)) + "-" + hash(s)))
        .string();
  }

  StageReport run(Stage s) {
    const auto started = std::chrono::steady_clock::now();
    StageReport r;
    r.stage = s;
    r.dir = stage_dir(s);
    switch (s) {
      case Stage::kPrep: r.summary = prep(r.dir); break;
      case Stage::kIndex: r.summary = index(r.dir); break;
      case Stage::kCandidates: r.summary = find_candidates(r.dir); break;
      case Stage::kAlign: r.summary = align_stage(r.dir); break;
      case Stage::kPairs: r.summary = pairs(r.dir); break;
      case Stage::kAnalyze: r.summary = analyze(r.dir); break;
      case Stage::kNormalize: r.summary = normalize(r.dir); break;
      case Stage::kEval: r.summary = eval(r.dir); break;
    }
    write_file_atomic(r.dir + "/report.json", r.summary.dump(2) + "\n");
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_file_atomic(r.dir + "/timing.json",
                      Json{{"wall_seconds", r.wall_seconds}}.dump() + "\n");
    return r;
  }

  // Runs every stage up to and including `last`, in order.
  std::vector<StageReport> run_through(Stage last) {
    std::vector<StageReport> out;
    if (last == Stage::kEval && !c_.eval_input.empty()) {
      out.push_back(run(last));  // standalone evaluation needs no upstream
      return out;
    }
    for (Stage s : kAllStages) {
      out.push_back(run(s));
      if (s == last) break;
    }
    return out;
  }

 private:
  // --- hashing -------------------------------------------------------------

  Json params(Stage s) const {
    switch (s) {
      case Stage::kPrep:
        return {{"zones", c_.zones},
                {"passage_chars", c_.passage_chars},
                {"passage_overlap", c_.passage_overlap},
                {"pages", detail::content_hash(c_.pages)},
                {"editions", detail::content_hash(c_.editions)}};
      case Stage::kIndex: return {{"n", c_.gram_n}, {"cap", c_.doc_freq_cap}};
      case Stage::kCandidates:
        return {{"min_shared", c_.min_shared_grams}, {"max", c_.max_candidates_per_page}};
      case Stage::kAlign: {
        const AlignParams& a = c_.align;
        return {{"beam", a.beam_width}, {"min", a.min_align_chars}, {"m", a.match},
                {"s", a.substitute},    {"i", a.insert},           {"d", a.remove},
                {"jo", a.jump_open},    {"jc", a.jump_per_char},   {"u", a.unaligned}};
      }
      case Stage::kPairs:
        return {{"lines", c_.filter.min_continuous_lines},
                {"rate", c_.filter.min_match_rate},
                {"cov", c_.filter.line_coverage_threshold},
                {"same", c_.filter.require_same_work},
                {"chunk", {c_.chunk.min_bytes, c_.chunk.max_bytes, c_.chunk.target_bytes}},
                {"upsample", c_.upsample},
                {"seed", c_.seed}};
      case Stage::kAnalyze:
        return {{"bins", c_.analysis_bins},
                {"fold", c_.case_fold},
                {"markers", detail::content_hash(c_.markers)}};
      case Stage::kNormalize: {
        const NormalizerConfig& n = c_.normalizer;
        return {{"kind", n.kind},
                {"rules", detail::content_hash(n.rules)},
                {"cap", n.capitalize},
                {"command", n.command},
                {"url", n.url},
                {"markers", detail::content_hash(c_.markers)}};
      }
      case Stage::kEval:
        return {{"input", detail::content_hash(c_.eval_input)},
                {"macro", c_.eval.macro},
                {"k", c_.eval.mfw_k},
                {"n", c_.eval.ngram_n}};
    }
    return {};
  }

  static std::optional<Stage> upstream(Stage s, bool standalone_eval) {
    switch (s) {
      case Stage::kPrep: return std::nullopt;
      case Stage::kIndex: return Stage::kPrep;
      case Stage::kCandidates: return Stage::kIndex;
      case Stage::kAlign: return Stage::kCandidates;
      case Stage::kPairs: return Stage::kAlign;
      case Stage::kAnalyze: return Stage::kPairs;
      case Stage::kNormalize: return Stage::kPairs;
      case Stage::kEval:
        return standalone_eval ? std::nullopt : std::optional<Stage>(Stage::kNormalize);
    }
    return std::nullopt;
  }

  std::string hash(Stage s) const {
    const auto it = hashes_.find(s);
    if (it != hashes_.end()) return it->second;
    std::string key = std::string(stage_name(s)) + "|" + params(s).dump();
    if (const auto up = upstream(s, !c_.eval_input.empty())) key += "|" + hash(*up);
    return hashes_[s] = detail::hex16(detail::fnv1a(key));
  }

  // Upstream output file, or MissingInput naming the stage to run first.
  std::string input(Stage s, const std::string& file) const {
    const std::string path = stage_dir(s) + "/" + file;
    if (!std::filesystem::exists(stage_dir(s) + "/report.json") ||
        !std::filesystem::exists(path)) {
      throw Error(ErrorKind::kMissingInput,
                  path + " is missing; run the '" + stage_name(s) + "' stage first");
    }
    return path;
  }

  std::vector<PreparedText> load_pages() const {
    std::vector<PreparedText> out;
    for (const SourcePage& p : read_jsonl<SourcePage>(input(Stage::kPrep, "pages.jsonl"))) {
      out.push_back(prepare_page(p, c_.zones));
    }
    return out;
  }

  std::vector<PreparedText> load_passages() const {
    std::vector<PreparedText> out;
    for (const EditionPassage& p :
         read_jsonl<EditionPassage>(input(Stage::kPrep, "passages.jsonl"))) {
      out.push_back(prepare_passage(p));
    }
    return out;
  }

  // --- stages --------------------------------------------------------------

  Json prep(const std::string& dir) const {
    detail::require_file(c_.pages, "pages");
    detail::require_file(c_.editions, "editions");
    std::vector<SourcePage> kept;
    std::string prepared;
    std::size_t pages_in = 0, empty = 0;
    std::set<std::string> refs;
    for (const SourcePage& p : read_jsonl<SourcePage>(c_.pages)) {
      ++pages_in;
      if (!refs.insert(p.doc_id + "/" + p.page_id).second) {
        throw Error(ErrorKind::kFormatError, "duplicate page " + p.doc_id + "/" + p.page_id);
      }
      PreparedText t;
      try {
        t = prepare_page(p, c_.zones);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kEmptyPage) throw;
        ++empty;
        continue;
      }
      Json lines = Json::array();
      for (const LineRange& l : t.lines) {
        lines.push_back({{"source_line", l.source_line}, {"begin", l.begin}, {"end", l.end}});
      }
      prepared += Json{{"page", t.origin.ref()},
                       {"language", t.origin.language},
                       {"text", t.utf8()},
                       {"lines", lines}}
                      .dump() +
                  "\n";
      kept.push_back(p);
    }
    std::vector<EditionPassage> passages;
    std::size_t editions = 0, empty_editions = 0;
    std::set<std::string> works;
    for (const EditionRecord& e : read_jsonl<EditionRecord>(c_.editions)) {
      ++editions;
      if (!works.insert(e.work_id).second) {
        throw Error(ErrorKind::kFormatError, "duplicate work " + e.work_id);
      }
      if (e.text.empty()) {
        ++empty_editions;
        continue;
      }
      for (EditionPassage& p : split_edition(e, c_.passage_chars, c_.passage_overlap)) {
        passages.push_back(std::move(p));
      }
    }
    write_jsonl(dir + "/pages.jsonl", kept);
    write_file_atomic(dir + "/prepared.jsonl", prepared);
    write_jsonl(dir + "/passages.jsonl", passages);
    return {{"pages_in", pages_in},
            {"pages_kept", kept.size()},
            {"editions", editions},
            {"passages", passages.size()},
            {"rejections", {{"EmptyPage", empty}, {"EmptyEdition", empty_editions}}}};
  }

  Json index(const std::string& dir) const {
    const std::vector<PreparedText> passages = load_passages();
    const GramIndex idx = build_index(passages, c_.gram_n, c_.doc_freq_cap);
    std::filesystem::create_directories(dir);
    idx.save(dir + "/index.bin");
    return {{"passages", passages.size()}, {"postings", idx.postings().size()}};
  }

  Json find_candidates(const std::string& dir) const {
    const std::vector<PreparedText> pages = load_pages();
    const GramIndex idx = GramIndex::load(input(Stage::kIndex, "index.bin"));
    std::vector<CandidatePair> all;
    std::size_t without = 0, capped = 0;
    for (const PreparedText& p : pages) {
      auto found = candidates(p, idx, c_.min_shared_grams);
      without += found.empty();
      if (c_.max_candidates_per_page && found.size() > c_.max_candidates_per_page) {
        capped += found.size() - c_.max_candidates_per_page;
        found.resize(c_.max_candidates_per_page);
      }
      all.insert(all.end(), found.begin(), found.end());
    }
    write_jsonl(dir + "/candidates.jsonl", all);
    return {{"pages", pages.size()},
            {"candidates", all.size()},
            {"rejections", {{"no_candidate", without}, {"over_page_cap", capped}}}};
  }

  Json align_stage(const std::string& dir) const {
    const std::vector<PreparedText> pages = load_pages();
    const std::vector<PreparedText> passages = load_passages();
    const auto cands = read_jsonl<CandidatePair>(input(Stage::kCandidates, "candidates.jsonl"));
    std::map<std::string, std::size_t> page_at, passage_at;
    for (std::size_t i = 0; i < pages.size(); ++i) page_at[pages[i].origin.ref()] = i;
    for (std::size_t i = 0; i < passages.size(); ++i) passage_at[passages[i].origin.ref()] = i;
    std::vector<std::optional<CharAlignment>> results(cands.size());
    detail::parallel_for(cands.size(), detail::thread_count(c_.threads), [&](std::size_t i) {
      const auto pg = page_at.find(cands[i].page_ref);
      const auto ps = passage_at.find(cands[i].passage_ref);
      if (pg == page_at.end() || ps == passage_at.end()) {
        throw Error(ErrorKind::kFormatError, "candidate refers to unknown page or passage: " +
                                                 cands[i].page_ref + " " + cands[i].passage_ref);
      }
      results[i] = align(pages[pg->second], passages[ps->second], c_.align);
    });
    std::vector<CharAlignment> kept;
    for (auto& r : results) {
      if (r) kept.push_back(std::move(*r));
    }
    write_jsonl(dir + "/alignments.jsonl", kept);
    return {{"candidates", cands.size()},
            {"alignments", kept.size()},
            {"rejections", {{"too_short", cands.size() - kept.size()}}}};
  }

  Json pairs(const std::string& dir) const {
    const std::vector<PreparedText> pages = load_pages();
    const std::vector<PreparedText> passages = load_passages();
    const auto alignments = read_jsonl<CharAlignment>(input(Stage::kAlign, "alignments.jsonl"));
    std::map<std::string, const PreparedText*> page_of, passage_of;
    for (const auto& p : pages) page_of[p.origin.ref()] = &p;
    for (const auto& p : passages) passage_of[p.origin.ref()] = &p;

    // Group by page, in page order.
    std::map<std::string, std::vector<const CharAlignment*>> by_page;
    for (const CharAlignment& a : alignments) {
      if (!page_of.count(a.page_ref) || !passage_of.count(a.passage_ref)) {
        throw Error(ErrorKind::kFormatError,
                    "alignment refers to unknown page or passage: " + a.page_ref);
      }
      by_page[a.page_ref].push_back(&a);
    }
    std::map<std::string, std::size_t> rejected;
    for (const char* r : {"lines", "match_rate", "work", "superseded", "unchunkable"}) {
      rejected[r] = 0;
    }
    std::vector<AlignedPair> out;
    Json links = Json::array();
    std::size_t dropped_pieces = 0, dropped_bytes = 0, accepted = 0;
    for (const PreparedText& page : pages) {
      const auto it = by_page.find(page.origin.ref());
      if (it == by_page.end()) continue;
      // Attribute the page to the work with the most matched characters
      // among alignments passing the line and match-rate tests.
      std::map<std::string, std::size_t> matched_by_work;
      std::vector<FilterDecision> first(it->second.size());
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        const CharAlignment& a = *it->second[k];
        first[k] = filter_alignment(a, page, c_.filter);
        if (first[k].accepted()) matched_by_work[a.work_id] += a.matched_chars;
      }
      std::optional<std::string> work;
      for (const auto& [w, m] : matched_by_work) {
        if (!work || m > matched_by_work[*work]) work = w;
      }
      // One alignment per (page, work): the one matching most characters.
      std::map<std::string, const CharAlignment*> best;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        const CharAlignment& a = *it->second[k];
        const FilterDecision d =
            first[k].accepted() ? filter_alignment(a, page, c_.filter, work) : first[k];
        if (!d.accepted()) {
          ++rejected[reject_reason_name(d.reason)];
          continue;
        }
        const CharAlignment*& slot = best[a.work_id];
        if (slot == nullptr) {
          slot = &a;
          continue;
        }
        ++rejected["superseded"];
        if (a.matched_chars > slot->matched_chars ||
            (a.matched_chars == slot->matched_chars && a.passage_ref < slot->passage_ref)) {
          slot = &a;
        }
      }
      for (const auto& [w, a] : best) {
        ++accepted;
        links.push_back({{"page", a->page_ref},
                         {"work_id", a->work_id},
                         {"passage", a->passage_ref},
                         {"match_rate", a->match_rate},
                         {"matched", a->matched_chars}});
        std::vector<DroppedPiece> dropped;
        try {
          for (AlignedPair& p : chunk(*a, page, *passage_of[a->passage_ref], c_.chunk, &dropped)) {
            out.push_back(std::move(p));
          }
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kUnchunkable) throw;
          ++rejected["unchunkable"];
        }
        dropped_pieces += dropped.size();
        for (const auto& d : dropped) dropped_bytes += d.bytes;
      }
    }
    const Manifest m = build_manifest(out, c_.upsample, c_.seed);
    write_jsonl(dir + "/pairs.jsonl", out);
    std::string link_lines;
    for (const Json& l : links) link_lines += l.dump() + "\n";
    write_file_atomic(dir + "/links.jsonl", link_lines);
    std::string manifest = "# seed " + std::to_string(m.seed) + "\n";
    for (const std::string& id : m.ids) manifest += id + "\n";
    write_file_atomic(dir + "/manifest.txt", manifest);
    return {{"alignments", alignments.size()},
            {"accepted", accepted},
            {"pairs", out.size()},
            {"manifest_entries", m.ids.size()},
            {"dropped_pieces", dropped_pieces},
            {"dropped_bytes", dropped_bytes},
            {"rejections", rejected}};
  }

  Json analyze(const std::string& dir) const {
    const auto ps = read_jsonl<AlignedPair>(input(Stage::kPairs, "pairs.jsonl"));
    TokenOptions options;
    options.case_fold = c_.case_fold;
    const SubstitutionStats stats = substitution_stats(ps, markers_, c_.analysis_bins, options);
    write_file_atomic(dir + "/substitution.json", Json(stats).dump(2) + "\n");
    return {{"pairs", ps.size()}, {"languages", stats.per_language.size()}};
  }

  Json normalize(const std::string& dir) const {
    const auto ps = read_jsonl<AlignedPair>(input(Stage::kPairs, "pairs.jsonl"));
    std::vector<NormalizerResult> results;
    const NormalizerConfig& n = c_.normalizer;
    if (n.kind == "external") {
      ExternalEndpoint ep;
      ep.kind = n.url.empty() ? ExternalEndpoint::Kind::kSubprocess : ExternalEndpoint::Kind::kHttp;
      ep.command = n.command;
      ep.url = n.url;
      ep.timeout_ms = n.timeout_ms;
      ep.concurrency = n.concurrency;
      std::vector<ExternalInput> inputs;
      for (const AlignedPair& p : ps) inputs.push_back({p.id, p.src, p.language});
      results = normalize_external(inputs, ep);
    } else {
      RuleSet rules = n.rules.empty() ? RuleSet::defaults() : RuleSet::load(n.rules);
      const RuleNormalizer normalizer(rules, n.capitalize);
      results.resize(ps.size());
      detail::parallel_for(ps.size(), detail::thread_count(c_.threads), [&](std::size_t i) {
        if (n.kind == "identity") {
          results[i].text = ps[i].src;
        } else {
          results[i] = normalizer.normalize(ps[i].src, ps[i].language);
        }
      });
    }
    std::map<std::string, std::size_t> violations;
    std::size_t flagged = 0, warnings = 0;
    std::string lines;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto v = validate_against_task(results[i], ps[i].src, {}, markers_);
      flagged += !v.empty();
      for (const Violation& x : v) ++violations[violation_name(x.kind)];
      warnings += results[i].warnings.size();
      lines += Json{{"id", ps[i].id},
                    {"language", ps[i].language},
                    {"src", ps[i].src},
                    {"pred", results[i].text},
                    {"gold", ps[i].tgt},
                    {"violations", v},
                    {"warnings", results[i].warnings}}
                   .dump() +
               "\n";
    }
    write_file_atomic(dir + "/normalized.jsonl", lines);
    return {{"pairs", ps.size()},
            {"flagged", flagged},
            {"warnings", warnings},
            {"violations", violations}};
  }

  Json eval(const std::string& dir) const {
    std::vector<EvalRecord> records, baseline;
    if (!c_.eval_input.empty()) {
      detail::require_file(c_.eval_input, "eval input");
      records = read_jsonl<EvalRecord>(c_.eval_input);
    } else {
      // Pair sources keep the page's line breaks; the edition side has none.
      auto unwrap = [](std::string t) {
        std::replace(t.begin(), t.end(), '\n', ' ');
        return t;
      };
      for_each_jsonl(input(Stage::kNormalize, "normalized.jsonl"),
                     [&](const Json& j, std::size_t) {
                       EvalRecord r;
                       r.id = detail::required<std::string>(j, "id");
                       r.gold = unwrap(detail::required<std::string>(j, "gold"));
                       r.pred = unwrap(detail::required<std::string>(j, "pred"));
                       r.language = detail::required<std::string>(j, "language");
                       EvalRecord b = r;
                       b.pred = unwrap(detail::required<std::string>(j, "src"));
                       records.push_back(std::move(r));
                       baseline.push_back(std::move(b));
                     });
    }
    Json report = evaluate(records, c_.eval);
    if (!baseline.empty()) report["baseline"] = evaluate(baseline, c_.eval);
    write_file_atomic(dir + "/eval.json", report.dump(2) + "\n");
    return {{"records", records.size()}};
  }

  PipelineConfig c_;
  MarkerTable markers_;
  mutable std::map<Stage, std::string> hashes_;
};

}  // namespace pen
