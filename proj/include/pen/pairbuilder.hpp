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

// Alignment filtering, chunking into bounded training pairs, and the
// language-balanced training manifest.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pen/aligner.hpp"
#include "pen/error.hpp"
#include "pen/textprep.hpp"
#include "pen/unicode.hpp"

namespace pen {

struct FilterPolicy {
  std::size_t min_continuous_lines = 5;
  double min_match_rate = 0.60;
  double line_coverage_threshold = 0.50;
  bool require_same_work = true;

  void validate() const {
    auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!fraction(min_match_rate) || !fraction(line_coverage_threshold)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "filter fractions must lie in [0, 1]");
    }
  }
};

enum class RejectReason { kNone, kLines, kMatchRate, kWork };

inline const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::kNone: return "accepted";
    case RejectReason::kLines: return "lines";
    case RejectReason::kMatchRate: return "match_rate";
    case RejectReason::kWork: return "work";
  }
  return "unknown";
}

struct FilterDecision {
  RejectReason reason = RejectReason::kNone;
  std::size_t longest_line_run = 0;

  bool accepted() const { return reason == RejectReason::kNone; }
};

// Source positions covered by a Match or Sub op.
inline std::vector<bool> aligned_source_mask(const CharAlignment& a,
                                             std::size_t source_length) {
  std::vector<bool> mask(source_length, false);
  for (const AlignSegment& seg : a.segments) {
    std::size_t s = seg.src.begin;
    for (EditOp op : seg.ops) {
      if (op == EditOp::kIns) continue;
      if (op != EditOp::kDel && s < source_length) mask[s] = true;
      ++s;
    }
  }
  return mask;
}

// Longest run of consecutive kept page lines whose non-space characters are
// covered at or above the threshold. Lines with no non-space character are
// skipped: they neither count nor break a run.
inline std::size_t longest_covered_line_run(const CharAlignment& a,
                                            const PreparedText& page,
                                            double threshold) {
  const std::vector<bool> mask = aligned_source_mask(a, page.text.size());
  std::size_t best = 0, run = 0;
  for (const LineRange& line : page.lines) {
    std::size_t chars = 0, covered = 0;
    for (std::size_t i = line.begin; i < line.end; ++i) {
      if (is_whitespace(page.text[i])) continue;
      ++chars;
      covered += mask[i];
    }
    if (chars == 0) continue;
    if (static_cast<double>(covered) >=
        threshold * static_cast<double>(chars)) {
      best = std::max(best, ++run);
    } else {
      run = 0;
    }
  }
  return best;
}

// `expected_work` is the work the page is attributed to (the pipeline picks
// the work with the most aligned characters on the page).
inline FilterDecision filter_alignment(
    const CharAlignment& a, const PreparedText& page,
    const FilterPolicy& policy,
    const std::optional<std::string>& expected_work = std::nullopt) {
  FilterDecision d;
  d.longest_line_run =
      longest_covered_line_run(a, page, policy.line_coverage_threshold);
  if (d.longest_line_run < policy.min_continuous_lines) {
    d.reason = RejectReason::kLines;
  } else if (a.match_rate < policy.min_match_rate) {
    d.reason = RejectReason::kMatchRate;
  } else if (policy.require_same_work &&
             (a.work_id.empty() ||
              (expected_work && *expected_work != a.work_id))) {
    d.reason = RejectReason::kWork;
  }
  return d;
}

struct PairLineage {
  std::string doc_id;
  std::string page_id;
  std::string work_id;
  std::string passage_id;
  Span src_span;  // prepared page indices
  Span tgt_span;  // prepared passage indices

  bool operator==(const PairLineage&) const = default;
};

struct AlignedPair {
  std::string id;
  std::string src;
  std::string tgt;
  std::size_t src_bytes = 0;
  double match_rate = 0.0;
  std::string ops;  // run-length encoded
  PairLineage lineage;
  std::string language;

  bool operator==(const AlignedPair&) const = default;
};

struct ChunkBounds {
  std::size_t min_bytes = 300;
  std::size_t max_bytes = 1000;
  std::size_t target_bytes = 650;
};

// A source region the chunker could not place, kept for the run report.
struct DroppedPiece {
  Span src;
  std::size_t bytes = 0;
};

namespace detail {

struct OpCursor {
  std::size_t op = 0;  // index into the segment's ops
  std::size_t s = 0;
  std::size_t t = 0;
};

inline AlignedPair make_pair(const AlignSegment& seg, const OpCursor& from,
                             const OpCursor& to, const PreparedText& page,
                             const PreparedText& passage) {
  AlignedPair p;
  const std::u32string_view src =
      std::u32string_view(page.text).substr(from.s, to.s - from.s);
  const std::u32string_view tgt =
      std::u32string_view(passage.text).substr(from.t, to.t - from.t);
  p.src = to_utf8(src);
  p.tgt = to_utf8(tgt);
  p.src_bytes = p.src.size();
  const std::vector<EditOp> ops(seg.ops.begin() + static_cast<long>(from.op),
                                seg.ops.begin() + static_cast<long>(to.op));
  std::size_t matched = 0, covered = 0;
  for (EditOp op : ops) {
    matched += op == EditOp::kMatch;
    covered += op != EditOp::kIns;
  }
  p.match_rate = covered == 0 ? 0.0
                              : static_cast<double>(matched) /
                                    static_cast<double>(covered);
  p.ops = encode_ops(ops);
  p.lineage = {page.origin.doc_id,   page.origin.page_id,
               passage.origin.work_id, passage.origin.passage_id,
               {from.s, to.s},       {from.t, to.t}};
  p.language = !passage.origin.language.empty() ? passage.origin.language
                                                : page.origin.language;
  p.id = page.origin.ref() + ":" + passage.origin.ref() + ":" +
         std::to_string(from.s) + "-" + std::to_string(to.s);
  return p;
}

}  // namespace detail

// Splits each segment of an accepted alignment into pairs whose source side
// is within [min_bytes, max_bytes] UTF-8 bytes. Cuts fall on ops that align
// whitespace with whitespace; the separator itself belongs to neither chunk.
// Each cut is the admissible one nearest to target_bytes.
inline std::vector<AlignedPair> chunk(
    const CharAlignment& a, const PreparedText& page,
    const PreparedText& passage, const ChunkBounds& bounds = {},
    std::vector<DroppedPiece>* dropped = nullptr) {
  if (bounds.min_bytes == 0 || bounds.min_bytes > bounds.max_bytes) {
    throw Error(ErrorKind::kInvalidArgument, "bad chunk byte bounds");
  }
  std::vector<AlignedPair> out;
  bool any_large_enough = false;

  for (const AlignSegment& seg : a.segments) {
    // Prefix byte sums over the segment's source.
    std::vector<std::size_t> prefix(seg.src.size() + 1, 0);
    for (std::size_t k = 0; k < seg.src.size(); ++k) {
      prefix[k + 1] = prefix[k] + utf8_width(page.text[seg.src.begin + k]);
    }
    auto bytes = [&](std::size_t s0, std::size_t s1) {
      return prefix[s1 - seg.src.begin] - prefix[s0 - seg.src.begin];
    };
    if (bytes(seg.src.begin, seg.src.end) >= bounds.min_bytes) {
      any_large_enough = true;
    }
    auto drop = [&](std::size_t s0, std::size_t s1) {
      if (dropped != nullptr && s1 > s0) {
        dropped->push_back({{s0, s1}, bytes(s0, s1)});
      }
    };

    std::vector<detail::OpCursor> cuts;
    detail::OpCursor end_cursor{0, seg.src.begin, seg.tgt.begin};
    for (std::size_t k = 0; k < seg.ops.size(); ++k) {
      const EditOp op = seg.ops[k];
      if ((op == EditOp::kMatch || op == EditOp::kSub) &&
          is_whitespace(page.text[end_cursor.s]) &&
          is_whitespace(passage.text[end_cursor.t])) {
        cuts.push_back(end_cursor);
      }
      if (op != EditOp::kIns) ++end_cursor.s;
      if (op != EditOp::kDel) ++end_cursor.t;
      ++end_cursor.op;
    }

    auto after = [](const detail::OpCursor& c) {
      return detail::OpCursor{c.op + 1, c.s + 1, c.t + 1};
    };
    auto emit = [&](const detail::OpCursor& from, const detail::OpCursor& to) {
      if (to.s <= from.s || to.t <= from.t) {
        drop(from.s, to.s);
        return false;
      }
      out.push_back(detail::make_pair(seg, from, to, page, passage));
      return true;
    };

    detail::OpCursor start{0, seg.src.begin, seg.tgt.begin};
    std::size_t next_cut = 0;
    while (start.s < seg.src.end) {
      while (next_cut < cuts.size() && cuts[next_cut].s < start.s) ++next_cut;
      const std::size_t remaining = bytes(start.s, seg.src.end);
      if (remaining <= bounds.max_bytes) {
        // A short tail never fits back into the previous chunk: a cut is only
        // taken while more than max_bytes remain, so the merge would exceed
        // max_bytes. Short tails are dropped.
        if (remaining >= bounds.min_bytes) {
          emit(start, end_cursor);
        } else {
          drop(start.s, seg.src.end);
        }
        break;
      }
      std::optional<std::size_t> best;
      std::size_t best_distance = 0;
      std::size_t first_beyond = cuts.size();
      for (std::size_t c = next_cut; c < cuts.size(); ++c) {
        const std::size_t b = bytes(start.s, cuts[c].s);
        if (b > bounds.max_bytes) {
          first_beyond = c;
          break;
        }
        if (b < bounds.min_bytes) continue;
        const std::size_t distance = b > bounds.target_bytes
                                         ? b - bounds.target_bytes
                                         : bounds.target_bytes - b;
        if (!best || distance < best_distance) {
          best = c;
          best_distance = distance;
        }
      }
      if (best) {
        emit(start, cuts[*best]);
        start = after(cuts[*best]);
        continue;
      }
      // No admissible cut: the stretch up to the next cut cannot be placed.
      if (first_beyond == cuts.size()) {
        drop(start.s, seg.src.end);
        break;
      }
      drop(start.s, cuts[first_beyond].s);
      start = after(cuts[first_beyond]);
    }
  }
  if (!any_large_enough) {
    throw Error(ErrorKind::kUnchunkable,
                "no aligned region of " + a.page_ref + " reaches " +
                    std::to_string(bounds.min_bytes) + " bytes");
  }
  return out;
}

namespace detail {

// Fisher-Yates with unbiased draws in [0, i) by rejection.
template <typename T>
void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const uint64_t bound = static_cast<uint64_t>(i);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(v[i - 1], v[r % bound]);
  }
}

}  // namespace detail

struct Manifest {
  uint64_t seed = 0;
  std::vector<std::string> ids;
};

// Each pair of language L appears upsample[L] times (default 1), in an order
// fixed by `seed`. The shuffle is an explicit Fisher-Yates over mt19937_64 so
// that manifests are identical across standard libraries.
inline Manifest build_manifest(const std::vector<AlignedPair>& pairs,
                               const std::map<std::string, int>& upsample,
                               uint64_t seed) {
  for (const auto& [language, factor] : upsample) {
    if (factor < 1) {
      throw Error(ErrorKind::kInvalidArgument,
                  "upsample factor for " + language + " must be >= 1");
    }
  }
  Manifest m;
  m.seed = seed;
  for (const AlignedPair& p : pairs) {
    const auto it = upsample.find(p.language);
    const int factor = it == upsample.end() ? 1 : it->second;
    for (int k = 0; k < factor; ++k) m.ids.push_back(p.id);
  }
  std::mt19937_64 rng(seed);
  detail::portable_shuffle(m.ids, rng);
  return m;
}

}  // namespace pen
