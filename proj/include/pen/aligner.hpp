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

// Character-level alignment of an ATR page (source) against an edition
// passage (target), tolerant to rearranged passages.
//
// The model is the Viterbi (min-cost) form of an edit HMM with three kinds
// of states per source column i (i source characters consumed):
//
//   PRE(i)    no segment opened yet; each skipped source char costs
//             `unaligned`.
//   IN(i, j)  inside a segment with the target cursor at j. Match/Sub
//             consume one char on each side, Del consumes a source char,
//             Ins a target char. A jump moves the cursor anywhere
//             (jump_open + jump_per_char * distance) and opens a new
//             segment.
//   GAP(i)    after at least one segment, with >= 1 skipped source char
//             since the last one. Re-entering costs jump_open.
//
// Opening the first segment is free at any target position, and target
// characters outside segments are free. The returned score is the total
// cost, uncovered source characters included.
//
// align() runs a beam over target positions per source column.
// align_exhaustive() fills the full table and serves as the oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pen/error.hpp"
#include "pen/textprep.hpp"

namespace pen {

// Declaration order is the tie-break order.
enum class EditOp : uint8_t { kMatch = 0, kSub = 1, kDel = 2, kIns = 3 };

inline char edit_op_code(EditOp op) {
  switch (op) {
    case EditOp::kMatch: return 'M';
    case EditOp::kSub: return 'S';
    case EditOp::kDel: return 'D';
    case EditOp::kIns: return 'I';
  }
  return '?';
}

struct AlignParams {
  std::size_t beam_width = 200;
  std::size_t min_align_chars = 50;
  double match = 0.0;
  double substitute = 2.0;
  double insert = 3.0;
  double remove = 3.0;  // deletion
  double jump_open = 10.0;
  double jump_per_char = 0.0;
  double unaligned = 1.0;  // per source char outside every segment

  void validate() const {
    auto fail = [](const std::string& what) {
      throw Error(ErrorKind::kInvalidArgument, "AlignParams: " + what);
    };
    if (beam_width < 1) fail("beam_width must be >= 1");
    if (min_align_chars < 1) fail("min_align_chars must be >= 1");
    for (double c : {match, substitute, insert, remove, jump_open,
                     jump_per_char, unaligned}) {
      if (!(c >= 0.0) || !std::isfinite(c)) fail("costs must be finite, >= 0");
    }
    if (match > substitute) fail("match > substitute");
    if (substitute > insert || substitute > remove) {
      fail("substitute exceeds an indel cost");
    }
    if (unaligned < match || unaligned > substitute) {
      fail("unaligned must lie in [match, substitute]");
    }
    if (jump_per_char > insert) fail("jump_per_char > insert");
  }
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct AlignSegment {
  Span src;
  Span tgt;
  std::vector<EditOp> ops;

  bool operator==(const AlignSegment&) const = default;
};

struct CharAlignment {
  std::string page_ref;
  std::string passage_ref;
  std::string work_id;
  std::vector<AlignSegment> segments;
  double score = 0.0;
  std::size_t matched_chars = 0;
  std::size_t covered_chars = 0;
  double match_rate = 0.0;
};

// Run-length encoding of an op list, e.g. "12M1S3M".
inline std::string encode_ops(const std::vector<EditOp>& ops) {
  std::string out;
  std::size_t i = 0;
  while (i < ops.size()) {
    std::size_t j = i;
    while (j < ops.size() && ops[j] == ops[i]) ++j;
    out += std::to_string(j - i);
    out.push_back(edit_op_code(ops[i]));
    i = j;
  }
  return out;
}

inline std::vector<EditOp> decode_ops(std::string_view rle) {
  std::vector<EditOp> out;
  std::size_t count = 0;
  bool have_digits = false;
  for (char c : rle) {
    if (c >= '0' && c <= '9') {
      count = count * 10 + static_cast<std::size_t>(c - '0');
      have_digits = true;
      continue;
    }
    EditOp op;
    switch (c) {
      case 'M': op = EditOp::kMatch; break;
      case 'S': op = EditOp::kSub; break;
      case 'D': op = EditOp::kDel; break;
      case 'I': op = EditOp::kIns; break;
      default:
        throw Error(ErrorKind::kFormatError,
                    std::string("bad op code '") + c + "'");
    }
    if (!have_digits) {
      throw Error(ErrorKind::kFormatError, "op code without a count");
    }
    out.insert(out.end(), count, op);
    count = 0;
    have_digits = false;
  }
  if (have_digits) throw Error(ErrorKind::kFormatError, "dangling count");
  return out;
}

// Recomputes matched_chars, covered_chars and match_rate from the ops.
inline void tally(CharAlignment& a) {
  a.matched_chars = 0;
  a.covered_chars = 0;
  for (const AlignSegment& seg : a.segments) {
    for (EditOp op : seg.ops) {
      if (op == EditOp::kMatch) ++a.matched_chars;
      if (op != EditOp::kIns) ++a.covered_chars;
    }
  }
  a.match_rate = a.covered_chars == 0
                     ? 0.0
                     : static_cast<double>(a.matched_chars) /
                           static_cast<double>(a.covered_chars);
}

// Cost of an alignment under `params`, computed from its segments alone.
inline double alignment_cost(const CharAlignment& a, std::size_t source_length,
                             const AlignParams& params) {
  double cost = 0.0;
  std::size_t covered = 0;
  for (std::size_t k = 0; k < a.segments.size(); ++k) {
    const AlignSegment& seg = a.segments[k];
    for (EditOp op : seg.ops) {
      switch (op) {
        case EditOp::kMatch: cost += params.match; break;
        case EditOp::kSub: cost += params.substitute; break;
        case EditOp::kDel: cost += params.remove; break;
        case EditOp::kIns: cost += params.insert; break;
      }
    }
    covered += seg.src.size();
    if (k == 0) continue;
    const AlignSegment& prev = a.segments[k - 1];
    cost += params.jump_open;
    if (prev.src.end == seg.src.begin) {
      const auto d = static_cast<double>(prev.tgt.end > seg.tgt.begin
                                             ? prev.tgt.end - seg.tgt.begin
                                             : seg.tgt.begin - prev.tgt.end);
      cost += params.jump_per_char * d;
    }
  }
  cost += params.unaligned * static_cast<double>(source_length - covered);
  return cost;
}

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Reverse-order segment assembly used by both tracebacks.
class SegmentCollector {
 public:
  void open_end(std::size_t src_end, std::size_t tgt_end) {
    current_ = AlignSegment{};
    current_.src.end = src_end;
    current_.tgt.end = tgt_end;
    reversed_ops_.clear();
  }
  void push(EditOp op) { reversed_ops_.push_back(op); }
  void close_begin(std::size_t src_begin, std::size_t tgt_begin) {
    current_.src.begin = src_begin;
    current_.tgt.begin = tgt_begin;
    current_.ops.assign(reversed_ops_.rbegin(), reversed_ops_.rend());
    segments_.push_back(std::move(current_));
  }
  std::vector<AlignSegment> take() {
    std::reverse(segments_.begin(), segments_.end());
    return std::move(segments_);
  }

 private:
  AlignSegment current_;
  std::vector<EditOp> reversed_ops_;
  std::vector<AlignSegment> segments_;
};

inline double step_cost(const AlignParams& p, EditOp op) {
  switch (op) {
    case EditOp::kMatch: return p.match;
    case EditOp::kSub: return p.substitute;
    case EditOp::kDel: return p.remove;
    case EditOp::kIns: return p.insert;
  }
  return kInf;
}

}  // namespace detail

// Full dynamic program over every (source column, target position) cell.
inline CharAlignment align_exhaustive(std::u32string_view src,
                                      std::u32string_view tgt,
                                      const AlignParams& params) {
  params.validate();
  const std::size_t m = src.size();
  const std::size_t n = tgt.size();
  if (m * n > 1'000'000) {
    throw Error(ErrorKind::kTooLarge,
                std::to_string(m) + " x " + std::to_string(n) +
                    " exceeds the exhaustive size cap");
  }
  using detail::kInf;
  enum Kind : uint8_t { kNone, kStepM, kStepS, kStepD, kStart, kIns, kJump,
                        kReenter };
  const std::size_t width = n + 1;
  std::vector<double> in((m + 1) * width, kInf);
  std::vector<uint8_t> kind((m + 1) * width, kNone);
  std::vector<uint32_t> jump_from((m + 1) * width, 0);
  std::vector<double> pre(m + 1), gap(m + 1, kInf), exit_cost(m + 1, kInf);
  std::vector<uint8_t> gap_from_exit(m + 1, 0);
  std::vector<uint32_t> exit_j(m + 1, 0);
  std::vector<uint8_t> exit_kind(m + 1, kNone);
  const double u = params.unaligned;

  std::vector<double> snapshot(width);
  for (std::size_t i = 0; i <= m; ++i) {
    double* col = &in[i * width];
    uint8_t* kcol = &kind[i * width];
    pre[i] = u * static_cast<double>(i);
    if (i > 0) {
      const double* prev = &in[(i - 1) * width];
      // Steps consuming src[i - 1].
      for (std::size_t j = 0; j <= n; ++j) {
        if (j > 0 && prev[j - 1] < kInf) {
          const bool eq = src[i - 1] == tgt[j - 1];
          const double c = prev[j - 1] + (eq ? params.match : params.substitute);
          if (c < col[j]) {
            col[j] = c;
            kcol[j] = eq ? kStepM : kStepS;
          }
        }
        if (prev[j] < kInf) {
          const double c = prev[j] + params.remove;
          if (c < col[j]) {
            col[j] = c;
            kcol[j] = kStepD;
          }
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (col[j] < exit_cost[i]) {
          exit_cost[i] = col[j];
          exit_j[i] = static_cast<uint32_t>(j);
          exit_kind[i] = kcol[j];
        }
      }
      const double from_gap = gap[i - 1];
      const double from_exit = exit_cost[i - 1];
      if (from_exit < from_gap) {
        gap[i] = from_exit + u;
        gap_from_exit[i] = 1;
      } else {
        gap[i] = from_gap + u;
      }
    }
    // Open the first segment anywhere.
    for (std::size_t j = 0; j <= n; ++j) {
      if (pre[i] < col[j]) {
        col[j] = pre[i];
        kcol[j] = kStart;
      }
    }
    auto insert_closure = [&] {
      for (std::size_t j = 1; j <= n; ++j) {
        const double c = col[j - 1] + params.insert;
        if (c < col[j]) {
          col[j] = c;
          kcol[j] = kIns;
        }
      }
    };
    insert_closure();
    // Jumps and re-entry.
    std::copy(col, col + width, snapshot.begin());
    const double reenter = gap[i] + params.jump_open;
    if (params.jump_per_char == 0.0) {
      std::size_t best = 0;
      for (std::size_t k = 1; k <= n; ++k) {
        if (snapshot[k] < snapshot[best]) best = k;
      }
      const double jump = snapshot[best] + params.jump_open;
      for (std::size_t j = 0; j <= n; ++j) {
        if (reenter < col[j] && reenter <= jump) {
          col[j] = reenter;
          kcol[j] = kReenter;
        } else if (jump < col[j]) {
          col[j] = jump;
          kcol[j] = kJump;
          jump_from[i * width + j] = static_cast<uint32_t>(best);
        }
      }
    } else {
      for (std::size_t j = 0; j <= n; ++j) {
        double best_cost = kInf;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k <= n; ++k) {
          const double d = static_cast<double>(k > j ? k - j : j - k);
          const double c =
              snapshot[k] + params.jump_open + params.jump_per_char * d;
          if (c < best_cost) {
            best_cost = c;
            best_k = k;
          }
        }
        if (reenter < col[j] && reenter <= best_cost) {
          col[j] = reenter;
          kcol[j] = kReenter;
        } else if (best_cost < col[j]) {
          col[j] = best_cost;
          kcol[j] = kJump;
          jump_from[i * width + j] = static_cast<uint32_t>(best_k);
        }
      }
    }
    insert_closure();
  }

  // Final state: exit at the last column, GAP, or nothing aligned.
  CharAlignment out;
  enum class Cursor { kExit, kGap, kCell, kDone };
  Cursor cursor;
  if (exit_cost[m] <= gap[m] && exit_cost[m] <= pre[m]) {
    out.score = exit_cost[m];
    cursor = Cursor::kExit;
  } else if (gap[m] <= pre[m]) {
    out.score = gap[m];
    cursor = Cursor::kGap;
  } else {
    out.score = pre[m];
    cursor = Cursor::kDone;
  }

  detail::SegmentCollector collector;
  std::size_t i = m;
  std::size_t j = 0;
  auto take_step = [&](uint8_t k) {
    // Steps leave (i, j) and land at column i - 1.
    switch (k) {
      case kStepM: collector.push(EditOp::kMatch); --j; break;
      case kStepS: collector.push(EditOp::kSub); --j; break;
      case kStepD: collector.push(EditOp::kDel); break;
      default: throw std::logic_error("align_exhaustive: bad step kind");
    }
    --i;
  };
  while (cursor != Cursor::kDone) {
    if (cursor == Cursor::kExit) {
      j = exit_j[i];
      collector.open_end(i, j);
      take_step(exit_kind[i]);
      cursor = Cursor::kCell;
    } else if (cursor == Cursor::kGap) {
      if (gap_from_exit[i]) {
        --i;
        cursor = Cursor::kExit;
      } else {
        --i;
      }
    } else {
      const uint8_t k = kind[i * width + j];
      switch (k) {
        case kStepM:
        case kStepS:
        case kStepD:
          take_step(k);
          break;
        case kIns:
          collector.push(EditOp::kIns);
          --j;
          break;
        case kStart:
          collector.close_begin(i, j);
          cursor = Cursor::kDone;
          break;
        case kReenter:
          collector.close_begin(i, j);
          cursor = Cursor::kGap;
          break;
        case kJump: {
          collector.close_begin(i, j);
          j = jump_from[i * width + j];
          collector.open_end(i, j);
          break;
        }
        default:
          throw std::logic_error("align_exhaustive: broken traceback");
      }
    }
  }
  out.segments = collector.take();
  tally(out);
  return out;
}

namespace detail {

struct BeamCell {
  uint32_t j = 0;
  double cost = kInf;
  uint8_t kind = 0;  // BeamKind
  uint8_t op = 0;    // EditOp of the consuming step
  uint16_t ins = 0;  // Ins ops following the step
  int32_t prev = -1; // survivor index in the previous column
  uint32_t from = 0; // jump source position
};

enum BeamKind : uint8_t { kBeamStep, kBeamStart, kBeamReenter, kBeamJump };

struct StepState {
  uint32_t j;
  double cost;
  int32_t prev;
  uint8_t op;
};

struct ExitRecord {
  double cost = kInf;
  uint32_t j = 0;
  int32_t prev = -1;
  uint8_t op = 0;
};

}  // namespace detail

// Beam-search decoding; returns the alignment regardless of its coverage.
inline CharAlignment align_beam(std::u32string_view src,
                                std::u32string_view tgt,
                                const AlignParams& params) {
  params.validate();
  using detail::BeamCell;
  using detail::ExitRecord;
  using detail::kInf;
  using detail::StepState;
  const std::size_t m = src.size();
  const std::size_t n = tgt.size();
  const double u = params.unaligned;

  std::unordered_map<char32_t, std::vector<uint32_t>> occurrences;
  for (std::size_t j = 0; j < n; ++j) {
    occurrences[tgt[j]].push_back(static_cast<uint32_t>(j));
  }
  // Longest insert run that is still cheaper than jumping.
  std::size_t max_ins = 0;
  while (max_ins < n &&
         static_cast<double>(max_ins + 1) * params.insert <
             params.jump_open +
                 params.jump_per_char * static_cast<double>(max_ins + 1)) {
    ++max_ins;
  }

  std::vector<std::vector<BeamCell>> columns(m + 1);
  std::vector<ExitRecord> exits(m + 1);
  std::vector<double> gap(m + 1, kInf);
  std::vector<uint8_t> gap_from_exit(m + 1, 0);

  std::vector<uint32_t> stamp(n + 1, UINT32_MAX);
  std::vector<uint32_t> slot(n + 1, 0);
  std::vector<StepState> steps;
  std::vector<BeamCell> cands;
  std::vector<double> jump_cost;
  std::vector<std::size_t> jump_src, order;

  for (std::size_t i = 0; i <= m; ++i) {
    const double pre = u * static_cast<double>(i);
    steps.clear();
    cands.clear();
    const auto tag = static_cast<uint32_t>(2 * i);
    if (i > 0) {
      const std::vector<BeamCell>& prev = columns[i - 1];
      auto add_step = [&](uint32_t j, double c, int32_t p, EditOp op) {
        if (stamp[j] != tag) {
          stamp[j] = tag;
          slot[j] = static_cast<uint32_t>(steps.size());
          steps.push_back({j, c, p, static_cast<uint8_t>(op)});
        } else if (c < steps[slot[j]].cost) {
          steps[slot[j]] = {j, c, p, static_cast<uint8_t>(op)};
        }
      };
      for (std::size_t p = 0; p < prev.size(); ++p) {
        const uint32_t j = prev[p].j;
        const bool eq = src[i - 1] == tgt[j];
        add_step(j + 1, prev[p].cost + (eq ? params.match : params.substitute),
                 static_cast<int32_t>(p), eq ? EditOp::kMatch : EditOp::kSub);
      }
      for (std::size_t p = 0; p < prev.size(); ++p) {
        add_step(prev[p].j, prev[p].cost + params.remove,
                 static_cast<int32_t>(p), EditOp::kDel);
      }
      for (const StepState& s : steps) {
        if (s.cost < exits[i].cost) {
          exits[i] = {s.cost, s.j, s.prev, s.op};
        }
      }
      if (exits[i - 1].cost < gap[i - 1]) {
        gap[i] = exits[i - 1].cost + u;
        gap_from_exit[i] = 1;
      } else {
        gap[i] = gap[i - 1] + u;
      }
    }
    if (i == m) break;

    const uint32_t ctag = tag + 1;
    auto add_cand = [&](const BeamCell& cell) {
      if (stamp[cell.j] != ctag) {
        stamp[cell.j] = ctag;
        slot[cell.j] = static_cast<uint32_t>(cands.size());
        cands.push_back(cell);
      } else if (cell.cost < cands[slot[cell.j]].cost) {
        cands[slot[cell.j]] = cell;
      }
    };
    for (const StepState& s : steps) {
      if (s.j < n) {
        add_cand({s.j, s.cost, detail::kBeamStep, s.op, 0, s.prev, 0});
      }
    }
    // Insert runs only pay off when they end on a match for src[i].
    for (const StepState& s : steps) {
      for (std::size_t k = 1; k <= max_ins && s.j + k < n; ++k) {
        if (tgt[s.j + k] == src[i]) {
          add_cand({static_cast<uint32_t>(s.j + k),
                    s.cost + static_cast<double>(k) * params.insert,
                    detail::kBeamStep, s.op, static_cast<uint16_t>(k), s.prev,
                    0});
        }
      }
    }
    // Segment openings, likewise only on a match for src[i].
    auto it = occurrences.find(src[i]);
    if (it != occurrences.end()) {
      const std::vector<uint32_t>& positions = it->second;
      const double reenter = gap[i] + params.jump_open;
      if (params.jump_per_char == 0.0) {
        // Every opening costs the same here, so they rank by target index
        // among themselves: at most beam_width of them can survive, and none
        // can when beam_width candidates are already strictly cheaper.
        std::size_t best = 0;
        for (std::size_t s = 1; s < steps.size(); ++s) {
          if (steps[s].cost < steps[best].cost ||
              (steps[s].cost == steps[best].cost && steps[s].j < steps[best].j)) {
            best = s;
          }
        }
        const double jump =
            steps.empty() ? kInf : steps[best].cost + params.jump_open;
        BeamCell open;
        if (pre <= reenter && pre <= jump) {
          open = {0, pre, detail::kBeamStart, 0, 0, -1, 0};
        } else if (reenter <= jump) {
          open = {0, reenter, detail::kBeamReenter, 0, 0, -1, 0};
        } else {
          open = {0, jump, detail::kBeamJump, steps[best].op, 0, steps[best].prev,
                  steps[best].j};
        }
        std::size_t cheaper = 0;
        for (const BeamCell& c : cands) cheaper += c.cost < open.cost;
        std::size_t added = 0;
        for (std::size_t q = 0; q < positions.size() && cheaper < params.beam_width &&
                                added < params.beam_width;
             ++q) {
          open.j = positions[q];
          if (stamp[open.j] == ctag && !(open.cost < cands[slot[open.j]].cost)) {
            continue;
          }
          add_cand(open);
          ++added;
        }
      } else {
        jump_cost.assign(positions.size(), kInf);
        jump_src.assign(positions.size(), 0);
        if (!steps.empty()) {
          order.resize(steps.size());
          for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
          std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return steps[a].j < steps[b].j;
          });
          const double pc = params.jump_per_char;
          // Sources at or left of the target.
          double best = kInf;
          std::size_t best_s = 0;
          std::size_t o = 0;
          for (std::size_t q = 0; q < positions.size(); ++q) {
            while (o < order.size() && steps[order[o]].j <= positions[q]) {
              const double v = steps[order[o]].cost -
                               pc * static_cast<double>(steps[order[o]].j);
              if (v < best) {
                best = v;
                best_s = order[o];
              }
              ++o;
            }
            const double c = best + pc * static_cast<double>(positions[q]);
            if (c < jump_cost[q]) {
              jump_cost[q] = c;
              jump_src[q] = best_s;
            }
          }
          // Sources right of the target.
          best = kInf;
          std::size_t r = order.size();
          for (std::size_t q = positions.size(); q-- > 0;) {
            while (r > 0 && steps[order[r - 1]].j > positions[q]) {
              --r;
              const double v = steps[order[r]].cost +
                               pc * static_cast<double>(steps[order[r]].j);
              if (v < best) {
                best = v;
                best_s = order[r];
              }
            }
            const double c = best - pc * static_cast<double>(positions[q]);
            if (c < jump_cost[q]) {
              jump_cost[q] = c;
              jump_src[q] = best_s;
            }
          }
          for (double& c : jump_cost) c += params.jump_open;
        }
        for (std::size_t q = 0; q < positions.size(); ++q) {
          const uint32_t j = positions[q];
          if (pre <= reenter && pre <= jump_cost[q]) {
            add_cand({j, pre, detail::kBeamStart, 0, 0, -1, 0});
          } else if (reenter <= jump_cost[q]) {
            add_cand({j, reenter, detail::kBeamReenter, 0, 0, -1, 0});
          } else {
            const StepState& s = steps[jump_src[q]];
            add_cand({j, jump_cost[q], detail::kBeamJump, s.op, 0, s.prev, s.j});
          }
        }
      }
    }

    auto better = [](const BeamCell& a, const BeamCell& b) {
      if (a.cost != b.cost) return a.cost < b.cost;
      return a.j < b.j;
    };
    if (cands.size() > params.beam_width) {
      std::nth_element(cands.begin(),
                       cands.begin() + static_cast<long>(params.beam_width),
                       cands.end(), better);
      cands.resize(params.beam_width);
    }
    std::sort(cands.begin(), cands.end(),
              [](const BeamCell& a, const BeamCell& b) { return a.j < b.j; });
    columns[i] = cands;
  }

  CharAlignment out;
  enum class Cursor { kExit, kGap, kCell, kDone };
  Cursor cursor;
  const double pre_m = u * static_cast<double>(m);
  if (exits[m].cost <= gap[m] && exits[m].cost <= pre_m) {
    out.score = exits[m].cost;
    cursor = Cursor::kExit;
  } else if (gap[m] <= pre_m) {
    out.score = gap[m];
    cursor = Cursor::kGap;
  } else {
    out.score = pre_m;
    cursor = Cursor::kDone;
  }

  detail::SegmentCollector collector;
  std::size_t i = m;
  int32_t idx = -1;
  while (cursor != Cursor::kDone) {
    if (cursor == Cursor::kExit) {
      const ExitRecord& e = exits[i];
      collector.open_end(i, e.j);
      collector.push(static_cast<EditOp>(e.op));
      idx = e.prev;
      --i;
      cursor = Cursor::kCell;
    } else if (cursor == Cursor::kGap) {
      if (gap_from_exit[i]) cursor = Cursor::kExit;
      --i;
    } else {
      const BeamCell& cell = columns[i][static_cast<std::size_t>(idx)];
      switch (cell.kind) {
        case detail::kBeamStep:
          for (uint16_t k = 0; k < cell.ins; ++k) {
            collector.push(EditOp::kIns);
          }
          collector.push(static_cast<EditOp>(cell.op));
          idx = cell.prev;
          --i;
          break;
        case detail::kBeamStart:
          collector.close_begin(i, cell.j);
          cursor = Cursor::kDone;
          break;
        case detail::kBeamReenter:
          collector.close_begin(i, cell.j);
          cursor = Cursor::kGap;
          break;
        case detail::kBeamJump:
          collector.close_begin(i, cell.j);
          collector.open_end(i, cell.from);
          collector.push(static_cast<EditOp>(cell.op));
          idx = cell.prev;
          --i;
          break;
        default:
          throw std::logic_error("align_beam: broken traceback");
      }
    }
  }
  out.segments = collector.take();
  tally(out);
  return out;
}

// Aligns a prepared page against a prepared passage. Returns nothing when
// fewer than `min_align_chars` source characters are covered.
inline std::optional<CharAlignment> align(const PreparedText& page,
                                          const PreparedText& passage,
                                          const AlignParams& params = {}) {
  if (page.text.empty() || passage.text.empty()) return std::nullopt;
  CharAlignment a = align_beam(page.text, passage.text, params);
  if (a.covered_chars < params.min_align_chars) return std::nullopt;
  a.page_ref = page.origin.ref();
  a.passage_ref = passage.origin.ref();
  a.work_id = passage.origin.work_id;
  return a;
}

inline CharAlignment align_exhaustive(const PreparedText& page,
                                      const PreparedText& passage,
                                      const AlignParams& params = {}) {
  CharAlignment a = align_exhaustive(std::u32string_view(page.text),
                                     std::u32string_view(passage.text), params);
  a.page_ref = page.origin.ref();
  a.passage_ref = passage.origin.ref();
  a.work_id = passage.origin.work_id;
  return a;
}

}  // namespace pen
