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

// Text preparation: page assembly from zoned ATR lines, edition passages,
// canonical decomposition, and the offset map from prepared characters back
// to source lines and columns.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pen/error.hpp"
#include "pen/unicode.hpp"

namespace pen {

struct SourceLine {
  std::string text;
  std::string zone;
};

struct SourcePage {
  std::string doc_id;
  std::string page_id;
  std::vector<SourceLine> lines;
  std::optional<std::string> language;  // informational only
};

struct EditionPassage {
  std::string work_id;
  std::string passage_id;
  std::string text;
  int64_t char_offset = 0;
  std::string language;
};

struct SourcePos {
  uint32_t line = 0;
  uint32_t column = 0;

  auto operator<=>(const SourcePos&) const = default;
};

struct Origin {
  enum class Kind { kPage, kPassage };
  Kind kind = Kind::kPage;
  std::string doc_id;      // page: manuscript id
  std::string page_id;     // page: page id
  std::string work_id;     // passage: work id
  std::string passage_id;  // passage: passage id
  std::string language;

  // Stable reference string used in records and indexes.
  std::string ref() const {
    return kind == Kind::kPage ? doc_id + "/" + page_id
                               : work_id + "#" + passage_id;
  }
};

// One kept source line inside a prepared text: [begin, end) excludes the
// joining newline.
struct LineRange {
  uint32_t source_line = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  uint32_t source_end = 0;  // one past the last source column
};

struct PreparedText {
  std::u32string text;
  std::vector<SourcePos> offsets;  // one entry per text code point
  std::vector<LineRange> lines;
  Origin origin;

  std::string utf8() const { return to_utf8(text); }
  std::size_t size() const { return text.size(); }
};

inline std::set<std::string> default_main_zones() {
  return {"main", "MainZone", "MainZone:column"};
}

namespace detail {

// Decomposes one source line, appending to `text` and `offsets`.
inline void append_decomposed(std::u32string_view line, uint32_t line_index,
                              int64_t column_base, std::u32string& text,
                              std::vector<SourcePos>& offsets) {
  for (std::size_t col = 0; col < line.size(); ++col) {
    const std::u32string parts = decompose_char(line[col]);
    for (char32_t c : parts) {
      text.push_back(c);
      offsets.push_back(
          {line_index, static_cast<uint32_t>(column_base +
                                             static_cast<int64_t>(col))});
    }
  }
}

// Reordering marks may permute offsets inside a combining run. Every mark of
// a run takes the run's smallest source position, which keeps the map
// non-decreasing without losing any source column.
inline void finish_offsets(std::u32string& text,
                           std::vector<SourcePos>& offsets) {
  canonical_order(text, &offsets);
  std::size_t i = 0;
  while (i < text.size()) {
    if (combining_class(text[i]) == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    SourcePos low = offsets[i];
    while (j < text.size() && combining_class(text[j]) != 0) {
      low = std::min(low, offsets[j]);
      ++j;
    }
    std::fill(offsets.begin() + static_cast<long>(i),
              offsets.begin() + static_cast<long>(j), low);
    i = j;
  }
}

}  // namespace detail

inline PreparedText prepare_page(const SourcePage& page,
                                 const std::set<std::string>& zone_filter) {
  PreparedText out;
  out.origin.kind = Origin::Kind::kPage;
  out.origin.doc_id = page.doc_id;
  out.origin.page_id = page.page_id;
  out.origin.language = page.language.value_or("");

  bool first = true;
  uint32_t previous_line = 0;
  std::size_t previous_length = 0;
  for (std::size_t li = 0; li < page.lines.size(); ++li) {
    const SourceLine& line = page.lines[li];
    if (zone_filter.count(line.zone) == 0) continue;
    const std::u32string decoded = to_u32(line.text);
    if (!first) {
      out.text.push_back(U'\n');
      out.offsets.push_back(
          {previous_line, static_cast<uint32_t>(previous_length)});
    }
    LineRange range;
    range.source_line = static_cast<uint32_t>(li);
    range.begin = out.text.size();
    detail::append_decomposed(decoded, static_cast<uint32_t>(li), 0, out.text,
                              out.offsets);
    range.end = out.text.size();
    range.source_end = static_cast<uint32_t>(decoded.size());
    out.lines.push_back(range);
    previous_line = static_cast<uint32_t>(li);
    previous_length = decoded.size();
    first = false;
  }
  if (out.lines.empty()) {
    throw Error(ErrorKind::kEmptyPage,
                "no main-text line survives zone filtering on " +
                    out.origin.ref());
  }
  detail::finish_offsets(out.text, out.offsets);
  return out;
}

inline PreparedText prepare_passage(const EditionPassage& passage) {
  if (passage.text.empty()) {
    throw Error(ErrorKind::kEmptyPassage,
                passage.work_id + "#" + passage.passage_id);
  }
  if (passage.char_offset < 0) {
    throw Error(ErrorKind::kInvalidArgument, "negative char_offset");
  }
  PreparedText out;
  out.origin.kind = Origin::Kind::kPassage;
  out.origin.work_id = passage.work_id;
  out.origin.passage_id = passage.passage_id;
  out.origin.language = passage.language;
  detail::append_decomposed(to_u32(passage.text), 0, passage.char_offset,
                            out.text, out.offsets);
  detail::finish_offsets(out.text, out.offsets);
  out.lines.push_back(
      {0, 0, out.text.size(),
       static_cast<uint32_t>(passage.char_offset +
                             static_cast<int64_t>(to_u32(passage.text).size()))});
  return out;
}

struct LineSpan {
  uint32_t line = 0;
  uint32_t column_begin = 0;
  uint32_t column_end = 0;  // exclusive

  bool operator==(const LineSpan&) const = default;
};

// Source line/column ranges covering prepared characters [begin, end).
inline std::vector<LineSpan> map_back(const PreparedText& prepared,
                                      std::size_t begin, std::size_t end) {
  if (begin > end || end > prepared.text.size()) {
    throw Error(ErrorKind::kOutOfBounds,
                "span [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") outside text of length " +
                    std::to_string(prepared.text.size()));
  }
  std::vector<LineSpan> out;
  const auto& offsets = prepared.offsets;
  // Closes the group whose last character is k: it extends up to the next
  // character's column on the same line, or to the end of the source line.
  auto close = [&](std::size_t k) {
    const SourcePos& pos = offsets[k];
    uint32_t stop = pos.column + 1;
    if (k + 1 < offsets.size() && offsets[k + 1].line == pos.line) {
      stop = std::max(stop, offsets[k + 1].column);
    } else {
      for (const LineRange& range : prepared.lines) {
        if (range.source_line == pos.line) {
          stop = std::max(stop, range.source_end);
        }
      }
    }
    out.back().column_end = std::max(out.back().column_end, stop);
  };
  for (std::size_t i = begin; i < end; ++i) {
    const SourcePos& pos = offsets[i];
    if (out.empty() || out.back().line != pos.line) {
      if (!out.empty()) close(i - 1);
      out.push_back({pos.line, pos.column, pos.column + 1});
    }
  }
  if (!out.empty()) close(end - 1);
  return out;
}

}  // namespace pen
