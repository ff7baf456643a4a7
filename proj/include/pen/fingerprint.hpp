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

// Character n-gram fingerprinting of edition passages and candidate
// generation for page/passage alignment.
//
// Grams are windows of n consecutive "filterable" code points, i.e. the text
// with whitespace and punctuation removed. Combining marks stay inside grams.
// Each gram is hashed with 64-bit FNV-1a over the little-endian UTF-32
// encoding of its code points. Collisions are tolerated: the aligner verifies
// every candidate.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pen/error.hpp"
#include "pen/textprep.hpp"
#include "pen/unicode.hpp"

namespace pen {

// Punctuation used by scribes that is not always P* in Unicode data.
inline constexpr std::array<char32_t, 8> kMedievalPunctuation = {
    U'·',  // middle dot (punctus)
    U'⹎',  // punctus elevatus
    U'⹍',  // paragraphus
    U'⸫',  // one dot over two dots
    U'⸬',  // squared four dot
    U'⁖',  // three dot punctuation
    U'⁘',  // four dot punctuation
    U'⁏',  // reversed semicolon
};

inline bool is_gram_punctuation(char32_t c) {
  if (is_unicode_punctuation(c)) return true;
  return std::find(kMedievalPunctuation.begin(), kMedievalPunctuation.end(),
                   c) != kMedievalPunctuation.end();
}

inline bool is_filterable(char32_t c) {
  return !is_whitespace(c) && !is_gram_punctuation(c);
}

inline uint64_t gram_hash(std::span<const char32_t> code_points) {
  uint64_t h = 14695981039346656037ULL;
  for (char32_t c : code_points) {
    for (int shift = 0; shift < 32; shift += 8) {
      h ^= static_cast<uint64_t>((c >> shift) & 0xFF);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

struct Gram {
  uint64_t hash = 0;
  std::size_t position = 0;  // window start in the unstripped text

  bool operator==(const Gram&) const = default;
};

inline std::vector<Gram> extract_grams(std::u32string_view text,
                                       std::size_t n) {
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "gram length n < 2");
  std::vector<char32_t> kept;
  std::vector<std::size_t> where;
  kept.reserve(text.size());
  where.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_filterable(text[i])) {
      kept.push_back(text[i]);
      where.push_back(i);
    }
  }
  std::vector<Gram> out;
  if (kept.size() < n) return out;
  out.reserve(kept.size() - n + 1);
  for (std::size_t i = 0; i + n <= kept.size(); ++i) {
    out.push_back({gram_hash(std::span<const char32_t>(kept).subspan(i, n)),
                   where[i]});
  }
  return out;
}

struct Posting {
  uint64_t hash = 0;
  uint32_t passage = 0;
  uint32_t position = 0;

  auto operator<=>(const Posting&) const = default;
};

class GramIndex {
 public:
  static constexpr char kMagic[8] = {'P', 'E', 'N', 'G', 'R', 'A', 'M', 'S'};
  static constexpr uint32_t kVersion = 1;

  GramIndex() = default;
  GramIndex(std::size_t n, std::size_t doc_freq_cap)
      : n_(n), doc_freq_cap_(doc_freq_cap) {}

  std::size_t n() const { return n_; }
  std::size_t doc_freq_cap() const { return doc_freq_cap_; }
  const std::vector<std::string>& passages() const { return passages_; }
  const std::vector<Posting>& postings() const { return postings_; }
  bool empty() const { return postings_.empty(); }

  // Postings for one hash, sorted by (passage, position).
  std::span<const Posting> lookup(uint64_t hash) const {
    auto lo = std::lower_bound(
        postings_.begin(), postings_.end(), hash,
        [](const Posting& p, uint64_t h) { return p.hash < h; });
    auto hi = std::upper_bound(
        lo, postings_.end(), hash,
        [](uint64_t h, const Posting& p) { return h < p.hash; });
    return {postings_.data() + (lo - postings_.begin()),
            static_cast<std::size_t>(hi - lo)};
  }

  // Number of distinct passages holding `hash`.
  std::size_t doc_freq(uint64_t hash) const {
    std::size_t count = 0;
    uint32_t last = UINT32_MAX;
    for (const Posting& p : lookup(hash)) {
      if (p.passage != last) ++count;
      last = p.passage;
    }
    return count;
  }

  void save(const std::string& path) const;
  static GramIndex load(const std::string& path);

  bool operator==(const GramIndex&) const = default;

 private:
  friend class GramIndexBuilder;

  std::size_t n_ = 10;
  std::size_t doc_freq_cap_ = 100;
  std::vector<std::string> passages_;
  std::vector<Posting> postings_;
};

// Accumulates passages into hash-range partitions; finish() merges the
// partitions and applies the document-frequency cap.
class GramIndexBuilder {
 public:
  static constexpr int kPartitionBits = 4;

  GramIndexBuilder(std::size_t n = 10, std::size_t doc_freq_cap = 100)
      : n_(n), doc_freq_cap_(doc_freq_cap),
        partitions_(std::size_t{1} << kPartitionBits) {
    if (n < 2) throw Error(ErrorKind::kInvalidArgument, "gram length n < 2");
    if (doc_freq_cap < 1) {
      throw Error(ErrorKind::kInvalidArgument, "doc_freq_cap < 1");
    }
  }

  // Returns the passage number assigned in the index.
  uint32_t add(const PreparedText& passage) {
    const auto id = static_cast<uint32_t>(passages_.size());
    passages_.push_back(passage.origin.ref());
    for (const Gram& g : extract_grams(passage.text, n_)) {
      partitions_[g.hash >> (64 - kPartitionBits)].push_back(
          {g.hash, id, static_cast<uint32_t>(g.position)});
    }
    return id;
  }

  GramIndex finish() && {
    GramIndex index(n_, doc_freq_cap_);
    index.passages_ = std::move(passages_);
    std::size_t total = 0;
    for (auto& part : partitions_) {
      std::sort(part.begin(), part.end());
      total += part.size();
    }
    std::vector<Posting> merged;
    merged.reserve(total);
    for (auto& part : partitions_) {
      merged.insert(merged.end(), part.begin(), part.end());
      std::vector<Posting>().swap(part);
    }
    // Cap after the merge.
    std::size_t i = 0;
    while (i < merged.size()) {
      std::size_t j = i;
      std::size_t df = 0;
      uint32_t last = UINT32_MAX;
      while (j < merged.size() && merged[j].hash == merged[i].hash) {
        if (merged[j].passage != last) ++df;
        last = merged[j].passage;
        ++j;
      }
      if (df < doc_freq_cap_) {
        index.postings_.insert(index.postings_.end(), merged.begin() + i,
                               merged.begin() + j);
      }
      i = j;
    }
    return index;
  }

 private:
  std::size_t n_;
  std::size_t doc_freq_cap_;
  std::vector<std::string> passages_;
  std::vector<std::vector<Posting>> partitions_;
};

inline GramIndex build_index(std::span<const PreparedText> passages,
                             std::size_t n = 10,
                             std::size_t doc_freq_cap = 100) {
  GramIndexBuilder builder(n, doc_freq_cap);
  for (const PreparedText& p : passages) builder.add(p);
  return std::move(builder).finish();
}

struct CandidatePair {
  std::string page_ref;
  uint32_t passage = 0;
  std::string passage_ref;
  std::size_t shared_grams = 0;

  bool operator==(const CandidatePair&) const = default;
};

// Passages sharing at least `min_shared` distinct gram hashes with the page,
// by shared count descending then passage number.
inline std::vector<CandidatePair> candidates(const PreparedText& page,
                                             const GramIndex& index,
                                             std::size_t min_shared = 5) {
  std::vector<uint64_t> hashes;
  for (const Gram& g : extract_grams(page.text, index.n())) {
    hashes.push_back(g.hash);
  }
  std::sort(hashes.begin(), hashes.end());
  hashes.erase(std::unique(hashes.begin(), hashes.end()), hashes.end());

  std::unordered_map<uint32_t, std::size_t> shared;
  for (uint64_t h : hashes) {
    uint32_t last = UINT32_MAX;
    for (const Posting& p : index.lookup(h)) {
      if (p.passage != last) ++shared[p.passage];
      last = p.passage;
    }
  }
  std::vector<CandidatePair> out;
  for (const auto& [passage, count] : shared) {
    if (count >= min_shared) {
      out.push_back({page.origin.ref(), passage, index.passages()[passage],
                     count});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const CandidatePair& a, const CandidatePair& b) {
              if (a.shared_grams != b.shared_grams) {
                return a.shared_grams > b.shared_grams;
              }
              return a.passage < b.passage;
            });
  return out;
}

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorKind::kFormatError, "truncated index file");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw Error(ErrorKind::kFormatError, "truncated index file");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

// Layout (little-endian): magic[8] "PENGRAMS", u32 version, u32 n,
// u32 doc_freq_cap, u32 reserved, u64 passage_count, u64 posting_count,
// passage_count x (u32 length, UTF-8 ref), posting_count x (u64 hash,
// u32 passage, u32 position). See docs/index-format.md.
inline void GramIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kMissingInput, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  detail::put_u32(out, kVersion);
  detail::put_u32(out, static_cast<uint32_t>(n_));
  detail::put_u32(out, static_cast<uint32_t>(doc_freq_cap_));
  detail::put_u32(out, 0);
  detail::put_u64(out, passages_.size());
  detail::put_u64(out, postings_.size());
  for (const std::string& ref : passages_) {
    detail::put_u32(out, static_cast<uint32_t>(ref.size()));
    out.write(ref.data(), static_cast<std::streamsize>(ref.size()));
  }
  for (const Posting& p : postings_) {
    detail::put_u64(out, p.hash);
    detail::put_u32(out, p.passage);
    detail::put_u32(out, p.position);
  }
  if (!out) throw Error(ErrorKind::kFormatError, "write failed for " + path);
}

inline GramIndex GramIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingInput, "cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw Error(ErrorKind::kFormatError, path + " is not a gram index");
  }
  const uint32_t version = detail::get_u32(in);
  if (version != kVersion) {
    throw Error(ErrorKind::kFormatError,
                "unsupported index version " + std::to_string(version));
  }
  GramIndex index;
  index.n_ = detail::get_u32(in);
  index.doc_freq_cap_ = detail::get_u32(in);
  detail::get_u32(in);
  const uint64_t passage_count = detail::get_u64(in);
  const uint64_t posting_count = detail::get_u64(in);
  index.passages_.reserve(passage_count);
  for (uint64_t i = 0; i < passage_count; ++i) {
    const uint32_t len = detail::get_u32(in);
    std::string ref(len, '\0');
    if (!in.read(ref.data(), len)) {
      throw Error(ErrorKind::kFormatError, "truncated index file");
    }
    index.passages_.push_back(std::move(ref));
  }
  index.postings_.reserve(posting_count);
  for (uint64_t i = 0; i < posting_count; ++i) {
    Posting p;
    p.hash = detail::get_u64(in);
    p.passage = detail::get_u32(in);
    p.position = detail::get_u32(in);
    if (p.passage >= passage_count) {
      throw Error(ErrorKind::kFormatError, "posting refers to unknown passage");
    }
    index.postings_.push_back(p);
  }
  return index;
}

}  // namespace pen
