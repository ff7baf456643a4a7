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

// Code point level helpers: UTF-8 transcoding, canonical decomposition and
// character classes. Character data comes from ICU.

#pragma once

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pen {

inline constexpr char32_t kReplacementChar = 0xFFFD;

// Decodes UTF-8. Malformed sequences become U+FFFD.
inline std::u32string to_u32(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
  const int32_t length = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    out.push_back(c < 0 ? kReplacementChar : static_cast<char32_t>(c));
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

inline std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) append_utf8(out, c);
  return out;
}

// Number of bytes the code point occupies in UTF-8.
inline std::size_t utf8_width(char32_t c) {
  if (c < 0x80) return 1;
  if (c < 0x800) return 2;
  if (c < 0x10000) return 3;
  return 4;
}

inline std::size_t utf8_size(std::u32string_view text) {
  std::size_t n = 0;
  for (char32_t c : text) n += utf8_width(c);
  return n;
}

namespace detail {

inline const icu::Normalizer2& nfd_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status) || nfd == nullptr) {
    throw std::runtime_error(std::string("ICU NFD unavailable: ") +
                             u_errorName(status));
  }
  return *nfd;
}

inline const icu::Normalizer2& nfc_instance() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || nfc == nullptr) {
    throw std::runtime_error(std::string("ICU NFC unavailable: ") +
                             u_errorName(status));
  }
  return *nfc;
}

inline icu::UnicodeString to_icu(std::u32string_view text) {
  icu::UnicodeString s;
  for (char32_t c : text) s.append(static_cast<UChar32>(c));
  return s;
}

inline std::u32string from_icu(const icu::UnicodeString& s) {
  std::u32string out;
  out.reserve(static_cast<std::size_t>(s.length()));
  for (int32_t i = 0; i < s.length();) {
    UChar32 c = s.char32At(i);
    out.push_back(static_cast<char32_t>(c));
    i += U16_LENGTH(c);
  }
  return out;
}

}  // namespace detail

inline uint8_t combining_class(char32_t c) {
  return u_getCombiningClass(static_cast<UChar32>(c));
}

// Full canonical decomposition of a single code point (no reordering).
inline std::u32string decompose_char(char32_t c) {
  icu::UnicodeString mapping;
  if (detail::nfd_instance().getDecomposition(static_cast<UChar32>(c),
                                              mapping)) {
    return detail::from_icu(mapping);
  }
  return std::u32string(1, c);
}

// Stable sort of every run of non-starters by combining class, applied in
// place. `carry` is permuted along with the text when non-empty.
template <typename T>
void canonical_order(std::u32string& text, std::vector<T>* carry = nullptr) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (combining_class(text[i]) == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && combining_class(text[j]) != 0) ++j;
    if (j - i > 1) {
      std::vector<std::size_t> order(j - i);
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = i + k;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return combining_class(text[a]) <
                                combining_class(text[b]);
                       });
      std::u32string run;
      std::vector<T> carried;
      for (std::size_t k : order) {
        run.push_back(text[k]);
        if (carry != nullptr) carried.push_back((*carry)[k]);
      }
      std::copy(run.begin(), run.end(), text.begin() + static_cast<long>(i));
      if (carry != nullptr) {
        std::copy(carried.begin(), carried.end(),
                  carry->begin() + static_cast<long>(i));
      }
    }
    i = j;
  }
}

// Canonical decomposition (NFD).
inline std::u32string canonical_decompose(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (char32_t c : text) out += decompose_char(c);
  canonical_order<int>(out, nullptr);
  return out;
}

inline std::string canonical_decompose_utf8(std::string_view text) {
  return to_utf8(canonical_decompose(to_u32(text)));
}

// Canonical composition (NFC), used only for presentation.
inline std::u32string canonical_compose(std::u32string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString composed =
      detail::nfc_instance().normalize(detail::to_icu(text), status);
  if (U_FAILURE(status)) {
    throw std::runtime_error(std::string("NFC failed: ") + u_errorName(status));
  }
  return detail::from_icu(composed);
}

inline bool is_combining_mark(char32_t c) {
  const int8_t t = u_charType(static_cast<UChar32>(c));
  return t == U_NON_SPACING_MARK || t == U_ENCLOSING_MARK ||
         t == U_COMBINING_SPACING_MARK;
}

inline bool is_whitespace(char32_t c) {
  return u_isUWhiteSpace(static_cast<UChar32>(c));
}

// General category P*.
inline bool is_unicode_punctuation(char32_t c) {
  return u_ispunct(static_cast<UChar32>(c));
}

inline bool is_letter(char32_t c) { return u_isalpha(static_cast<UChar32>(c)); }

inline bool is_digit(char32_t c) { return u_isdigit(static_cast<UChar32>(c)); }

inline bool is_upper(char32_t c) { return u_isupper(static_cast<UChar32>(c)); }

inline char32_t to_lower(char32_t c) {
  return static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
}

inline char32_t to_upper(char32_t c) {
  return static_cast<char32_t>(u_toupper(static_cast<UChar32>(c)));
}

inline std::u32string to_lower(std::u32string_view text) {
  std::u32string out(text);
  for (char32_t& c : out) c = to_lower(c);
  return out;
}

// Splits on Unicode whitespace, dropping empty pieces.
inline std::vector<std::u32string> split_whitespace(std::u32string_view text) {
  std::vector<std::u32string> out;
  std::u32string current;
  for (char32_t c : text) {
    if (is_whitespace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

}  // namespace pen
