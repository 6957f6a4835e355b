// SPDX-License-Identifier: Apache-2.0
#include "statute/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <stdexcept>

namespace statute {
namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decodes one code point starting at s[i]; advances i.
char32_t decode_one(std::string_view s, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++i;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++i;
    return kReplacement;
  }
  if (i + len > s.size()) {
    ++i;
    return kReplacement;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto c = static_cast<unsigned char>(s[i + k]);
    if ((c & 0xC0) != 0x80) {
      ++i;
      return kReplacement;
    }
    cp = (cp << 6) | (c & 0x3F);
  }
  i += len;
  // Overlong forms, surrogates and out-of-range values.
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
      (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
    return kReplacement;
  return cp;
}

void encode_one(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFC data unavailable");
  return *n;
}

// NFC + lowercase of one normalization segment, appended as code points.
void fold_segment(const icu::Normalizer2& norm, std::u32string_view segment, std::u32string& out) {
  icu::UnicodeString us;
  for (char32_t cp : segment) us.append(static_cast<UChar32>(cp));
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString composed = norm.normalize(us, status);
  if (U_FAILURE(status)) composed = us;
  composed.toLower(icu::Locale::getRoot());
  for (int32_t k = 0; k < composed.length();) {
    const UChar32 c = composed.char32At(k);
    out.push_back(static_cast<char32_t>(c));
    k += U16_LENGTH(c);
  }
}

}  // namespace

std::u32string utf8_to_u32(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) out.push_back(decode_one(s, i));
  return out;
}

std::string u32_to_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) encode_one(cp, out);
  return out;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++n) decode_one(s, i);
  return n;
}

// The source is cut into segments at NFC boundaries; each segment is
// composed and lowercased on its own so every output code point can be traced
// to the byte offset where its segment starts. Context-dependent case
// mappings (Greek final sigma) are therefore not applied.
NormalizedText normalize_text(std::string_view s) {
  const icu::Normalizer2& norm = nfc();

  std::vector<char32_t> cps;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < s.size();) {
    offsets.push_back(i);
    cps.push_back(decode_one(s, i));
  }
  offsets.push_back(s.size());

  NormalizedText out;
  out.chars.reserve(cps.size());
  out.origin_map.reserve(cps.size() + 1);
  bool pending_space = false;
  std::size_t space_origin = 0;
  std::size_t end_origin = 0;

  std::size_t i = 0;
  while (i < cps.size()) {
    if (u_isUWhiteSpace(static_cast<UChar32>(cps[i]))) {
      if (!pending_space) space_origin = offsets[i];
      pending_space = !out.chars.empty();
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < cps.size() && !u_isUWhiteSpace(static_cast<UChar32>(cps[j])) &&
           !norm.hasBoundaryBefore(static_cast<UChar32>(cps[j])))
      ++j;
    if (pending_space) {
      out.chars.push_back(U' ');
      out.origin_map.push_back(space_origin);
      pending_space = false;
    }
    const std::size_t before = out.chars.size();
    fold_segment(norm, std::u32string_view(cps.data() + i, j - i), out.chars);
    out.origin_map.insert(out.origin_map.end(), out.chars.size() - before, offsets[i]);
    end_origin = offsets[j];
    i = j;
  }
  out.origin_map.push_back(end_origin);
  return out;
}

}  // namespace statute
