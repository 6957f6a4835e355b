// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace statute {

/// Decodes UTF-8; malformed sequences decode to U+FFFD.
std::u32string utf8_to_u32(std::string_view s);
std::string u32_to_utf8(std::u32string_view s);

/// Number of code points in a UTF-8 string.
std::size_t utf8_length(std::string_view s);

/// Text prepared for positional matching: NFC, lowercased, whitespace runs
/// collapsed to one space and trimmed.
struct NormalizedText {
  std::u32string chars;
  /// Byte offset in the source string for each normalized code point, plus a
  /// trailing entry holding the end offset of the last contributing source
  /// character. Empty when built directly from code points.
  std::vector<std::size_t> origin_map;

  std::size_t size() const noexcept { return chars.size(); }
  bool empty() const noexcept { return chars.empty(); }
  std::u32string_view view() const noexcept { return chars; }

  bool operator==(const NormalizedText&) const = default;
};

NormalizedText normalize_text(std::string_view s);

}  // namespace statute
