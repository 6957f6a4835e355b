// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "statute/text.hpp"

namespace statute::scoring {

/// Best positional match of a query inside a document.
struct Score {
  std::size_t value = 0;
  /// Start of the lowest window achieving `value`. When the document is
  /// shorter than the query and roles are swapped, this is the offset of the
  /// document inside the query.
  std::size_t best_offset = 0;

  bool operator==(const Score&) const = default;
};

/// What to do when the document is shorter than the query.
enum class ShortDocPolicy {
  /// Slide the document over the query instead (symmetric).
  Swap,
  /// No window exists, score is zero.
  Strict,
};

/// Count of index-aligned equal code points. Throws LengthMismatch.
std::size_t score_part(std::u32string_view part, std::u32string_view query);

/// Reference scorer: every window, every position. Throws EmptyQuery.
Score score_document_naive(std::u32string_view doc, std::u32string_view query,
                           ShortDocPolicy policy = ShortDocPolicy::Swap);

/// Bit-parallel scorer, identical results to score_document_naive.
Score score_document_fast(std::u32string_view doc, std::u32string_view query,
                          ShortDocPolicy policy = ShortDocPolicy::Swap);

inline Score score_document_naive(const NormalizedText& doc, const NormalizedText& query,
                                  ShortDocPolicy policy = ShortDocPolicy::Swap) {
  return score_document_naive(doc.view(), query.view(), policy);
}
inline Score score_document_fast(const NormalizedText& doc, const NormalizedText& query,
                                 ShortDocPolicy policy = ShortDocPolicy::Swap) {
  return score_document_fast(doc.view(), query.view(), policy);
}

/// Instruction set used by the fast scorer, chosen at run time.
enum class SimdLevel { Generic = 0, Avx2 = 1, Avx512 = 2 };

SimdLevel active_simd_level();
/// Caps the level the fast scorer may use; results do not depend on it.
void limit_simd_level(SimdLevel level);

/// A query compiled once for scoring many documents. Holds the query's
/// alphabet and per-position slots; immutable and shareable across threads.
class QueryPattern {
 public:
  /// Throws EmptyQuery.
  explicit QueryPattern(std::u32string_view query, ShortDocPolicy policy = ShortDocPolicy::Swap);

  Score score(std::u32string_view doc) const;
  std::size_t size() const noexcept { return query_.size(); }
  std::u32string_view query() const noexcept { return query_; }

 private:
  // Slot of a code point in the query alphabet, or -1.
  int slot_of(char32_t cp) const noexcept;
  Score scan(std::u32string_view doc) const;

  std::u32string query_;
  ShortDocPolicy policy_;
  std::vector<char32_t> alphabet_;          // sorted distinct code points
  std::vector<std::int32_t> position_slot_;  // slot of query_[q]
  std::vector<std::int32_t> low_table_;      // direct slot lookup for small code points
};

}  // namespace statute::scoring
