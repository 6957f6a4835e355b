// SPDX-License-Identifier: Apache-2.0
#include "statute/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstring>

#if defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#define STATUTE_X86 1
#endif

#include "statute/errors.hpp"

namespace statute::scoring {
namespace {

// Code points below this bound resolve their query slot by table lookup;
// covers ASCII, Latin-1 and Latin Extended-A/B (all Polish letters).
constexpr char32_t kLowTableSize = 0x250;
constexpr std::uint8_t kNoSlot = 0xFF;

// One query position: the occurrence row of its symbol and its offset.
struct Term {
  const std::uint64_t* row;  // occurrence row advanced by q / 64 words
  std::uint64_t shift;       // q % 64
  std::uint64_t co_shift;    // 63 - shift
};

struct ScanInput {
  const Term* terms;  // padded to a multiple of 16 with zero rows
  std::size_t n_terms;
  std::size_t windows;
  std::size_t m;
  int width;          // counter slices, at least 4
};

#define STATUTE_INLINE inline __attribute__((always_inline))

template <int L>
struct VecOf;
template <>
struct VecOf<1> {
  typedef std::uint64_t type __attribute__((vector_size(8)));
};
template <>
struct VecOf<4> {
  typedef std::uint64_t type __attribute__((vector_size(32)));
};
template <>
struct VecOf<8> {
  typedef std::uint64_t type __attribute__((vector_size(64)));
};
template <int L>
using Vec = typename VecOf<L>::type;

template <int L>
STATUTE_INLINE Vec<L> load(const std::uint64_t* p) {
  Vec<L> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// 64*L window bits for one term, starting at window `base`.
template <int L>
STATUTE_INLINE Vec<L> term_bits(const Term& t, std::size_t base_word) {
  const std::uint64_t* p = t.row + base_word;
  return (load<L>(p) >> t.shift) | ((load<L>(p + 1) << 1) << t.co_shift);
}

// Carry-save adder: a + b + c = 2*h + l per bit.
template <int L>
STATUTE_INLINE void csa(Vec<L>& h, Vec<L>& l, Vec<L> a, Vec<L> b, Vec<L> c) {
  const Vec<L> u = a ^ b;
  h = (a & b) | (u & c);
  l = u ^ c;
}

// Bit-sliced window counters: slice[k] holds bit k of 64*L window counts.
// Terms are summed sixteen at a time through a carry-save tree, whose
// sixteens output is rippled into slices 4 and up.
template <int L>
STATUTE_INLINE Score scan_kernel(const ScanInput& in) {
  using V = Vec<L>;
  constexpr std::size_t kBlock = 64 * L;
  const std::size_t blocks = (in.windows + kBlock - 1) / kBlock;
  const int width = in.width;
  Score best;
  V slice[64];
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t base = b * kBlock;
    const std::size_t bw = base / 64;
    for (int k = 0; k < width; ++k) slice[k] = V{};
    V ones{}, twos{}, fours{}, eights{};
    for (std::size_t i = 0; i < in.n_terms; i += 16) {
      const Term* t = in.terms + i;
      V twos_a, twos_b, fours_a, fours_b, eights_a, eights_b, sixteens;
      csa<L>(twos_a, ones, ones, term_bits<L>(t[0], bw), term_bits<L>(t[1], bw));
      csa<L>(twos_b, ones, ones, term_bits<L>(t[2], bw), term_bits<L>(t[3], bw));
      csa<L>(fours_a, twos, twos, twos_a, twos_b);
      csa<L>(twos_a, ones, ones, term_bits<L>(t[4], bw), term_bits<L>(t[5], bw));
      csa<L>(twos_b, ones, ones, term_bits<L>(t[6], bw), term_bits<L>(t[7], bw));
      csa<L>(fours_b, twos, twos, twos_a, twos_b);
      csa<L>(eights_a, fours, fours, fours_a, fours_b);
      csa<L>(twos_a, ones, ones, term_bits<L>(t[8], bw), term_bits<L>(t[9], bw));
      csa<L>(twos_b, ones, ones, term_bits<L>(t[10], bw), term_bits<L>(t[11], bw));
      csa<L>(fours_a, twos, twos, twos_a, twos_b);
      csa<L>(twos_a, ones, ones, term_bits<L>(t[12], bw), term_bits<L>(t[13], bw));
      csa<L>(twos_b, ones, ones, term_bits<L>(t[14], bw), term_bits<L>(t[15], bw));
      csa<L>(fours_b, twos, twos, twos_a, twos_b);
      csa<L>(eights_b, fours, fours, fours_a, fours_b);
      csa<L>(sixteens, eights, eights, eights_a, eights_b);
      V carry = sixteens;
      for (int k = 4; k < width; ++k) {
        const V next = slice[k] & carry;
        slice[k] ^= carry;
        carry = next;
      }
    }
    slice[0] = ones;
    slice[1] = twos;
    slice[2] = fours;
    slice[3] = eights;

    for (int lane = 0; lane < L; ++lane) {
      const std::size_t lane_base = base + 64 * static_cast<std::size_t>(lane);
      if (lane_base >= in.windows) break;
      const std::size_t tail = in.windows - lane_base;
      std::uint64_t candidates = tail >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << tail) - 1;
      std::size_t lane_max = 0;
      for (int k = width - 1; k >= 0; --k) {
        const std::uint64_t hit = candidates & slice[k][lane];
        if (hit != 0) {
          candidates = hit;
          lane_max |= std::size_t{1} << k;
        }
      }
      if (lane_max > best.value) {
        best = {lane_max, lane_base + static_cast<std::size_t>(std::countr_zero(candidates))};
        if (best.value == in.m) return best;
      }
    }
  }
  return best;
}

Score scan_generic(const ScanInput& in) { return scan_kernel<1>(in); }

// Occurrence rows from per-position slot bytes: row s, word w gets bit i set
// when slots[64 * w + i] == s.
using MaskFn = void (*)(const std::uint8_t* slots, std::size_t sigma, std::size_t words, std::uint64_t* bits);

// Slot bytes for the longest prefix of whole vector blocks whose code points
// are all below kLowTableSize; returns the number of positions converted.
// `table` maps those code points to a slot or -1, whose low byte is kNoSlot.
using SlotFn = std::size_t (*)(const char32_t* cps, std::size_t len, const std::int32_t* table, std::uint8_t* out);

#ifdef STATUTE_X86
__attribute__((target("avx2"))) std::size_t slots_avx2(const char32_t* cps, std::size_t len, const std::int32_t* table,
                                                       std::uint8_t* out) {
  const __m256i limit = _mm256_set1_epi32(static_cast<int>(kLowTableSize) - 1);
  const __m256i low_bytes = _mm256_setr_epi8(0, 4, 8, 12, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  //
                                             0, 4, 8, 12, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1);
  const __m256i gather_lanes = _mm256_setr_epi32(0, 4, 0, 0, 0, 0, 0, 0);
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(cps + i));
    if (!_mm256_testz_si256(_mm256_cmpgt_epi32(v, limit), _mm256_set1_epi32(-1))) break;
    const __m256i slot = _mm256_i32gather_epi32(table, v, 4);
    const __m256i packed = _mm256_permutevar8x32_epi32(_mm256_shuffle_epi8(slot, low_bytes), gather_lanes);
    _mm_storel_epi64(reinterpret_cast<__m128i*>(out + i), _mm256_castsi256_si128(packed));
  }
  return i;
}

__attribute__((target("avx512f"))) std::size_t slots_avx512(const char32_t* cps, std::size_t len,
                                                            const std::int32_t* table, std::uint8_t* out) {
  const __m512i limit = _mm512_set1_epi32(static_cast<int>(kLowTableSize));
  std::size_t i = 0;
  for (; i + 16 <= len; i += 16) {
    const __m512i v = _mm512_loadu_si512(cps + i);
    if (_mm512_cmpge_epu32_mask(v, limit) != 0) break;
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), _mm512_cvtepi32_epi8(_mm512_i32gather_epi32(v, table, 4)));
  }
  return i;
}

__attribute__((target("avx2"))) Score scan_avx2(const ScanInput& in) { return scan_kernel<4>(in); }
__attribute__((target("avx512f"))) Score scan_avx512(const ScanInput& in) { return scan_kernel<8>(in); }

__attribute__((target("avx2"))) void masks_avx2(const std::uint8_t* slots, std::size_t sigma, std::size_t words,
                                                std::uint64_t* bits) {
  for (std::size_t s = 0; s < sigma; ++s) {
    const __m256i key = _mm256_set1_epi8(static_cast<char>(s));
    std::uint64_t* row = bits + s * words;
    for (std::size_t w = 0; w < words; ++w) {
      const auto* p = reinterpret_cast<const __m256i*>(slots + 64 * w);
      const auto lo = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(_mm256_loadu_si256(p), key)));
      const auto hi =
          static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(_mm256_loadu_si256(p + 1), key)));
      row[w] = lo | (std::uint64_t{hi} << 32);
    }
  }
}

__attribute__((target("avx512f,avx512bw"))) void masks_avx512(const std::uint8_t* slots, std::size_t sigma,
                                                              std::size_t words, std::uint64_t* bits) {
  for (std::size_t s = 0; s < sigma; ++s) {
    const __m512i key = _mm512_set1_epi8(static_cast<char>(s));
    std::uint64_t* row = bits + s * words;
    for (std::size_t w = 0; w < words; ++w) row[w] = _mm512_cmpeq_epi8_mask(_mm512_loadu_si512(slots + 64 * w), key);
  }
}
#endif

using ScanFn = Score (*)(const ScanInput&);

struct Kernel {
  ScanFn fn;
  MaskFn masks;  // null: rows are filled position by position
  SlotFn slots;
  int lanes;
};

SimdLevel supported_level() {
#ifdef STATUTE_X86
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw")) return SimdLevel::Avx512;
  if (__builtin_cpu_supports("avx2")) return SimdLevel::Avx2;
#endif
  return SimdLevel::Generic;
}

std::atomic<int> g_simd_limit{static_cast<int>(SimdLevel::Avx512)};

const Kernel& kernel() {
  static const SimdLevel supported = supported_level();
  static const Kernel generic{scan_generic, nullptr, nullptr, 1};
  const auto level = std::min(static_cast<int>(supported), g_simd_limit.load(std::memory_order_relaxed));
#ifdef STATUTE_X86
  static const Kernel avx2{scan_avx2, masks_avx2, slots_avx2, 4};
  static const Kernel avx512{scan_avx512, masks_avx512, slots_avx512, 8};
  if (level == static_cast<int>(SimdLevel::Avx512)) return avx512;
  if (level == static_cast<int>(SimdLevel::Avx2)) return avx2;
#endif
  return generic;
}

}  // namespace

SimdLevel active_simd_level() {
  const Kernel& k = kernel();
  return k.lanes == 8 ? SimdLevel::Avx512 : k.lanes == 4 ? SimdLevel::Avx2 : SimdLevel::Generic;
}

void limit_simd_level(SimdLevel level) { g_simd_limit.store(static_cast<int>(level), std::memory_order_relaxed); }

std::size_t score_part(std::u32string_view part, std::u32string_view query) {
  if (part.size() != query.size()) throw LengthMismatch();
  std::size_t score = 0;
  for (std::size_t i = 0; i < part.size(); ++i)
    if (part[i] == query[i]) ++score;
  return score;
}

Score score_document_naive(std::u32string_view doc, std::u32string_view query,
                           ShortDocPolicy policy) {
  if (query.empty()) throw EmptyQuery();
  if (doc.size() < query.size()) {
    if (policy == ShortDocPolicy::Strict || doc.empty()) return {};
    return score_document_naive(query, doc, policy);
  }
  Score best;
  for (std::size_t i = 0; i + query.size() <= doc.size(); ++i) {
    const std::size_t part_score = score_part(doc.substr(i, query.size()), query);
    if (part_score > best.value) best = {part_score, i};
  }
  return best;
}

Score score_document_fast(std::u32string_view doc, std::u32string_view query,
                          ShortDocPolicy policy) {
  return QueryPattern(query, policy).score(doc);
}

QueryPattern::QueryPattern(std::u32string_view query, ShortDocPolicy policy)
    : query_(query), policy_(policy) {
  if (query_.empty()) throw EmptyQuery();
  alphabet_.assign(query_.begin(), query_.end());
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());

  low_table_.assign(kLowTableSize, -1);
  for (std::size_t s = 0; s < alphabet_.size(); ++s)
    if (alphabet_[s] < kLowTableSize) low_table_[alphabet_[s]] = static_cast<std::int32_t>(s);

  position_slot_.reserve(query_.size());
  for (char32_t cp : query_) position_slot_.push_back(slot_of(cp));
}

int QueryPattern::slot_of(char32_t cp) const noexcept {
  if (cp < kLowTableSize) return low_table_[cp];
  const auto it = std::lower_bound(alphabet_.begin(), alphabet_.end(), cp);
  if (it == alphabet_.end() || *it != cp) return -1;
  return static_cast<int>(it - alphabet_.begin());
}

Score QueryPattern::score(std::u32string_view doc) const {
  if (doc.size() < query_.size()) {
    if (policy_ == ShortDocPolicy::Strict || doc.empty()) return {};
    return QueryPattern(doc, policy_).scan(query_);
  }
  return scan(doc);
}

// For every query alphabet symbol, a bitmask over document positions marks
// where it occurs. Query position q contributes the mask shifted by q, so bit
// i of that word says whether window i matches at q. Those bits are summed
// per window in bit-sliced counters, then each block's maximum is read off
// the slices from the top bit down.
Score QueryPattern::scan(std::u32string_view doc) const {
  const std::size_t n = doc.size();
  const std::size_t m = query_.size();
  const std::size_t sigma = alphabet_.size();
  const std::size_t windows = n - m + 1;
  const Kernel& k = kernel();
  // Windows per chunk; a chunk's rows stay cache resident.
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunk_windows = std::min(windows, kChunk);
  // Room for the chunk's positions plus the widest shifted read past them.
  const std::size_t words = (chunk_windows + m) / 64 + 2 * static_cast<std::size_t>(k.lanes) + 2;

  // Row `sigma` collects symbols outside the query alphabet; row sigma+1 is
  // the zero row used to pad terms.
  std::vector<std::uint64_t> bits((sigma + 2) * words, 0);
  std::uint64_t* const zero_row = bits.data() + (sigma + 1) * words;

  std::vector<Term> terms;
  terms.reserve(m + 16);
  for (std::size_t q = 0; q < m; ++q) {
    const auto s = static_cast<std::size_t>(position_slot_[q]);
    terms.push_back({bits.data() + s * words + q / 64, q % 64, 63 - q % 64});
  }
  while (terms.size() % 16 != 0) terms.push_back({zero_row, 0, 63});
  ScanInput in{terms.data(), terms.size(), 0, m, std::max(static_cast<int>(std::bit_width(m)), 4)};

  // Slot bytes need sigma below the 0xFF "absent" marker.
  const bool byte_slots = k.masks != nullptr && sigma < kNoSlot;
  std::vector<std::uint8_t> slots(byte_slots ? words * 64 : 0);

  Score best;
  for (std::size_t base = 0; base < windows; base += kChunk) {
    in.windows = std::min(kChunk, windows - base);
    const std::size_t end = std::min(n, base + in.windows + m - 1);
    if (byte_slots) {
      const std::size_t len = end - base;
      std::size_t r = 0;
      while (r < len) {
        r += k.slots(doc.data() + base + r, len - r, low_table_.data(), slots.data() + r);
        // Scalar up to the next 16-position boundary, or to the end.
        const std::size_t stop = std::min(len, (r / 16 + 1) * 16);
        for (; r < stop; ++r) {
          const char32_t cp = doc[base + r];
          const int s = slot_of(cp);
          slots[r] = s < 0 ? kNoSlot : static_cast<std::uint8_t>(s);
        }
      }
      std::fill(slots.begin() + static_cast<std::ptrdiff_t>(len), slots.end(), kNoSlot);
      k.masks(slots.data(), sigma, words, bits.data());
    } else {
      std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>((sigma + 1) * words), 0);
      for (std::size_t j = base; j < end; ++j) {
        const char32_t cp = doc[j];
        int s = cp < kLowTableSize ? low_table_[cp] : slot_of(cp);
        if (s < 0) s = static_cast<int>(sigma);
        const std::size_t r = j - base;
        bits[static_cast<std::size_t>(s) * words + (r >> 6)] |= std::uint64_t{1} << (r & 63);
      }
    }
    const Score local = k.fn(in);
    if (local.value > best.value) {
      best = {local.value, base + local.best_offset};
      if (best.value == m) break;
    }
  }
  return best;
}

}  // namespace statute::scoring
