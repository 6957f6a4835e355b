// SPDX-License-Identifier: Apache-2.0
//
// Segmentation of a legal act's plain text into article-level documents.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace statute::corpus {

/// "Art. 415" or "Art. 109^1".
struct ArticleId {
  std::uint32_t base = 0;
  std::optional<std::uint32_t> superscript;

  std::string render() const;
  /// "415" or "109^1", the form used in citations lists.
  std::string short_form() const;

  auto operator<=>(const ArticleId&) const = default;
  bool operator==(const ArticleId&) const = default;
};

/// Repairs article numbers whose superscript was flattened into the base
/// during PDF to text conversion ("1091" standing for 109^1).
class FusedSuperscriptMap {
 public:
  FusedSuperscriptMap() = default;

  /// Registers a superscripted article; its fused form will resolve to it.
  void declare(const ArticleId& id);
  /// Every superscripted id becomes declared, except where the fused number
  /// collides with a plain article of the same list.
  static FusedSuperscriptMap from_ids(std::span<const ArticleId> ids);

  std::optional<ArticleId> resolve(std::uint32_t fused) const;
  bool empty() const noexcept { return fused_.empty(); }
  std::size_t size() const noexcept { return fused_.size(); }

 private:
  std::map<std::uint64_t, ArticleId> fused_;
};

enum class UnitKind { Book, Title, Division, Chapter, Section };

std::string_view to_string(UnitKind kind);
std::optional<UnitKind> unit_kind_from_string(std::string_view s);

struct StructuralUnit {
  UnitKind kind = UnitKind::Book;
  /// Keyword and number as written, e.g. "TYTUŁ II".
  std::string label;
  /// Heading name following the number, possibly empty.
  std::string name;
  /// Verbatim header lines, joined with '\n'.
  std::string heading;
  /// Half-open range of article indices.
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::size_t> parent;

  bool operator==(const StructuralUnit&) const = default;
};

struct Article {
  ArticleId id;
  /// Full body including the marker line, lines joined with '\n'.
  std::string text;
  std::vector<std::string> hierarchy_path;
  std::size_t char_len = 0;
  std::size_t approx_token_len = 0;

  bool operator==(const Article&) const = default;
};

/// Characters per token of the context-budget heuristic.
inline constexpr std::size_t kCharsPerToken = 4;

/// ceil(code points / 4).
std::size_t approx_tokens(std::string_view text);

/// Builds an article, computing its length fields.
Article make_article(ArticleId id, std::string text, std::vector<std::string> path = {});

struct LegalAct {
  std::string title;
  std::vector<StructuralUnit> units;
  std::vector<Article> articles;

  bool operator==(const LegalAct&) const = default;
};

/// Removes footnote lines, bracketed editorial notes and publication
/// header/footer lines. Throws EmptyInput when no article marker exists.
std::string normalize_source(std::string_view raw);

/// Throws MalformedHeader or DuplicateArticle.
LegalAct parse_act(std::string_view clean, const FusedSuperscriptMap* fused = nullptr);

/// Parses an article marker such as "Art. 109^1." or "Art. 109¹.". The
/// trailing dot is optional so rendered ids parse back to themselves.
/// Throws UnparsableMarker.
ArticleId canonical_article_id(std::string_view marker_text,
                               const FusedSuperscriptMap* fused = nullptr);

/// Lenient reference parser for data files: accepts "Art. 109^1", "art. 109¹",
/// "109^1" or "415".
std::optional<ArticleId> parse_article_ref(std::string_view text);

/// Places where the article sequence is not strictly increasing.
std::vector<std::string> ordering_warnings(const LegalAct& act);

/// Title, unit headings and article bodies in source order, one line each.
std::string reconstruct_text(const LegalAct& act);

inline constexpr int kCorpusSchemaVersion = 1;

/// Throws Error for an empty article list, IoError on write failure.
void save_corpus(const LegalAct& act, const std::filesystem::path& path);
/// Throws IoError or SchemaError.
LegalAct load_corpus(const std::filesystem::path& path);

}  // namespace statute::corpus
