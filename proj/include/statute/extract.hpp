// SPDX-License-Identifier: Apache-2.0
//
// Deterministic extraction of the chosen option and cited articles from a
// free-text assistant answer (Polish or English).
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "statute/corpus.hpp"

namespace statute::eval {

enum class Choice { A, B, C };

char to_char(Choice c);
std::optional<Choice> choice_from_char(char c);

struct ExtractedResponse {
  std::optional<Choice> choice;
  /// Deduplicated, in order of first mention.
  std::vector<corpus::ArticleId> cited_articles;
  std::string raw_text;

  bool operator==(const ExtractedResponse&) const = default;
};

/// The option named by an answer phrase ("The correct answer is: c)",
/// "Answer: b)", "Odpowiedź: a"); failing that, the single letter used in
/// leading "a)" / "b)" / "c)" lines.
std::optional<Choice> extract_choice(std::string_view text);

/// Article citations such as "art. 415 k.c.", "Art. 109^1 § 2",
/// "Article 1091 § 2 of the Civil Code", "artykułu 10¹". Paragraph numbers
/// are read and dropped. Numbers found in `fused` are repaired.
std::vector<corpus::ArticleId> extract_citations(std::string_view text,
                                                 const corpus::FusedSuperscriptMap* fused = nullptr);

ExtractedResponse extract_structured(std::string_view raw_text,
                                     const corpus::FusedSuperscriptMap* fused = nullptr);

}  // namespace statute::eval
