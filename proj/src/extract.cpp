// SPDX-License-Identifier: Apache-2.0
#include "statute/extract.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <string>

namespace statute::eval {
namespace {

using corpus::ArticleId;

constexpr auto kFlags = std::regex::ECMAScript | std::regex::icase;

const std::string kSup = "(?:⁰|¹|²|³|⁴|⁵|⁶|⁷|⁸|⁹)";
// Letter must be followed by closing punctuation or end of line, so that
// "the answer is a legal..." does not read as option a.
const std::string kAfterLetter = "(?=\\s*[).:*\\],]|\\s*\\n|\\s*$)";

const std::regex& phrase_en() {
  static const std::regex r(
      "(?:correct|right|proper|final)?\\s*answer\\s*(?:is|would be)?\\s*:?\\s*(?:\\*\\*)?\\s*"
      "(?:option\\s*)?[\\(\\[]?([abc])" + kAfterLetter,
      kFlags);
  return r;
}

const std::regex& phrase_pl() {
  static const std::regex r(
      "odpowied(?:ź|z)\\s*(?:prawidłowa|poprawna|właściwa)?\\s*(?:to|jest|brzmi)?\\s*:?\\s*"
      "(?:\\*\\*)?\\s*(?:wariant\\s*)?[\\(\\[]?([abc])" + kAfterLetter,
      kFlags);
  return r;
}

const std::regex& leading_option() {
  static const std::regex r("^\\s*(?:\\*\\*)?\\s*([abc])\\)", kFlags);
  return r;
}

// Groups: 1 base, 2 caret superscript, 3 unicode superscript, 4 paragraph.
const std::string kNumber = "\\$?\\s*(\\d+)(?:\\s*\\^\\s*\\{?\\s*(\\d+)\\s*\\}?|(" + kSup +
                            "+))?\\s*\\$?(?:\\s*§+\\s*(\\d+))?";

const std::regex& citation() {
  static const std::regex r(
      "(?:^|[^a-z0-9_])(?:articles?|artykuł(?:u|em|y|ów|ami)?|art\\.?)\\s*" + kNumber, kFlags);
  return r;
}

// "art. 415 i 416", "Articles 415, 416 and 417".
const std::regex& continuation() {
  static const std::regex r("\\s*(?:,|and|or|i|oraz|lub)\\s+(?:art\\.?\\s*)?" + kNumber, kFlags);
  return r;
}

std::uint32_t superscript_value(const std::string& s) {
  static const std::string digits[] = {"⁰", "¹", "²", "³", "⁴", "⁵", "⁶", "⁷", "⁸", "⁹"};
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < s.size();) {
    for (std::uint32_t d = 0; d < 10; ++d) {
      if (s.compare(i, digits[d].size(), digits[d]) == 0) {
        v = v * 10 + d;
        i += digits[d].size();
        break;
      }
    }
  }
  return v;
}

std::optional<ArticleId> id_from(const std::smatch& m, const corpus::FusedSuperscriptMap* fused) {
  const std::string base_text = m[1].str();
  if (base_text.size() > 9) return std::nullopt;
  ArticleId id{static_cast<std::uint32_t>(std::stoul(base_text)), std::nullopt};
  if (id.base == 0) return std::nullopt;
  if (m[2].matched && m[2].length() <= 9) {
    const auto sup = static_cast<std::uint32_t>(std::stoul(m[2].str()));
    if (sup > 0) id.superscript = sup;
  } else if (m[3].matched) {
    const auto sup = superscript_value(m[3].str());
    if (sup > 0) id.superscript = sup;
  }
  if (!id.superscript && fused)
    if (auto repaired = fused->resolve(id.base)) return repaired;
  return id;
}

}  // namespace

char to_char(Choice c) {
  switch (c) {
    case Choice::A: return 'a';
    case Choice::B: return 'b';
    case Choice::C: return 'c';
  }
  return 'a';
}

std::optional<Choice> choice_from_char(char c) {
  switch (c) {
    case 'a': case 'A': return Choice::A;
    case 'b': case 'B': return Choice::B;
    case 'c': case 'C': return Choice::C;
    default: return std::nullopt;
  }
}

std::optional<Choice> extract_choice(std::string_view text) {
  const std::string s(text);
  std::smatch en, pl;
  const bool has_en = std::regex_search(s, en, phrase_en());
  const bool has_pl = std::regex_search(s, pl, phrase_pl());
  if (has_en || has_pl) {
    const std::smatch& first = !has_pl || (has_en && en.position(0) <= pl.position(0)) ? en : pl;
    return choice_from_char(first[1].str().front());
  }

  std::set<char> letters;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string::npos) end = s.size();
    const std::string line = s.substr(start, end - start);
    std::smatch m;
    if (std::regex_search(line, m, leading_option()))
      letters.insert(static_cast<char>(std::tolower(static_cast<unsigned char>(m[1].str().front()))));
    start = end + 1;
  }
  if (letters.size() == 1) return choice_from_char(*letters.begin());
  return std::nullopt;
}

std::vector<ArticleId> extract_citations(std::string_view text, const corpus::FusedSuperscriptMap* fused) {
  const std::string s(text);
  std::vector<ArticleId> ids;
  const auto add = [&](const std::optional<ArticleId>& id) {
    if (id && std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.push_back(*id);
  };

  auto it = s.cbegin();
  std::smatch m;
  auto flags = std::regex_constants::match_default;
  while (std::regex_search(it, s.cend(), m, citation(), flags)) {
    flags = std::regex_constants::match_prev_avail;
    add(id_from(m, fused));
    it = m[0].second;
    bool open_list = !m[4].matched;
    std::smatch c;
    while (open_list && std::regex_search(it, s.cend(), c, continuation(),
                                          std::regex_constants::match_continuous |
                                              std::regex_constants::match_prev_avail)) {
      add(id_from(c, fused));
      it = c[0].second;
      open_list = !c[4].matched;
    }
  }
  return ids;
}

ExtractedResponse extract_structured(std::string_view raw_text, const corpus::FusedSuperscriptMap* fused) {
  return {extract_choice(raw_text), extract_citations(raw_text, fused), std::string(raw_text)};
}

}  // namespace statute::eval
