// SPDX-License-Identifier: Apache-2.0
#include "statute/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "statute/errors.hpp"
#include "statute/text.hpp"

namespace statute::corpus {
namespace {

using json = nlohmann::json;

// UTF-8 superscript digits 0-9.
constexpr std::array<std::string_view, 10> kSuperscripts = {
    "⁰", "¹", "²", "³", "⁴", "⁵", "⁶", "⁷", "⁸", "⁹"};

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ascii_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ascii_space(s.back())) s.remove_suffix(1);
  return s;
}

void skip_spaces(std::string_view s, std::size_t& i) {
  while (i < s.size() && is_ascii_space(s[i])) ++i;
}

std::optional<std::uint32_t> read_digits(std::string_view s, std::size_t& i) {
  const std::size_t start = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i == start || i - start > 9) return std::nullopt;
  std::uint32_t v = 0;
  std::from_chars(s.data() + start, s.data() + i, v);
  return v;
}

std::optional<std::uint32_t> read_superscript_digits(std::string_view s, std::size_t& i) {
  std::uint32_t v = 0;
  std::size_t count = 0;
  for (;;) {
    bool matched = false;
    for (std::uint32_t d = 0; d < kSuperscripts.size(); ++d) {
      if (s.substr(i).starts_with(kSuperscripts[d])) {
        v = v * 10 + d;
        i += kSuperscripts[d].size();
        ++count;
        matched = true;
        break;
      }
    }
    if (!matched) break;
  }
  if (count == 0 || count > 9) return std::nullopt;
  return v;
}

// Number with optional superscript: "109", "109^1", "109^{1}", "109¹".
std::optional<ArticleId> read_number(std::string_view s, std::size_t& i) {
  const auto base = read_digits(s, i);
  if (!base || *base == 0) return std::nullopt;
  ArticleId id{*base, std::nullopt};
  std::size_t j = i;
  if (j < s.size() && s[j] == '^') {
    ++j;
    const bool braced = j < s.size() && s[j] == '{';
    if (braced) ++j;
    const auto sup = read_digits(s, j);
    if (sup && *sup > 0 && (!braced || (j < s.size() && s[j] == '}'))) {
      if (braced) ++j;
      id.superscript = *sup;
      i = j;
    }
  } else if (const auto sup = read_superscript_digits(s, j); sup && *sup > 0) {
    id.superscript = *sup;
    i = j;
  }
  return id;
}

// Marker at the start of a line: "Art." number [superscript] ".".
std::optional<ArticleId> line_marker(std::string_view line) {
  if (!line.starts_with("Art.")) return std::nullopt;
  std::size_t i = 4;
  skip_spaces(line, i);
  auto id = read_number(line, i);
  if (!id || i >= line.size() || line[i] != '.') return std::nullopt;
  return id;
}

std::uint64_t fused_key(const ArticleId& id) {
  std::uint64_t scale = 1;
  for (std::uint32_t s = *id.superscript; s > 0; s /= 10) scale *= 10;
  return std::uint64_t{id.base} * scale + *id.superscript;
}

ArticleId repair(ArticleId id, const FusedSuperscriptMap* fused) {
  if (fused && !id.superscript)
    if (auto repaired = fused->resolve(id.base)) return *repaired;
  return id;
}

// Header keywords. Upper-case forms always open a unit; title-case forms only
// when followed by a numeral, since they also start ordinary sentences.
struct Keyword {
  std::string_view text;
  UnitKind kind;
  bool strict;
};
constexpr std::array<Keyword, 10> kKeywords = {{
    {"KSIĘGA", UnitKind::Book, true},
    {"TYTUŁ", UnitKind::Title, true},
    {"DZIAŁ", UnitKind::Division, true},
    {"ROZDZIAŁ", UnitKind::Chapter, true},
    {"ODDZIAŁ", UnitKind::Section, true},
    {"Księga", UnitKind::Book, false},
    {"Tytuł", UnitKind::Title, false},
    {"Dział", UnitKind::Division, false},
    {"Rozdział", UnitKind::Chapter, false},
    {"Oddział", UnitKind::Section, false},
}};

bool is_roman(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::string_view("IVXLCDM").find(s[i]) != std::string_view::npos) ++i;
  if (i == 0) return false;
  // Inserted units carry a lower-case suffix: "IIa".
  while (i < s.size() && s[i] >= 'a' && s[i] <= 'z') ++i;
  return i == s.size();
}

bool is_arabic(std::string_view s) {
  std::size_t i = 0;
  const auto n = read_number(s, i);
  if (!n) return false;
  while (i < s.size() && s[i] >= 'a' && s[i] <= 'z') ++i;
  return i == s.size();
}

bool is_ordinal_word(std::string_view s) {
  static const std::set<std::string_view> words = {
      "PIERWSZA", "DRUGA", "TRZECIA", "CZWARTA", "PIĄTA", "SZÓSTA", "SIÓDMA",
      "Pierwsza", "Druga", "Trzecia", "Czwarta", "Piąta", "Szósta", "Siódma"};
  return words.contains(s);
}

bool is_unit_number(std::string_view token) {
  if (token.ends_with('.')) token.remove_suffix(1);
  return !token.empty() && (is_roman(token) || is_arabic(token) || is_ordinal_word(token));
}

struct HeaderLine {
  UnitKind kind;
  std::string label;
  std::string name;
};

// Classifies a header line. Returns nullopt for ordinary text.
std::optional<HeaderLine> header_line(std::string_view line, std::size_t line_no) {
  const std::string_view t = trim(line);
  for (const Keyword& kw : kKeywords) {
    if (!t.starts_with(kw.text)) continue;
    std::string_view rest = t.substr(kw.text.size());
    if (!rest.empty() && !is_ascii_space(rest.front())) continue;
    rest = trim(rest);
    const std::size_t cut = std::min(rest.find(' '), rest.size());
    const std::string_view number = rest.substr(0, cut);
    if (!is_unit_number(number)) {
      if (kw.strict) throw MalformedHeader(line_no);
      return std::nullopt;
    }
    HeaderLine h{kw.kind, std::string(kw.text) + " " + std::string(number), ""};
    if (h.label.ends_with('.')) h.label.pop_back();
    h.name = std::string(trim(rest.substr(cut)));
    return h;
  }
  return std::nullopt;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (line.ends_with('\r')) line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) { return trim(line).empty(); }

// Line-removal rules of normalize_source.
const std::vector<std::regex>& strip_rules() {
  static const std::vector<std::regex> rules = [] {
    const std::string sup = "(?:⁰|¹|²|³|⁴|⁵|⁶|⁷|⁸|⁹)";
    std::vector<std::regex> r;
    // Footnotes with superscript index: "¹⁾ ...", "¹) ...", "¹ ...".
    r.emplace_back("^\\s*" + sup + "+\\s*(?:\\)|⁾)?\\s.*$");
    // Starred footnotes: "*) ...".
    r.emplace_back("^\\s*\\*+\\)\\s.*$");
    // Numbered footnotes describing amendments. Plain "1) " also opens
    // enumerated points, so only the amendment vocabulary is removed.
    r.emplace_back(
        "^\\s*\\d+\\)\\s+(?:Zmienion[ya]|Zmienione|Dodan[ya]|Dodane|Uchylon[ya]|Uchylone|"
        "W brzmieniu|Niniejsza ustawa|Zmiany tekstu|Utracił[ay]?|Utraciły|Ogłoszon[ya]|"
        "Uznan[ya]|Stwierdzon[ya]).*$");
    // Fully bracketed editorial notes.
    r.emplace_back("^\\s*\\[.*\\]\\s*$");
    // Publication header and footer.
    r.emplace_back("^\\s*©?\\s*Kancelaria Sejmu.*$");
    r.emplace_back("^\\s*s\\.\\s*\\d+\\s*/\\s*\\d+\\s*$");
    r.emplace_back("^\\s*\\d{4}-\\d{2}-\\d{2}\\s*$");
    r.emplace_back("^\\s*Dz\\.\\s*U\\.\\s*\\d{4}\\s*(?:r\\.\\s*)?(?:Nr\\s*\\d+\\s*)?poz\\.\\s*\\d+\\s*$");
    r.emplace_back("^\\s*Opracowano na podstawie.*$");
    return r;
  }();
  return rules;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string ArticleId::render() const { return "Art. " + short_form(); }

std::string ArticleId::short_form() const {
  std::string s = std::to_string(base);
  if (superscript) s += "^" + std::to_string(*superscript);
  return s;
}

void FusedSuperscriptMap::declare(const ArticleId& id) {
  if (id.superscript) fused_[fused_key(id)] = id;
}

FusedSuperscriptMap FusedSuperscriptMap::from_ids(std::span<const ArticleId> ids) {
  std::set<std::uint32_t> plain;
  for (const auto& id : ids)
    if (!id.superscript) plain.insert(id.base);
  FusedSuperscriptMap map;
  for (const auto& id : ids) {
    if (!id.superscript) continue;
    const std::uint64_t key = fused_key(id);
    if (key <= UINT32_MAX && plain.contains(static_cast<std::uint32_t>(key))) continue;
    map.fused_[key] = id;
  }
  return map;
}

std::optional<ArticleId> FusedSuperscriptMap::resolve(std::uint32_t fused) const {
  const auto it = fused_.find(fused);
  if (it == fused_.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::Book: return "book";
    case UnitKind::Title: return "title";
    case UnitKind::Division: return "division";
    case UnitKind::Chapter: return "chapter";
    case UnitKind::Section: return "section";
  }
  return "book";
}

std::optional<UnitKind> unit_kind_from_string(std::string_view s) {
  for (UnitKind k : {UnitKind::Book, UnitKind::Title, UnitKind::Division, UnitKind::Chapter,
                     UnitKind::Section})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::size_t approx_tokens(std::string_view text) {
  return (utf8_length(text) + kCharsPerToken - 1) / kCharsPerToken;
}

Article make_article(ArticleId id, std::string text, std::vector<std::string> path) {
  Article a{id, std::move(text), std::move(path), 0, 0};
  a.char_len = utf8_length(a.text);
  a.approx_token_len = (a.char_len + kCharsPerToken - 1) / kCharsPerToken;
  return a;
}

std::string normalize_source(std::string_view raw) {
  const auto lines = split_lines(raw);
  if (std::none_of(lines.begin(), lines.end(),
                   [](std::string_view l) { return line_marker(trim(l)).has_value(); }))
    throw EmptyInput();

  const auto& rules = strip_rules();
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line(lines[i]);
    const bool drop = std::any_of(rules.begin(), rules.end(),
                                  [&](const std::regex& r) { return std::regex_match(line, r); });
    if (drop) continue;
    out += line;
    if (i + 1 < lines.size()) out += '\n';
  }
  return out;
}

ArticleId canonical_article_id(std::string_view marker_text, const FusedSuperscriptMap* fused) {
  const std::string_view t = trim(marker_text);
  if (!t.starts_with("Art.")) throw UnparsableMarker(std::string(marker_text));
  std::size_t i = 4;
  skip_spaces(t, i);
  const auto id = read_number(t, i);
  if (!id) throw UnparsableMarker(std::string(marker_text));
  if (i < t.size() && t[i] == '.') ++i;
  if (i != t.size()) throw UnparsableMarker(std::string(marker_text));
  return repair(*id, fused);
}

std::optional<ArticleId> parse_article_ref(std::string_view text) {
  std::string_view t = trim(text);
  for (std::string_view prefix : {"Art.", "art.", "Art", "art"}) {
    if (t.starts_with(prefix)) {
      t.remove_prefix(prefix.size());
      break;
    }
  }
  t = trim(t);
  std::size_t i = 0;
  const auto id = read_number(t, i);
  if (!id) return std::nullopt;
  if (i < t.size() && t[i] == '.') ++i;
  if (i != t.size()) return std::nullopt;
  return id;
}

LegalAct parse_act(std::string_view clean, const FusedSuperscriptMap* fused) {
  enum class State { Preamble, Header, Article };

  LegalAct act;
  std::vector<std::string> title_lines;
  std::vector<std::size_t> open;  // stack of indices into act.units
  std::set<ArticleId> seen;
  State state = State::Preamble;

  const auto lines = split_lines(clean);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    if (is_blank(line)) continue;
    const std::size_t line_no = n + 1;

    if (const auto raw_id = line_marker(trim(line))) {
      const ArticleId id = repair(*raw_id, fused);
      if (!seen.insert(id).second) throw DuplicateArticle(id.render());
      std::vector<std::string> path;
      for (std::size_t u : open) path.push_back(act.units[u].label);
      act.articles.push_back(Article{id, std::string(line), std::move(path), 0, 0});
      state = State::Article;
      continue;
    }

    if (const auto header = header_line(line, line_no)) {
      const auto rank = static_cast<int>(header->kind);
      while (!open.empty() && static_cast<int>(act.units[open.back()].kind) >= rank) {
        act.units[open.back()].end = act.articles.size();
        open.pop_back();
      }
      StructuralUnit unit;
      unit.kind = header->kind;
      unit.label = header->label;
      unit.name = header->name;
      unit.heading = std::string(line);
      unit.begin = unit.end = act.articles.size();
      if (!open.empty()) unit.parent = open.back();
      open.push_back(act.units.size());
      act.units.push_back(std::move(unit));
      state = State::Header;
      continue;
    }

    switch (state) {
      case State::Preamble:
        title_lines.emplace_back(line);
        break;
      case State::Header: {
        StructuralUnit& unit = act.units[open.back()];
        unit.heading += '\n';
        unit.heading += line;
        if (!unit.name.empty()) unit.name += ' ';
        unit.name += trim(line);
        break;
      }
      case State::Article:
        act.articles.back().text += '\n';
        act.articles.back().text += line;
        break;
    }
  }
  for (std::size_t u : open) act.units[u].end = act.articles.size();

  act.title = join(title_lines, "\n");
  for (Article& a : act.articles) a = make_article(a.id, std::move(a.text), std::move(a.hierarchy_path));
  return act;
}

std::vector<std::string> ordering_warnings(const LegalAct& act) {
  std::vector<std::string> warnings;
  for (std::size_t i = 1; i < act.articles.size(); ++i) {
    const ArticleId& prev = act.articles[i - 1].id;
    const ArticleId& cur = act.articles[i].id;
    if (!(prev < cur))
      warnings.push_back(cur.render() + " follows " + prev.render() + " (article " +
                         std::to_string(i + 1) + ")");
  }
  return warnings;
}

std::string reconstruct_text(const LegalAct& act) {
  std::vector<std::string> lines;
  if (!act.title.empty())
    for (auto l : split_lines(act.title)) lines.emplace_back(l);
  std::size_t next_unit = 0;
  for (std::size_t a = 0; a <= act.articles.size(); ++a) {
    // Units open in source order right before the article their span starts at.
    while (next_unit < act.units.size() && act.units[next_unit].begin == a) {
      for (auto l : split_lines(act.units[next_unit].heading)) lines.emplace_back(l);
      ++next_unit;
    }
    if (a < act.articles.size())
      for (auto l : split_lines(act.articles[a].text)) lines.emplace_back(l);
  }
  return join(lines, "\n");
}

namespace {

json unit_to_json(const StructuralUnit& u) {
  json j = {{"kind", to_string(u.kind)}, {"label", u.label}, {"name", u.name},
            {"heading", u.heading}, {"begin", u.begin}, {"end", u.end}};
  j["parent"] = u.parent ? json(*u.parent) : json(nullptr);
  return j;
}

StructuralUnit unit_from_json(const json& j) {
  StructuralUnit u;
  const auto kind = unit_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw SchemaError("unknown unit kind " + j.at("kind").dump());
  u.kind = *kind;
  u.label = j.at("label").get<std::string>();
  u.name = j.at("name").get<std::string>();
  u.heading = j.at("heading").get<std::string>();
  u.begin = j.at("begin").get<std::size_t>();
  u.end = j.at("end").get<std::size_t>();
  if (!j.at("parent").is_null()) u.parent = j.at("parent").get<std::size_t>();
  return u;
}

}  // namespace

void save_corpus(const LegalAct& act, const std::filesystem::path& path) {
  if (act.articles.empty()) throw Error("refusing to save a corpus without articles");
  json doc = {{"schema_version", kCorpusSchemaVersion}, {"title", act.title}};
  doc["units"] = json::array();
  for (const auto& u : act.units) doc["units"].push_back(unit_to_json(u));
  doc["articles"] = json::array();
  for (const auto& a : act.articles)
    doc["articles"].push_back(
        {{"id", a.id.render()}, {"text", a.text}, {"path", a.hierarchy_path}, {"char_len", a.char_len}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

LegalAct load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();

  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  try {
    if (!doc.contains("schema_version")) throw SchemaError("missing schema_version");
    if (doc.at("schema_version").get<int>() != kCorpusSchemaVersion)
      throw SchemaError("unsupported schema_version " + doc.at("schema_version").dump());
    LegalAct act;
    act.title = doc.at("title").get<std::string>();
    for (const auto& u : doc.at("units")) act.units.push_back(unit_from_json(u));
    for (const auto& a : doc.at("articles")) {
      const std::string id_text = a.at("id").get<std::string>();
      ArticleId id;
      try {
        id = canonical_article_id(id_text);
      } catch (const UnparsableMarker&) {
        throw SchemaError("bad article id " + id_text);
      }
      Article art = make_article(id, a.at("text").get<std::string>(),
                                 a.at("path").get<std::vector<std::string>>());
      if (art.text.empty()) throw SchemaError("empty article " + id_text);
      if (art.char_len != a.at("char_len").get<std::size_t>())
        throw SchemaError("char_len mismatch for " + id_text);
      act.articles.push_back(std::move(art));
    }
    if (act.articles.empty()) throw SchemaError("no articles");
    for (const auto& u : act.units)
      if (u.begin > u.end || u.end > act.articles.size() ||
          (u.parent && *u.parent >= act.units.size()))
        throw SchemaError("unit span out of range: " + u.label);
    return act;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

}  // namespace statute::corpus
