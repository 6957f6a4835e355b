// SPDX-License-Identifier: Apache-2.0
#include "statute/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "http.hpp"
#include "statute/errors.hpp"

namespace statute::retrieval {

using json = nlohmann::json;

std::optional<std::size_t> Index::position_of(const corpus::ArticleId& id) const {
  const auto& arts = act_->articles;
  for (std::size_t i = 0; i < arts.size(); ++i)
    if (arts[i].id == id) return i;
  return std::nullopt;
}

Index build_index(corpus::LegalAct act) {
  if (act.articles.empty()) throw EmptyCorpus();
  auto texts = std::make_shared<std::vector<NormalizedText>>();
  texts->reserve(act.articles.size());
  Index index;
  for (const auto& a : act.articles) {
    texts->push_back(normalize_text(a.text));
    index.max_tokens_ = std::max(index.max_tokens_, a.approx_token_len);
  }
  index.act_ = std::make_shared<const corpus::LegalAct>(std::move(act));
  index.texts_ = std::move(texts);
  return index;
}

void rank_top_k(std::vector<ScoredDocument>& docs, std::size_t k) {
  const auto before = [](const ScoredDocument& a, const ScoredDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.position < b.position;
  };
  const std::size_t keep = std::min(k, docs.size());
  std::partial_sort(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(keep), docs.end(), before);
  docs.resize(keep);
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].rank = i + 1;
}

std::vector<ScoredDocument> retrieve(const Index& index, std::string_view query, std::size_t k,
                                     std::size_t threads) {
  if (k == 0) throw ConfigError("k must be at least 1");
  const NormalizedText normalized = normalize_text(query);
  if (normalized.empty()) throw EmptyQuery();
  const scoring::QueryPattern pattern(normalized.view());

  const auto texts = index.texts();
  const auto articles = index.articles();
  std::vector<ScoredDocument> docs(texts.size());
  const auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const scoring::Score s = pattern.score(texts[i].view());
      docs[i] = {&articles[i], i, static_cast<double>(s.value), s, 0};
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, texts.size());
  if (workers == 1) {
    score_range(0, texts.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (texts.size() + workers - 1) / workers;
    for (std::size_t begin = 0; begin < texts.size(); begin += chunk)
      pool.emplace_back(score_range, begin, std::min(begin + chunk, texts.size()));
  }
  rank_top_k(docs, k);
  return docs;
}

std::vector<VectorRecord> load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<VectorRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    VectorRecord rec;
    try {
      const json j = json::parse(line);
      const auto id = corpus::parse_article_ref(j.at("article_id").get<std::string>());
      if (!id) throw SchemaError("bad article_id " + j.at("article_id").dump(), line_no);
      rec.article_id = *id;
      rec.vector = j.at("vector").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw SchemaError(e.what(), line_no);
    }
    if (rec.vector.empty()) throw SchemaError("empty vector", line_no);
    if (std::all_of(rec.vector.begin(), rec.vector.end(), [](double v) { return v == 0.0; }))
      throw SchemaError("zero vector", line_no);
    if (!records.empty() && records.front().vector.size() != rec.vector.size())
      throw DimensionMismatch(records.front().vector.size(), rec.vector.size());
    records.push_back(std::move(rec));
  }
  return records;
}

VectorIndex::VectorIndex(const Index& index, std::span<const VectorRecord> records) : index_(&index) {
  if (records.empty()) throw SchemaError("no vectors");
  const std::size_t dim = records.front().vector.size();
  rows_.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(dim));
  positions_.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.vector.size() != dim) throw DimensionMismatch(dim, rec.vector.size());
    const auto pos = index.position_of(rec.article_id);
    if (!pos) throw UnknownArticleId(rec.article_id.render());
    const Eigen::Map<const Eigen::RowVectorXd> v(rec.vector.data(), static_cast<Eigen::Index>(dim));
    const double norm = v.norm();
    if (norm == 0.0) throw SchemaError("zero vector for " + rec.article_id.render());
    rows_.row(static_cast<Eigen::Index>(r)) = v / norm;
    positions_.push_back(*pos);
  }
}

std::vector<ScoredDocument> VectorIndex::retrieve(std::span<const double> query_vector,
                                                  std::size_t k) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (query_vector.size() != dimension()) throw DimensionMismatch(dimension(), query_vector.size());
  const Eigen::Map<const Eigen::VectorXd> q(query_vector.data(),
                                            static_cast<Eigen::Index>(query_vector.size()));
  const double norm = q.norm();
  if (norm == 0.0) throw SchemaError("zero query vector");
  const Eigen::VectorXd similarity = rows_ * (q / norm);

  const auto articles = index_->articles();
  std::vector<ScoredDocument> docs;
  docs.reserve(positions_.size());
  for (std::size_t r = 0; r < positions_.size(); ++r)
    docs.push_back({&articles[positions_[r]], positions_[r],
                    std::clamp(similarity(static_cast<Eigen::Index>(r)), -1.0, 1.0), std::nullopt, 0});
  rank_top_k(docs, k);
  return docs;
}

std::vector<std::vector<double>> HttpEmbedder::embed(std::span<const std::string> texts) {
  json body = {{"texts", json::array()}};
  for (const auto& t : texts) body["texts"].push_back(t);
  json reply;
  try {
    reply = detail::post_json(endpoint_.url, body, {}, endpoint_.timeout, endpoint_.retries);
  } catch (const detail::HttpFailure& f) {
    throw Error("embedding provider: " + f.message);
  }
  try {
    auto vectors = reply.at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size()) throw Error("embedding provider returned wrong vector count");
    return vectors;
  } catch (const json::exception& e) {
    throw Error(std::string("embedding provider: malformed reply: ") + e.what());
  }
}

std::vector<ScoredDocument> VectorRetriever::search(std::string_view query, std::size_t k) {
  if (normalize_text(query).empty()) throw EmptyQuery();
  const std::string text(query);
  const auto vectors = embedder_.embed(std::span<const std::string>(&text, 1));
  return vectors_.retrieve(vectors.front(), k);
}

}  // namespace statute::retrieval
