// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "statute/corpus.hpp"
#include "statute/scoring.hpp"
#include "statute/text.hpp"

namespace statute::retrieval {

inline constexpr std::size_t kDefaultK = 50;

enum class Backend { PositionalMatch, VectorCosine };

/// Articles of one act with their normalized text, computed once. Copies
/// share the underlying storage; nothing changes after build.
class Index {
 public:
  const corpus::LegalAct& act() const noexcept { return *act_; }
  std::span<const corpus::Article> articles() const noexcept { return act_->articles; }
  std::span<const NormalizedText> texts() const noexcept { return *texts_; }
  std::size_t size() const noexcept { return act_->articles.size(); }

  std::optional<std::size_t> position_of(const corpus::ArticleId& id) const;
  std::size_t max_article_tokens() const noexcept { return max_tokens_; }

 private:
  friend Index build_index(corpus::LegalAct act);

  std::shared_ptr<const corpus::LegalAct> act_;
  std::shared_ptr<const std::vector<NormalizedText>> texts_;
  std::size_t max_tokens_ = 0;
};

/// Throws EmptyCorpus.
Index build_index(corpus::LegalAct act);

struct ScoredDocument {
  const corpus::Article* article = nullptr;
  /// Index of the article in corpus order.
  std::size_t position = 0;
  /// Positional match count, or cosine similarity for the vector backend.
  double score = 0.0;
  /// Set for the positional backend: window offset in the normalized text.
  std::optional<scoring::Score> match;
  /// 1-based.
  std::size_t rank = 0;
};

/// Top `k` articles by positional match score, ties by corpus position.
/// `threads` > 1 splits the scan; the result does not depend on it.
/// Throws EmptyQuery, ConfigError for k == 0.
std::vector<ScoredDocument> retrieve(const Index& index, std::string_view query,
                                     std::size_t k = kDefaultK, std::size_t threads = 1);

/// Orders by score descending then position ascending, keeps `k`, assigns ranks.
void rank_top_k(std::vector<ScoredDocument>& docs, std::size_t k);

struct VectorRecord {
  corpus::ArticleId article_id;
  std::vector<double> vector;
};

/// JSONL, one {"article_id", "vector"} object per line. Throws SchemaError,
/// DimensionMismatch, IoError.
std::vector<VectorRecord> load_vectors(const std::filesystem::path& path);

/// Unit-normalized embedding rows aligned with corpus positions.
class VectorIndex {
 public:
  /// Throws UnknownArticleId, DimensionMismatch, SchemaError (zero vector).
  VectorIndex(const Index& index, std::span<const VectorRecord> records);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t size() const noexcept { return positions_.size(); }

  /// Cosine similarity ranking. Throws DimensionMismatch, SchemaError for a zero query.
  std::vector<ScoredDocument> retrieve(std::span<const double> query_vector,
                                       std::size_t k = kDefaultK) const;

 private:
  const Index* index_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows_;
  std::vector<std::size_t> positions_;
};

inline std::vector<ScoredDocument> retrieve_vector(const VectorIndex& index,
                                                   std::span<const double> query_vector,
                                                   std::size_t k = kDefaultK) {
  return index.retrieve(query_vector, k);
}

/// Source of query embeddings for the vector backend.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

struct EmbeddingEndpoint {
  std::string url;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
};

/// POSTs {"texts": [...]} and expects {"vectors": [[...], ...]}.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(EmbeddingEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  EmbeddingEndpoint endpoint_;
};

/// What the agent's retriever tool calls.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<ScoredDocument> search(std::string_view query, std::size_t k) = 0;
  virtual const Index& index() const = 0;
};

class PositionalRetriever final : public Retriever {
 public:
  explicit PositionalRetriever(const Index& index, std::size_t threads = 1)
      : index_(index), threads_(threads) {}
  std::vector<ScoredDocument> search(std::string_view query, std::size_t k) override {
    return retrieve(index_, query, k, threads_);
  }
  const Index& index() const override { return index_; }

 private:
  const Index& index_;
  std::size_t threads_;
};

class VectorRetriever final : public Retriever {
 public:
  VectorRetriever(const Index& index, const VectorIndex& vectors, Embedder& embedder)
      : index_(index), vectors_(vectors), embedder_(embedder) {}
  std::vector<ScoredDocument> search(std::string_view query, std::size_t k) override;
  const Index& index() const override { return index_; }

 private:
  const Index& index_;
  const VectorIndex& vectors_;
  Embedder& embedder_;
};

}  // namespace statute::retrieval
