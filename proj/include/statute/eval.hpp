// SPDX-License-Identifier: Apache-2.0
//
// Exam-style evaluation: answer, context and joint scores.
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "statute/agent.hpp"
#include "statute/corpus.hpp"
#include "statute/extract.hpp"
#include "statute/retrieval.hpp"

namespace statute::eval {

struct ExamItem {
  std::string id;
  std::string question;
  /// Options a, b, c in order.
  std::array<std::string, 3> options;
  Choice gold_answer = Choice::A;
  std::vector<corpus::ArticleId> gold_articles;
};

/// JSONL, one item per line:
///   {"id", "question", "options": {"a","b","c"}, "gold_answer": "c",
///    "gold_articles": ["Art. 109^1", ...]}
/// Throws SchemaError (with line number) or IoError.
std::vector<ExamItem> load_dataset(const std::filesystem::path& path);
std::vector<ExamItem> parse_dataset(std::istream& in);

/// Extra cited articles tolerated beyond the gold set.
inline constexpr std::size_t kExtraCitationTolerance = 2;

struct ItemResult {
  bool answer_ok = false;
  bool context_ok = false;
  bool joint_ok = false;

  bool operator==(const ItemResult&) const = default;
};

ItemResult score_item(const ExamItem& item, const ExtractedResponse& resp);

struct MetricsReport {
  std::size_t n_items = 0;
  std::size_t answer_score = 0;
  std::size_t context_score = 0;
  std::size_t joint_score = 0;
  std::vector<ItemResult> per_item;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport aggregate(std::span<const ItemResult> results);

/// Question followed by the three labelled options.
std::string compose_prompt(const ExamItem& item);

/// Turns an assistant answer into a structured response.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual ExtractedResponse extract(std::string_view raw_text) = 0;
};

/// Deterministic pattern rules of extract_structured.
class PatternExtractor final : public Extractor {
 public:
  explicit PatternExtractor(corpus::FusedSuperscriptMap fused = {}) : fused_(std::move(fused)) {}
  ExtractedResponse extract(std::string_view raw_text) override {
    return extract_structured(raw_text, fused_.empty() ? nullptr : &fused_);
  }

 private:
  corpus::FusedSuperscriptMap fused_;
};

/// Asks a model to return {"answer": "a|b|c|null", "articles": ["415", ...]}.
/// Falls back to the pattern rules when the reply is not that JSON.
class ModelExtractor final : public Extractor {
 public:
  ModelExtractor(agent::ModelClient& model, corpus::FusedSuperscriptMap fused = {})
      : model_(model), fallback_(std::move(fused)) {}
  ExtractedResponse extract(std::string_view raw_text) override;

 private:
  agent::ModelClient& model_;
  PatternExtractor fallback_;
};

enum class Subject { RawModel, Agent };

struct EvalConfig {
  Subject subject = Subject::Agent;
  agent::AgentConfig agent;
  /// Items evaluated concurrently.
  std::size_t parallelism = 1;
  std::string assistant_name = "assistant";
};

struct ItemOutcome {
  std::string item_id;
  ItemResult result;
  ExtractedResponse extracted;
  std::optional<std::string> failure;
  /// Full message history of the item.
  nlohmann::json transcript;
};

struct EvalRun {
  std::string assistant_name;
  MetricsReport report;
  std::vector<ItemOutcome> outcomes;

  std::size_t failure_count() const;
  /// {n_items, answer_score, context_score, joint_score, per_item[], failures[]}
  nlohmann::json report_json() const;
  /// One row per assistant: name, answer, context, joint score.
  std::string table() const;
};

/// Evaluates every item. `retriever` is required for Subject::Agent. A model
/// failure on one item marks it all-false and is listed under failures.
/// `extractor` defaults to the pattern rules with the corpus' repair map.
EvalRun run_eval(std::span<const ExamItem> dataset, agent::ModelClient& model, const EvalConfig& config,
                 retrieval::Retriever* retriever = nullptr, Extractor* extractor = nullptr);

}  // namespace statute::eval
