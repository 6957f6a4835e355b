// SPDX-License-Identifier: Apache-2.0
//
// Single-agent query flow: the model rewrites the question into retrieval
// queries, calls the retriever tool, and answers citing article ids.
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "statute/corpus.hpp"
#include "statute/retrieval.hpp"

namespace statute::agent {

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role role);

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments;

  bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  /// Assistant: the requested call. Tool: the call this message answers.
  std::optional<ToolCall> tool_call;

  bool operator==(const ChatMessage&) const = default;
};

nlohmann::json to_json(const ChatMessage& m);

/// Exam-assistant instruction used for every evaluated assistant.
inline constexpr std::string_view kDefaultSystemPrompt =
    "You are a helpful assistant specializing in Polish law. You will receive questions from an "
    "exam, each consisting of a question or an incomplete sentence followed by three possible "
    "answers labeled a, b, and c.\n"
    "\n"
    "Your task is to:\n"
    "1. Choose the correct answer.\n"
    "2. Provide a detailed explanation for your choice.\n"
    "3. Refer to the relevant article(s) in the one of polish regulations.\n"
    "\n"
    "Please ensure your responses are precise and informative. Respond in polish.";

inline constexpr std::string_view kRetrieverToolName = "retriever";

/// Function-tool schema of the retriever, chat-completion style.
nlohmann::json retriever_tool_schema();

struct AgentConfig {
  std::size_t max_tool_calls = 3;
  std::size_t k = retrieval::kDefaultK;
  std::size_t context_budget_tokens = 12000;
  double temperature = 0.0;
  std::string system_prompt = std::string(kDefaultSystemPrompt);
};

struct AgentTranscript {
  std::vector<ChatMessage> messages;
  std::size_t tool_call_count = 0;
};

struct Citation {
  corpus::ArticleId id;
  /// The article was delivered by a retriever call during the run.
  bool grounded = false;
};

struct AgentAnswer {
  std::string final_text;
  std::vector<corpus::ArticleId> cited_articles;
  std::vector<Citation> citations;
  AgentTranscript transcript;
  std::vector<std::string> retrieval_queries;
  /// Articles delivered to the model, in delivery order.
  std::vector<corpus::ArticleId> retrieved_articles;
};

nlohmann::json to_json(const AgentAnswer& a);

/// Chat-completion style model.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Next assistant message. An empty `tools` array means no tool may be
  /// called. Throws ModelUnavailable.
  virtual ChatMessage chat(std::span<const ChatMessage> messages, const nlohmann::json& tools,
                           double temperature) = 0;
};

/// Replays a fixed script. The step served is chosen by the number of
/// assistant messages already in the conversation, so replies are a pure
/// function of the conversation and safe to share across threads.
///
/// Script format:
///   {"steps": [step...],
///    "sessions": [{"match": "<substring of the first user message>", "steps": [...]}]}
/// A step is {"tool_call": {"name": "retriever", "arguments": {"query": "..."}}},
/// the shorthand {"retrieve": "..."}, {"final": "..."}, or {"error": "..."}.
class ScriptedModel final : public ModelClient {
 public:
  /// Throws SchemaError.
  explicit ScriptedModel(const nlohmann::json& script);
  /// Throws IoError or SchemaError.
  static ScriptedModel from_file(const std::filesystem::path& path);

  ChatMessage chat(std::span<const ChatMessage> messages, const nlohmann::json& tools,
                   double temperature) override;

 private:
  struct Session {
    std::string match;
    std::vector<nlohmann::json> steps;
  };
  std::vector<nlohmann::json> steps_;
  std::vector<Session> sessions_;
};

struct ModelEndpoint {
  std::string base_url;
  std::string model;
  /// Environment variable holding the bearer token; unset means no auth header.
  std::string auth_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{60000};
  int retries = 2;
};

/// Client for POST {base_url}/chat/completions.
class HttpChatModel final : public ModelClient {
 public:
  explicit HttpChatModel(ModelEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  ChatMessage chat(std::span<const ChatMessage> messages, const nlohmann::json& tools,
                   double temperature) override;

  /// Request body for the wire format.
  nlohmann::json request_body(std::span<const ChatMessage> messages, const nlohmann::json& tools,
                              double temperature) const;
  /// Parses a reply; throws ModelUnavailable when malformed.
  static ChatMessage parse_reply(const nlohmann::json& reply);

 private:
  ModelEndpoint endpoint_;
};

/// Longest prefix of `docs` whose summed approx_token_len fits `budget`.
std::vector<retrieval::ScoredDocument> fit_context(std::span<const retrieval::ScoredDocument> docs,
                                                   std::size_t budget);

/// "«Art. id» text" blocks in rank order, separated by blank lines.
std::string render_tool_response(std::span<const retrieval::ScoredDocument> docs);

/// Runs the query flow. Citations are extracted with the corpus' own
/// superscript repair map. Throws ModelUnavailable, BudgetExhausted, ConfigError.
AgentAnswer run_agent(std::string_view question, retrieval::Retriever& retriever, ModelClient& model,
                      const AgentConfig& config);

AgentAnswer run_agent(std::string_view question, const retrieval::Index& index, ModelClient& model,
                      const AgentConfig& config);

}  // namespace statute::agent
