// SPDX-License-Identifier: Apache-2.0
#include "statute/agent.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "http.hpp"
#include "statute/errors.hpp"
#include "statute/extract.hpp"

namespace statute::agent {

using json = nlohmann::json;

namespace {

constexpr std::string_view kLimitNotice =
    "Tool call limit reached. Answer now using the articles already provided.";

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

json to_json(const ChatMessage& m) {
  json j = {{"role", to_string(m.role)}, {"content", m.content}};
  if (m.tool_call)
    j["tool_call"] = {{"id", m.tool_call->id}, {"name", m.tool_call->name},
                      {"arguments", m.tool_call->arguments}};
  return j;
}

json to_json(const AgentAnswer& a) {
  json j;
  j["final_text"] = a.final_text;
  j["cited_articles"] = json::array();
  for (const auto& id : a.cited_articles) j["cited_articles"].push_back(id.short_form());
  j["citations"] = json::array();
  for (const auto& c : a.citations)
    j["citations"].push_back({{"id", c.id.short_form()}, {"grounded", c.grounded}});
  j["retrieval_queries"] = a.retrieval_queries;
  j["retrieved_articles"] = json::array();
  for (const auto& id : a.retrieved_articles) j["retrieved_articles"].push_back(id.short_form());
  j["tool_call_count"] = a.transcript.tool_call_count;
  j["messages"] = json::array();
  for (const auto& m : a.transcript.messages) j["messages"].push_back(to_json(m));
  return j;
}

json retriever_tool_schema() {
  return json::array({{{"type", "function"},
                       {"function",
                        {{"name", kRetrieverToolName},
                         {"description",
                          "Searches the civil code and returns the best matching articles. Use a "
                          "short, general query naming the legal concept."},
                         {"parameters",
                          {{"type", "object"},
                           {"properties", {{"query", {{"type", "string"}}}}},
                           {"required", json::array({"query"})}}}}}}});
}

// --- scripted model ---------------------------------------------------------

namespace {

void validate_step(const json& step) {
  if (!step.is_object()) throw SchemaError("script step must be an object");
  if (step.contains("final")) {
    if (!step["final"].is_string()) throw SchemaError("\"final\" must be a string");
  } else if (step.contains("retrieve")) {
    if (!step["retrieve"].is_string()) throw SchemaError("\"retrieve\" must be a string");
  } else if (step.contains("tool_call")) {
    const json& tc = step["tool_call"];
    if (!tc.is_object() || !tc.contains("name") || !tc["name"].is_string())
      throw SchemaError("\"tool_call\" needs a name");
  } else if (!step.contains("error")) {
    throw SchemaError("script step needs final, retrieve, tool_call or error");
  }
}

std::vector<json> read_steps(const json& j) {
  if (!j.is_array()) throw SchemaError("steps must be an array");
  std::vector<json> steps(j.begin(), j.end());
  for (const auto& s : steps) validate_step(s);
  return steps;
}

}  // namespace

ScriptedModel::ScriptedModel(const json& script) {
  if (!script.is_object()) throw SchemaError("script must be an object");
  if (script.contains("steps")) steps_ = read_steps(script["steps"]);
  if (script.contains("sessions")) {
    for (const auto& s : script["sessions"]) {
      if (!s.contains("match") || !s["match"].is_string() || !s.contains("steps"))
        throw SchemaError("session needs match and steps");
      sessions_.push_back({s["match"].get<std::string>(), read_steps(s["steps"])});
    }
  }
}

ScriptedModel ScriptedModel::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return ScriptedModel(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SchemaError(e.what());
  }
}

ChatMessage ScriptedModel::chat(std::span<const ChatMessage> messages, const json&, double) {
  const auto first_user = std::find_if(messages.begin(), messages.end(),
                                       [](const ChatMessage& m) { return m.role == Role::User; });
  const std::vector<json>* steps = &steps_;
  if (first_user != messages.end())
    for (const auto& s : sessions_)
      if (first_user->content.find(s.match) != std::string::npos) {
        steps = &s.steps;
        break;
      }

  const auto index = static_cast<std::size_t>(std::count_if(
      messages.begin(), messages.end(), [](const ChatMessage& m) { return m.role == Role::Assistant; }));
  if (index >= steps->size()) throw ModelUnavailable("script exhausted");
  const json& step = (*steps)[index];

  if (step.contains("error")) throw ModelUnavailable(step["error"].dump());
  if (step.contains("final")) return {Role::Assistant, step["final"].get<std::string>(), std::nullopt};

  ToolCall call{"call_" + std::to_string(index), std::string(kRetrieverToolName), json::object()};
  if (step.contains("retrieve")) {
    call.arguments = {{"query", step["retrieve"]}};
  } else {
    call.name = step["tool_call"]["name"].get<std::string>();
    call.arguments = step["tool_call"].value("arguments", json::object());
  }
  return {Role::Assistant, step.value("content", std::string()), call};
}

// --- HTTP model ---------------------------------------------------------------

json HttpChatModel::request_body(std::span<const ChatMessage> messages, const json& tools,
                                 double temperature) const {
  json body = {{"model", endpoint_.model}, {"temperature", temperature}, {"messages", json::array()}};
  for (const auto& m : messages) {
    json w = {{"role", to_string(m.role)}, {"content", m.content}};
    if (m.role == Role::Assistant && m.tool_call) {
      w["tool_calls"] = json::array({{{"id", m.tool_call->id},
                                      {"type", "function"},
                                      {"function",
                                       {{"name", m.tool_call->name},
                                        {"arguments", m.tool_call->arguments.dump()}}}}});
    } else if (m.role == Role::Tool && m.tool_call) {
      w["tool_call_id"] = m.tool_call->id;
    }
    body["messages"].push_back(std::move(w));
  }
  if (tools.is_array() && !tools.empty()) body["tools"] = tools;
  return body;
}

ChatMessage HttpChatModel::parse_reply(const json& reply) {
  try {
    const json& msg = reply.at("choices").at(0).at("message");
    ChatMessage out{Role::Assistant, "", std::nullopt};
    if (msg.contains("content") && msg["content"].is_string()) out.content = msg["content"];
    if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
      // Only the first call is honored; the agent runs one retrieval per turn.
      const json& tc = msg["tool_calls"].at(0);
      const json& fn = tc.at("function");
      ToolCall call{tc.value("id", std::string("call_0")), fn.at("name").get<std::string>(), json::object()};
      const json& args = fn.at("arguments");
      call.arguments = args.is_string() ? json::parse(args.get<std::string>()) : args;
      out.tool_call = std::move(call);
    } else if (!msg.contains("content") || !msg["content"].is_string()) {
      throw ModelUnavailable("reply has neither content nor tool call");
    }
    return out;
  } catch (const json::exception& e) {
    throw ModelUnavailable(std::string("malformed reply: ") + e.what());
  }
}

ChatMessage HttpChatModel::chat(std::span<const ChatMessage> messages, const json& tools,
                                double temperature) {
  std::map<std::string, std::string> headers;
  if (!endpoint_.auth_env.empty())
    if (const char* token = std::getenv(endpoint_.auth_env.c_str()); token && *token)
      headers["Authorization"] = std::string("Bearer ") + token;
  std::string url = endpoint_.base_url;
  while (url.ends_with('/')) url.pop_back();
  url += "/chat/completions";
  json reply;
  try {
    reply = detail::post_json(url, request_body(messages, tools, temperature), headers,
                              endpoint_.timeout, endpoint_.retries);
  } catch (const detail::HttpFailure& f) {
    throw ModelUnavailable(f.message);
  }
  return parse_reply(reply);
}

// --- query flow ---------------------------------------------------------------

std::vector<retrieval::ScoredDocument> fit_context(std::span<const retrieval::ScoredDocument> docs,
                                                   std::size_t budget) {
  std::vector<retrieval::ScoredDocument> kept;
  std::size_t used = 0;
  for (const auto& d : docs) {
    const std::size_t cost = d.article->approx_token_len;
    if (used + cost > budget) break;
    used += cost;
    kept.push_back(d);
  }
  return kept;
}

std::string render_tool_response(std::span<const retrieval::ScoredDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    if (!out.empty()) out += "\n\n";
    out += "«" + d.article->id.render() + "» " + d.article->text;
  }
  return out;
}

AgentAnswer run_agent(std::string_view question, retrieval::Retriever& retriever, ModelClient& model,
                      const AgentConfig& config) {
  if (config.max_tool_calls == 0) throw ConfigError("max_tool_calls must be at least 1");
  if (config.k == 0) throw ConfigError("k must be at least 1");
  const retrieval::Index& index = retriever.index();
  if (config.context_budget_tokens <= index.max_article_tokens()) throw BudgetExhausted();

  AgentAnswer answer;
  auto& messages = answer.transcript.messages;
  messages.push_back({Role::System, config.system_prompt, std::nullopt});
  messages.push_back({Role::User, std::string(question), std::nullopt});

  const json tools = retriever_tool_schema();
  std::size_t remaining = config.context_budget_tokens;
  std::set<std::size_t> delivered;

  for (;;) {
    ChatMessage reply = model.chat(messages, tools, config.temperature);
    reply.role = Role::Assistant;
    if (!reply.tool_call) {
      answer.final_text = reply.content;
      messages.push_back(std::move(reply));
      break;
    }
    const ToolCall call = *reply.tool_call;
    messages.push_back(std::move(reply));

    if (answer.transcript.tool_call_count >= config.max_tool_calls) {
      messages.push_back({Role::Tool, std::string(kLimitNotice), call});
      ChatMessage last = model.chat(messages, json::array(), config.temperature);
      last.role = Role::Assistant;
      answer.final_text = last.content;
      messages.push_back(std::move(last));
      break;
    }
    ++answer.transcript.tool_call_count;

    std::string response;
    const json* query = call.arguments.is_object() && call.arguments.contains("query")
                            ? &call.arguments["query"]
                            : nullptr;
    if (call.name != kRetrieverToolName) {
      response = "Error: unknown tool \"" + call.name + "\".";
    } else if (!query || !query->is_string()) {
      response = "Error: the retriever needs a string \"query\" argument.";
    } else {
      const std::string q = query->get<std::string>();
      answer.retrieval_queries.push_back(q);
      std::vector<retrieval::ScoredDocument> fresh;
      try {
        for (auto& d : retriever.search(q, config.k))
          if (!delivered.contains(d.position)) fresh.push_back(d);
      } catch (const EmptyQuery&) {
        response = "Error: the query is empty.";
      }
      if (response.empty()) {
        const auto fitted = fit_context(fresh, remaining);
        if (fitted.empty() && !fresh.empty() && delivered.empty()) throw BudgetExhausted();
        for (const auto& d : fitted) {
          remaining -= d.article->approx_token_len;
          delivered.insert(d.position);
          answer.retrieved_articles.push_back(d.article->id);
        }
        if (!fitted.empty())
          response = render_tool_response(fitted);
        else if (fresh.empty())
          response = "No new articles found.";
        else
          response = "No further articles fit in the context budget.";
      }
    }
    messages.push_back({Role::Tool, std::move(response), call});
  }

  const std::vector<corpus::ArticleId> ids = [&] {
    std::vector<corpus::ArticleId> v;
    for (const auto& a : index.articles()) v.push_back(a.id);
    return v;
  }();
  const auto fused = corpus::FusedSuperscriptMap::from_ids(ids);
  answer.cited_articles = eval::extract_citations(answer.final_text, &fused);
  for (const auto& id : answer.cited_articles) {
    const bool grounded = std::find(answer.retrieved_articles.begin(), answer.retrieved_articles.end(),
                                    id) != answer.retrieved_articles.end();
    answer.citations.push_back({id, grounded});
  }
  return answer;
}

AgentAnswer run_agent(std::string_view question, const retrieval::Index& index, ModelClient& model,
                      const AgentConfig& config) {
  retrieval::PositionalRetriever retriever(index);
  return run_agent(question, retriever, model, config);
}

}  // namespace statute::agent
