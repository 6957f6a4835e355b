// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <mutex>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "statute/agent.hpp"
#include "statute/corpus.hpp"
#include "statute/errors.hpp"
#include "statute/retrieval.hpp"
#include "test_util.hpp"
// After Eigen: <resolv.h> defines a `_res` macro.
#include "local_server.hpp"

using namespace statute;
using namespace statute::agent;
using corpus::ArticleId;
using json = nlohmann::json;

namespace {

ArticleId id(std::uint32_t base) { return {base, std::nullopt}; }
ArticleId id(std::uint32_t base, std::uint32_t sup) { return {base, sup}; }

retrieval::Index english_index() {
  corpus::LegalAct act;
  act.articles = {
      corpus::make_article(id(10), "Art. 10. A person who has completed eighteen years of age is of full age."),
      corpus::make_article(id(13), "Art. 13. A person who has completed thirteen years of age may be fully "
                                   "incapacitated if, due to mental illness, he cannot control his conduct."),
      corpus::make_article(id(16), "Art. 16. An adult may be partially incapacitated due to mental illness. "
                                   "Incapacitation requires a court ruling."),
  };
  return retrieval::build_index(std::move(act));
}

retrieval::Index mini_act_index() {
  return retrieval::build_index(
      corpus::parse_act(corpus::normalize_source(testutil::read_file(testutil::fixture("mini_act.txt")))));
}

// Records every call made to the wrapped model.
class Recorder final : public ModelClient {
 public:
  explicit Recorder(ModelClient& inner) : inner_(inner) {}
  ChatMessage chat(std::span<const ChatMessage> messages, const json& tools, double temperature) override {
    calls.push_back({std::vector<ChatMessage>(messages.begin(), messages.end()), tools, temperature});
    return inner_.chat(messages, tools, temperature);
  }
  struct Call {
    std::vector<ChatMessage> messages;
    json tools;
    double temperature;
  };
  std::vector<Call> calls;

 private:
  ModelClient& inner_;
};

std::size_t count_role(const std::vector<ChatMessage>& messages, Role role) {
  return static_cast<std::size_t>(
      std::count_if(messages.begin(), messages.end(), [&](const ChatMessage& m) { return m.role == role; }));
}

// Every Tool message directly follows the Assistant message that requested it.
void check_tool_pairing(const std::vector<ChatMessage>& messages) {
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].role != Role::Tool) continue;
    REQUIRE(i > 0);
    REQUIRE(messages[i - 1].role == Role::Assistant);
    REQUIRE(messages[i - 1].tool_call);
    REQUIRE(messages[i].tool_call);
    CHECK(messages[i].tool_call->id == messages[i - 1].tool_call->id);
  }
}

}  // namespace

TEST_CASE("the agent generalizes the question before retrieval") {
  const auto index = english_index();
  ScriptedModel script(json{{"steps",
                             {{{"tool_call", {{"name", "retriever"}, {"arguments", {{"query", "Incapacitation"}}}}}},
                              {{"final", "The answer is c, see Art. 16."}}}}});
  Recorder model(script);
  const AgentAnswer answer = run_agent("Who can be incapacitated?", index, model, AgentConfig{});

  CHECK(answer.retrieval_queries == std::vector<std::string>{"Incapacitation"});
  CHECK(answer.final_text == "The answer is c, see Art. 16.");
  CHECK(answer.cited_articles == std::vector<ArticleId>{id(16)});
  REQUIRE(answer.citations.size() == 1);
  CHECK(answer.citations[0].grounded);
  CHECK(answer.transcript.tool_call_count == 1);

  REQUIRE(model.calls.size() == 2);
  const auto& first = model.calls[0];
  REQUIRE(first.messages.size() == 2);
  CHECK(first.messages[0].role == Role::System);
  CHECK(first.messages[0].content == kDefaultSystemPrompt);
  CHECK(first.messages[1].content == "Who can be incapacitated?");
  CHECK(first.tools == retriever_tool_schema());
  CHECK(first.temperature == 0.0);

  // The tool result lists the best-matching article first.
  const auto& msgs = answer.transcript.messages;
  REQUIRE(msgs.size() == 5);
  CHECK(msgs[3].role == Role::Tool);
  CHECK(msgs[3].content.rfind("«Art. 16» Art. 16. An adult", 0) == 0);
  check_tool_pairing(msgs);
  CHECK(model.calls[1].messages == std::vector<ChatMessage>(msgs.begin(), msgs.begin() + 4));
}

TEST_CASE("an answer without tool calls") {
  const auto index = english_index();
  ScriptedModel model(json{{"steps", {{{"final", "a) Art. 10"}}}}});
  const AgentAnswer answer = run_agent("Who is of full age?", index, model, AgentConfig{});
  CHECK(answer.retrieval_queries.empty());
  CHECK(answer.retrieved_articles.empty());
  CHECK(answer.transcript.tool_call_count == 0);
  CHECK(answer.transcript.messages.size() == 3);
  REQUIRE(answer.citations.size() == 1);
  CHECK(!answer.citations[0].grounded);
}

TEST_CASE("tool calls stop at the ceiling and a final answer is forced") {
  const auto index = english_index();
  AgentConfig config;
  json steps = json::array();
  for (std::size_t i = 0; i <= config.max_tool_calls; ++i) steps.push_back({{"retrieve", "query " + std::to_string(i)}});
  steps.push_back({{"final", "Forced answer citing art. 13."}});
  ScriptedModel script(json{{"steps", steps}});
  Recorder model(script);

  const AgentAnswer answer = run_agent("Question?", index, model, config);
  CHECK(answer.transcript.tool_call_count == config.max_tool_calls);
  CHECK(answer.retrieval_queries.size() == config.max_tool_calls);
  CHECK(answer.final_text == "Forced answer citing art. 13.");
  REQUIRE(model.calls.size() == config.max_tool_calls + 2);
  CHECK(model.calls.back().tools == json::array());
  const auto& msgs = answer.transcript.messages;
  CHECK(count_role(msgs, Role::Tool) == config.max_tool_calls + 1);
  CHECK(msgs[msgs.size() - 2].content.find("limit") != std::string::npos);
  check_tool_pairing(msgs);

  AgentConfig one;
  one.max_tool_calls = 1;
  ScriptedModel again(json{{"steps", steps}});
  CHECK(run_agent("Question?", index, again, one).transcript.tool_call_count == 1);
}

TEST_CASE("fit_context keeps a greedy prefix") {
  corpus::LegalAct act;
  for (std::uint32_t i = 1; i <= 50; ++i) act.articles.push_back(corpus::make_article(id(i), std::string(560, 'x')));
  const auto index = retrieval::build_index(std::move(act));
  std::vector<retrieval::ScoredDocument> docs;
  for (std::size_t i = 0; i < 50; ++i) docs.push_back({&index.articles()[i], i, 1.0, std::nullopt, i + 1});
  REQUIRE(index.articles()[0].approx_token_len == 140);

  const auto fitted = fit_context(docs, 4200);
  REQUIRE(fitted.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(fitted[i].position == i);
  CHECK(fit_context(docs, 4339).size() == 30);
  CHECK(fit_context(docs, 4340).size() == 31);
  CHECK(fit_context(docs, 1'000'000).size() == 50);
  CHECK(fit_context(docs, 139).empty());
  CHECK(fit_context({}, 100).empty());
}

TEST_CASE("a budget that cannot hold one article is rejected") {
  const auto index = english_index();
  ScriptedModel model(json{{"steps", {{{"final", "x"}}}}});
  AgentConfig config;
  config.context_budget_tokens = index.max_article_tokens();
  CHECK_THROWS_AS(run_agent("q", index, model, config), BudgetExhausted);
  config.context_budget_tokens = 0;
  CHECK_THROWS_AS(run_agent("q", index, model, config), BudgetExhausted);
  config = AgentConfig{};
  config.max_tool_calls = 0;
  CHECK_THROWS_AS(run_agent("q", index, model, config), ConfigError);
}

TEST_CASE("property: delivered articles never exceed the context budget") {
  std::mt19937_64 rng(8);
  corpus::LegalAct act;
  for (std::uint32_t i = 1; i <= 80; ++i) {
    std::string text = "Art. " + std::to_string(i) + ". ";
    const std::size_t words = 5 + rng() % 120;
    for (std::size_t w = 0; w < words; ++w) text += (w % 3 ? "prawo " : "osoba ");
    act.articles.push_back(corpus::make_article(id(i), text));
  }
  const auto index = retrieval::build_index(std::move(act));
  for (int run = 0; run < 40; ++run) {
    AgentConfig config;
    config.context_budget_tokens = index.max_article_tokens() + 1 + rng() % 3000;
    config.max_tool_calls = 1 + rng() % 4;
    config.k = 1 + rng() % 60;
    json steps = json::array();
    const std::size_t calls = rng() % 6;
    for (std::size_t c = 0; c < calls; ++c) steps.push_back({{"retrieve", c % 2 ? "prawo osoba" : "osoba"}});
    steps.push_back({{"final", "art. 1"}});
    steps.push_back({{"final", "art. 1"}});
    ScriptedModel model(json{{"steps", steps}});
    const AgentAnswer answer = run_agent("Pytanie", index, model, config);

    REQUIRE(answer.transcript.tool_call_count <= config.max_tool_calls);
    std::size_t used = 0;
    for (const auto& a : answer.retrieved_articles) used += index.articles()[*index.position_of(a)].approx_token_len;
    REQUIRE(used <= config.context_budget_tokens);
    // No article is delivered twice.
    auto sorted = answer.retrieved_articles;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    check_tool_pairing(answer.transcript.messages);
  }
}

TEST_CASE("citations outside the retrieved set are flagged") {
  const auto index = mini_act_index();
  auto model = ScriptedModel::from_file(testutil::fixture("ask_script.json"));
  const AgentAnswer answer = run_agent("Kto może zostać ubezwłasnowolniony?", index, model, AgentConfig{});
  REQUIRE(answer.citations.size() == 2);
  CHECK(answer.citations[0].id == id(2, 1));
  CHECK(answer.citations[0].grounded);
  CHECK(answer.citations[1].id == id(109, 3));
  CHECK(!answer.citations[1].grounded);
  CHECK(answer.retrieved_articles.size() == 3);
}

TEST_CASE("agent runs are byte-for-byte deterministic") {
  const auto index = mini_act_index();
  const auto run = [&] {
    auto model = ScriptedModel::from_file(testutil::fixture("ask_script.json"));
    return to_json(run_agent("Kto może zostać ubezwłasnowolniony?", index, model, AgentConfig{})).dump();
  };
  const std::string first = run();
  CHECK(run() == first);

  // Shared scripted model across threads.
  auto shared = ScriptedModel::from_file(testutil::fixture("ask_script.json"));
  std::vector<std::string> outputs(4);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < outputs.size(); ++t)
      pool.emplace_back([&, t] {
        outputs[t] = to_json(run_agent("Kto może zostać ubezwłasnowolniony?", index, shared, AgentConfig{})).dump();
      });
  }
  for (const auto& o : outputs) CHECK(o == first);
}

TEST_CASE("tool call errors are reported to the model") {
  const auto index = english_index();
  ScriptedModel model(json{{"steps",
                            {{{"tool_call", {{"name", "search_web"}, {"arguments", {{"query", "x"}}}}}},
                             {{"tool_call", {{"name", "retriever"}, {"arguments", {{"q", "x"}}}}}},
                             {{"retrieve", "   "}},
                             {{"final", "done"}}}}});
  const AgentAnswer answer = run_agent("q", index, model, AgentConfig{});
  const auto& msgs = answer.transcript.messages;
  REQUIRE(msgs.size() == 9);
  CHECK(msgs[3].content.find("unknown tool") != std::string::npos);
  CHECK(msgs[5].content.find("\"query\"") != std::string::npos);
  CHECK(msgs[7].content.find("empty") != std::string::npos);
  CHECK(answer.transcript.tool_call_count == 3);
  CHECK(answer.retrieved_articles.empty());
}

TEST_CASE("scripted model") {
  ScriptedModel model(json{{"steps", {{{"retrieve", "Incapacitation"}}, {{"final", "answer c, Art. 16"}}}},
                           {"sessions", {{{"match", "special"}, {"steps", {{{"error", "timeout"}}}}}}}});
  std::vector<ChatMessage> msgs = {{Role::System, "s", std::nullopt}, {Role::User, "q", std::nullopt}};
  const ChatMessage first = model.chat(msgs, json::array(), 0.0);
  REQUIRE(first.tool_call);
  CHECK(first.tool_call->name == "retriever");
  CHECK(first.tool_call->arguments == json{{"query", "Incapacitation"}});
  CHECK(model.chat(msgs, json::array(), 0.0) == first);  // pure in the conversation
  msgs.push_back(first);
  msgs.push_back({Role::Tool, "result", first.tool_call});
  CHECK(model.chat(msgs, json::array(), 0.0).content == "answer c, Art. 16");
  msgs.push_back({Role::Assistant, "x", std::nullopt});
  CHECK_THROWS_AS(model.chat(msgs, json::array(), 0.0), ModelUnavailable);

  const std::vector<ChatMessage> special = {{Role::User, "a special question", std::nullopt}};
  CHECK_THROWS_AS(model.chat(special, json::array(), 0.0), ModelUnavailable);

  CHECK_THROWS_AS(ScriptedModel(json{{"steps", {{{"unknown", 1}}}}}), SchemaError);
  CHECK_THROWS_AS(ScriptedModel(json::array()), SchemaError);
  CHECK_THROWS_AS(ScriptedModel::from_file(testutil::fixture("missing.json")), IoError);
}

TEST_CASE("http chat model speaks the chat-completion wire format") {
  testutil::LocalServer server;
  std::mutex mu;
  std::vector<json> bodies;
  std::vector<std::string> auth;
  server.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    {
      std::lock_guard lock(mu);
      bodies.push_back(body);
      auth.push_back(req.get_header_value("Authorization"));
    }
    json message;
    if (body.contains("tools") && body["messages"].size() == 2) {
      message = {{"role", "assistant"},
                 {"content", nullptr},
                 {"tool_calls",
                  {{{"id", "abc"},
                    {"type", "function"},
                    {"function", {{"name", "retriever"}, {"arguments", "{\"query\": \"Incapacitation\"}"}}}}}}};
    } else {
      message = {{"role", "assistant"}, {"content", "Answer c, Art. 16."}};
    }
    res.set_content(json{{"choices", {{{"index", 0}, {"message", message}}}}}.dump(), "application/json");
  });
  server.server().Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  server.server().Post("/text/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>busy</html>", "text/html");
  });
  server.start();

  ::setenv("STATUTE_TEST_TOKEN", "secret-token", 1);
  HttpChatModel model({server.url("/v1/"), "test-model", "STATUTE_TEST_TOKEN", std::chrono::milliseconds(3000), 0});
  const auto index = english_index();
  const AgentAnswer answer = run_agent("Who can be incapacitated?", index, model, AgentConfig{});
  CHECK(answer.retrieval_queries == std::vector<std::string>{"Incapacitation"});
  CHECK(answer.final_text == "Answer c, Art. 16.");
  CHECK(answer.citations.at(0).grounded);

  REQUIRE(bodies.size() == 2);
  CHECK(bodies[0]["model"] == "test-model");
  CHECK(bodies[0]["temperature"] == 0.0);
  CHECK(bodies[0]["tools"] == retriever_tool_schema());
  CHECK(bodies[0]["messages"][0]["role"] == "system");
  const json& second = bodies[1]["messages"];
  REQUIRE(second.size() == 4);
  CHECK(second[2]["tool_calls"][0]["id"] == "abc");
  CHECK(second[2]["tool_calls"][0]["function"]["arguments"] == "{\"query\":\"Incapacitation\"}");
  CHECK(second[3]["role"] == "tool");
  CHECK(second[3]["tool_call_id"] == "abc");
  CHECK(auth[0] == "Bearer secret-token");

  const std::vector<ChatMessage> msgs = {{Role::User, "q", std::nullopt}};
  HttpChatModel bad({server.url("/bad"), "m", "", std::chrono::milliseconds(3000), 0});
  CHECK_THROWS_AS(bad.chat(msgs, json::array(), 0.0), ModelUnavailable);
  HttpChatModel text({server.url("/text"), "m", "", std::chrono::milliseconds(3000), 0});
  CHECK_THROWS_AS(text.chat(msgs, json::array(), 0.0), ModelUnavailable);
  HttpChatModel missing({server.url("/nowhere"), "m", "", std::chrono::milliseconds(3000), 0});
  CHECK_THROWS_AS(missing.chat(msgs, json::array(), 0.0), ModelUnavailable);
  server.stop();
  HttpChatModel down({server.url("/v1"), "m", "", std::chrono::milliseconds(500), 1});
  CHECK_THROWS_AS(down.chat(msgs, json::array(), 0.0), ModelUnavailable);
}

TEST_CASE("parse_reply rejects malformed payloads") {
  CHECK_THROWS_AS(HttpChatModel::parse_reply(json::object()), ModelUnavailable);
  CHECK_THROWS_AS(HttpChatModel::parse_reply(json{{"choices", {{{"message", {{"role", "assistant"}}}}}}}),
                  ModelUnavailable);
  const json bad_args = {
      {"choices",
       {{{"message", {{"tool_calls", {{{"id", "1"}, {"function", {{"name", "retriever"}, {"arguments", "{oops"}}}}}}}}}}}};
  CHECK_THROWS_AS(HttpChatModel::parse_reply(bad_args), ModelUnavailable);
  const ChatMessage ok = HttpChatModel::parse_reply(json{{"choices", {{{"message", {{"content", "fine"}}}}}}});
  CHECK(ok.content == "fine");
  CHECK(!ok.tool_call);
}
