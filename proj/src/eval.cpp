// SPDX-License-Identifier: Apache-2.0
#include "statute/eval.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "statute/errors.hpp"

namespace statute::eval {

using json = nlohmann::json;

namespace {

ExamItem item_from_json(const json& j, std::size_t line_no) {
  ExamItem item;
  try {
    item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    item.question = j.at("question").get<std::string>();
    const json& opts = j.at("options");
    if (!opts.is_object() || opts.size() != 3) throw SchemaError("exactly three options required", line_no);
    item.options = {opts.at("a").get<std::string>(), opts.at("b").get<std::string>(),
                    opts.at("c").get<std::string>()};
    const std::string gold = j.at("gold_answer").get<std::string>();
    const auto choice = gold.size() == 1 ? choice_from_char(gold.front()) : std::nullopt;
    if (!choice) throw SchemaError("gold_answer must be a, b or c", line_no);
    item.gold_answer = *choice;
    for (const auto& ref : j.at("gold_articles")) {
      const auto id = corpus::parse_article_ref(ref.get<std::string>());
      if (!id) throw SchemaError("bad gold article " + ref.dump(), line_no);
      if (std::find(item.gold_articles.begin(), item.gold_articles.end(), *id) == item.gold_articles.end())
        item.gold_articles.push_back(*id);
    }
    if (item.gold_articles.empty()) throw SchemaError("gold_articles must not be empty", line_no);
  } catch (const json::exception& e) {
    throw SchemaError(e.what(), line_no);
  }
  return item;
}

json ids_json(std::span<const corpus::ArticleId> ids) {
  json a = json::array();
  for (const auto& id : ids) a.push_back(id.short_form());
  return a;
}

}  // namespace

std::vector<ExamItem> parse_dataset(std::istream& in) {
  std::vector<ExamItem> items;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(e.what(), line_no);
    }
    ExamItem item = item_from_json(j, line_no);
    if (!ids.insert(item.id).second) throw SchemaError("duplicate id " + item.id, line_no);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<ExamItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return parse_dataset(in);
}

ItemResult score_item(const ExamItem& item, const ExtractedResponse& resp) {
  ItemResult r;
  r.answer_ok = resp.choice.has_value() && *resp.choice == item.gold_answer;
  const auto& cited = resp.cited_articles;
  const bool covers = std::all_of(item.gold_articles.begin(), item.gold_articles.end(), [&](const auto& g) {
    return std::find(cited.begin(), cited.end(), g) != cited.end();
  });
  r.context_ok = covers && cited.size() <= item.gold_articles.size() + kExtraCitationTolerance;
  r.joint_ok = r.answer_ok && r.context_ok;
  return r;
}

MetricsReport aggregate(std::span<const ItemResult> results) {
  MetricsReport m;
  m.n_items = results.size();
  m.per_item.assign(results.begin(), results.end());
  for (const auto& r : results) {
    m.answer_score += r.answer_ok;
    m.context_score += r.context_ok;
    m.joint_score += r.joint_ok;
  }
  return m;
}

std::string compose_prompt(const ExamItem& item) {
  return item.question + "\n\na) " + item.options[0] + "\nb) " + item.options[1] + "\nc) " + item.options[2];
}

ExtractedResponse ModelExtractor::extract(std::string_view raw_text) {
  const std::vector<agent::ChatMessage> messages = {
      {agent::Role::System,
       "Extract the chosen answer and the cited articles from the exam answer below. Reply with "
       "JSON only: {\"answer\": \"a\" | \"b\" | \"c\" | null, \"articles\": [\"415\", \"109^1\"]}.",
       std::nullopt},
      {agent::Role::User, std::string(raw_text), std::nullopt}};
  const agent::ChatMessage reply = model_.chat(messages, json::array(), 0.0);
  try {
    const json j = json::parse(reply.content);
    ExtractedResponse out;
    out.raw_text = std::string(raw_text);
    if (j.at("answer").is_string() && j["answer"].get<std::string>().size() == 1)
      out.choice = choice_from_char(j["answer"].get<std::string>().front());
    for (const auto& a : j.at("articles")) {
      const auto id = corpus::parse_article_ref(a.get<std::string>());
      if (id && std::find(out.cited_articles.begin(), out.cited_articles.end(), *id) == out.cited_articles.end())
        out.cited_articles.push_back(*id);
    }
    return out;
  } catch (const json::exception&) {
    return fallback_.extract(raw_text);
  }
}

std::size_t EvalRun::failure_count() const {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const ItemOutcome& o) { return o.failure.has_value(); }));
}

json EvalRun::report_json() const {
  json j = {{"assistant", assistant_name},
            {"n_items", report.n_items},
            {"answer_score", report.answer_score},
            {"context_score", report.context_score},
            {"joint_score", report.joint_score},
            {"per_item", json::array()},
            {"failures", json::array()}};
  for (const auto& o : outcomes) {
    json choice = o.extracted.choice ? json(std::string(1, to_char(*o.extracted.choice))) : json(nullptr);
    j["per_item"].push_back({{"id", o.item_id},
                             {"answer_ok", o.result.answer_ok},
                             {"context_ok", o.result.context_ok},
                             {"joint_ok", o.result.joint_ok},
                             {"choice", choice},
                             {"cited_articles", ids_json(o.extracted.cited_articles)}});
    if (o.failure) j["failures"].push_back({{"id", o.item_id}, {"error", *o.failure}});
  }
  return j;
}

std::string EvalRun::table() const {
  const std::size_t width = std::max<std::size_t>(assistant_name.size(), 9);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "Assistant"
      << " | Answer score | Context score | Joint score\n";
  out << std::string(width, '-') << "-+--------------+---------------+------------\n";
  out << std::left << std::setw(static_cast<int>(width)) << assistant_name << " | " << std::right
      << std::setw(12) << report.answer_score << " | " << std::setw(13) << report.context_score << " | "
      << std::setw(11) << report.joint_score << "\n";
  return out.str();
}

EvalRun run_eval(std::span<const ExamItem> dataset, agent::ModelClient& model, const EvalConfig& config,
                 retrieval::Retriever* retriever, Extractor* extractor) {
  if (config.subject == Subject::Agent && retriever == nullptr)
    throw ConfigError("agent evaluation needs a retriever");

  std::optional<PatternExtractor> default_extractor;
  if (extractor == nullptr) {
    corpus::FusedSuperscriptMap fused;
    if (retriever != nullptr) {
      std::vector<corpus::ArticleId> ids;
      for (const auto& a : retriever->index().articles()) ids.push_back(a.id);
      fused = corpus::FusedSuperscriptMap::from_ids(ids);
    }
    default_extractor.emplace(std::move(fused));
    extractor = &*default_extractor;
  }

  std::vector<ItemOutcome> outcomes(dataset.size());
  const auto evaluate = [&](std::size_t i) {
    const ExamItem& item = dataset[i];
    ItemOutcome& out = outcomes[i];
    out.item_id = item.id;
    const std::string prompt = compose_prompt(item);
    std::string answer_text;
    try {
      if (config.subject == Subject::Agent) {
        const agent::AgentAnswer answer = agent::run_agent(prompt, *retriever, model, config.agent);
        answer_text = answer.final_text;
        out.transcript = agent::to_json(answer);
      } else {
        std::vector<agent::ChatMessage> messages = {
            {agent::Role::System, config.agent.system_prompt, std::nullopt},
            {agent::Role::User, prompt, std::nullopt}};
        agent::ChatMessage reply = model.chat(messages, json::array(), config.agent.temperature);
        reply.role = agent::Role::Assistant;
        answer_text = reply.content;
        messages.push_back(std::move(reply));
        out.transcript = {{"final_text", answer_text}, {"messages", json::array()}};
        for (const auto& m : messages) out.transcript["messages"].push_back(agent::to_json(m));
      }
      out.extracted = extractor->extract(answer_text);
      out.result = score_item(item, out.extracted);
    } catch (const Error& e) {
      out.failure = e.what();
      out.result = {};
      out.extracted = {std::nullopt, {}, answer_text};
    }
    out.transcript["item_id"] = item.id;
  };

  const std::size_t workers = std::clamp<std::size_t>(config.parallelism, 1, std::max<std::size_t>(dataset.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) evaluate(i);
      });
  }

  EvalRun run;
  run.assistant_name = config.assistant_name;
  std::vector<ItemResult> results;
  for (const auto& o : outcomes) results.push_back(o.result);
  run.report = aggregate(results);
  run.outcomes = std::move(outcomes);
  return run;
}

}  // namespace statute::eval
