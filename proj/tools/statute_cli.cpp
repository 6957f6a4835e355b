// SPDX-License-Identifier: Apache-2.0
//
// statute: ingest, search, ask, eval and bench over a parsed legal act.
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "statute/agent.hpp"
#include "statute/corpus.hpp"
#include "statute/errors.hpp"
#include "statute/eval.hpp"
#include "statute/retrieval.hpp"
#include "statute/scoring.hpp"
#include "statute/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace statute;

namespace {

struct RunConfig {
  std::string corpus_path;
  std::string dataset_path;
  std::string base_url;
  std::string model;
  std::string auth_env = "OPENAI_API_KEY";
  std::string script_path;
  std::size_t k = retrieval::kDefaultK;
  std::size_t max_tool_calls = 3;
  std::size_t context_budget_tokens = 12000;
  std::size_t parallelism = 1;
  std::string backend = "positional";
  std::string vectors_path;
  std::string embedding_url;
  double timeout_s = 60.0;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

corpus::LegalAct load_act(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw ConfigError("--corpus is required");
  const fs::path path(cfg.corpus_path);
  if (!fs::exists(path)) throw ConfigError("corpus not found: " + path.string());
  // Raw text acts are parsed on the fly; anything else is a saved corpus.
  if (path.extension() == ".txt") return corpus::parse_act(corpus::normalize_source(read_text(path)));
  return corpus::load_corpus(path);
}

agent::AgentConfig agent_config(const RunConfig& cfg) {
  agent::AgentConfig a;
  a.k = cfg.k;
  a.max_tool_calls = cfg.max_tool_calls;
  a.context_budget_tokens = cfg.context_budget_tokens;
  return a;
}

std::unique_ptr<agent::ModelClient> make_model(const RunConfig& cfg) {
  if (!cfg.script_path.empty()) return std::make_unique<agent::ScriptedModel>(agent::ScriptedModel::from_file(cfg.script_path));
  if (cfg.base_url.empty() || cfg.model.empty())
    throw ConfigError("a model needs --base-url and --model, or --script for a scripted model");
  agent::ModelEndpoint ep;
  ep.base_url = cfg.base_url;
  ep.model = cfg.model;
  ep.auth_env = cfg.auth_env;
  ep.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000));
  return std::make_unique<agent::HttpChatModel>(std::move(ep));
}

// Owns everything a retriever borrows.
struct RetrieverStack {
  retrieval::Index index;
  std::optional<retrieval::VectorIndex> vectors;
  std::unique_ptr<retrieval::Embedder> embedder;
  std::unique_ptr<retrieval::Retriever> retriever;
};

std::unique_ptr<RetrieverStack> make_retriever(const RunConfig& cfg) {
  if (cfg.backend != "positional" && cfg.backend != "vector")
    throw ConfigError("unknown backend " + cfg.backend);
  if (cfg.backend == "vector" && (cfg.vectors_path.empty() || cfg.embedding_url.empty()))
    throw ConfigError("the vector backend needs --vectors and --embedding-url");
  auto stack = std::make_unique<RetrieverStack>(RetrieverStack{retrieval::build_index(load_act(cfg)), {}, {}, {}});
  if (cfg.backend == "positional") {
    stack->retriever = std::make_unique<retrieval::PositionalRetriever>(stack->index, cfg.parallelism);
  } else {
    const auto records = retrieval::load_vectors(cfg.vectors_path);
    stack->vectors.emplace(stack->index, records);
    stack->embedder = std::make_unique<retrieval::HttpEmbedder>(retrieval::EmbeddingEndpoint{
        cfg.embedding_url, std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000)), 2});
    stack->retriever = std::make_unique<retrieval::VectorRetriever>(stack->index, *stack->vectors, *stack->embedder);
  }
  return stack;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Source text around the matched window, the window itself in [[ ]].
std::string excerpt(const retrieval::Index& index, const retrieval::ScoredDocument& doc, std::size_t query_len) {
  const std::string& src = doc.article->text;
  const NormalizedText& norm = index.texts()[doc.position];
  constexpr std::size_t kContext = 30;
  if (!doc.match || norm.origin_map.size() != norm.size() + 1 || norm.empty()) {
    const std::u32string cps = utf8_to_u32(src);
    return one_line(u32_to_utf8(std::u32string_view(cps).substr(0, 2 * kContext + query_len)));
  }
  const std::size_t begin = std::min(doc.match->best_offset, norm.size());
  const std::size_t end = std::min(begin + query_len, norm.size());
  const std::size_t ctx_begin = begin > kContext ? begin - kContext : 0;
  const std::size_t ctx_end = std::min(end + kContext, norm.size());
  const auto& om = norm.origin_map;
  std::string out = ctx_begin > 0 ? "..." : "";
  out += src.substr(om[ctx_begin], om[begin] - om[ctx_begin]);
  out += "[[" + src.substr(om[begin], om[end] - om[begin]) + "]]";
  out += src.substr(om[end], om[ctx_end] - om[end]);
  if (ctx_end < norm.size()) out += "...";
  return one_line(out);
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& input, const std::string& output, const std::vector<std::string>& superscripts) {
  corpus::FusedSuperscriptMap fused;
  for (const auto& ref : superscripts) {
    const auto id = corpus::parse_article_ref(ref);
    if (!id || !id->superscript) throw ConfigError("not a superscripted article id: " + ref);
    fused.declare(*id);
  }
  const corpus::LegalAct act =
      corpus::parse_act(corpus::normalize_source(read_text(input)), fused.empty() ? nullptr : &fused);
  for (const auto& w : corpus::ordering_warnings(act)) std::cerr << "warning: " << w << "\n";
  corpus::save_corpus(act, output);
  std::size_t tokens = 0;
  for (const auto& a : act.articles) tokens += a.approx_token_len;
  const double avg = static_cast<double>(tokens) / static_cast<double>(act.articles.size());
  std::cout << "articles: " << act.articles.size() << ", structural units: " << act.units.size()
            << ", average tokens: " << std::fixed << std::setprecision(1) << avg << "\n";
  return 0;
}

int cmd_search(const RunConfig& cfg, const std::string& query) {
  auto stack = make_retriever(cfg);
  const auto docs = stack->retriever->search(query, cfg.k);
  const std::size_t query_len = normalize_text(query).size();
  std::cout << std::left << std::setw(6) << "rank" << std::setw(14) << "article" << std::setw(10) << "score"
            << "excerpt\n";
  for (const auto& d : docs) {
    std::ostringstream score;
    if (d.match)
      score << d.match->value;
    else
      score << std::fixed << std::setprecision(4) << d.score;
    std::cout << std::left << std::setw(6) << d.rank << std::setw(14) << d.article->id.render() << std::setw(10)
              << score.str() << excerpt(stack->index, d, query_len) << "\n";
  }
  return 0;
}

void print_answer(const agent::AgentAnswer& answer) {
  std::cout << answer.final_text << "\n\n";
  std::cout << "Retrieval queries:";
  if (answer.retrieval_queries.empty()) std::cout << " none";
  std::cout << "\n";
  for (const auto& q : answer.retrieval_queries) std::cout << "  " << q << "\n";
  std::cout << "Citations:";
  if (answer.citations.empty()) std::cout << " none";
  std::cout << "\n";
  for (const auto& c : answer.citations)
    std::cout << "  " << c.id.render() << (c.grounded ? "  grounded" : "  NOT RETRIEVED") << "\n";
}

int cmd_ask(const RunConfig& cfg, const std::string& question, const std::string& transcript_path) {
  auto stack = make_retriever(cfg);
  auto model = make_model(cfg);
  const agent::AgentConfig acfg = agent_config(cfg);
  if (!question.empty()) {
    const auto answer = agent::run_agent(question, *stack->retriever, *model, acfg);
    print_answer(answer);
    if (!transcript_path.empty()) std::ofstream(transcript_path) << agent::to_json(answer).dump(2) << "\n";
    return 0;
  }
  std::string line;
  while (std::cerr << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "quit" || line == "exit") break;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      print_answer(agent::run_agent(line, *stack->retriever, *model, acfg));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& subject, const std::string& extractor_kind,
             const std::string& name, const std::string& report_path, const std::string& transcripts_dir) {
  if (cfg.dataset_path.empty()) throw ConfigError("--dataset is required");
  if (!fs::exists(cfg.dataset_path)) throw ConfigError("dataset not found: " + cfg.dataset_path);
  const auto items = eval::load_dataset(cfg.dataset_path);

  eval::EvalConfig ecfg;
  ecfg.subject = subject == "raw" ? eval::Subject::RawModel : eval::Subject::Agent;
  ecfg.agent = agent_config(cfg);
  ecfg.parallelism = cfg.parallelism;
  ecfg.assistant_name = name.empty() ? (subject == "raw" ? "raw model" : "agent") : name;

  std::unique_ptr<RetrieverStack> stack;
  if (ecfg.subject == eval::Subject::Agent || !cfg.corpus_path.empty()) stack = make_retriever(cfg);
  corpus::FusedSuperscriptMap fused;
  if (stack) {
    std::vector<corpus::ArticleId> ids;
    for (const auto& a : stack->index.articles()) ids.push_back(a.id);
    fused = corpus::FusedSuperscriptMap::from_ids(ids);
  }
  auto model = make_model(cfg);
  std::unique_ptr<eval::Extractor> extractor;
  if (extractor_kind == "model")
    extractor = std::make_unique<eval::ModelExtractor>(*model, fused);
  else
    extractor = std::make_unique<eval::PatternExtractor>(fused);

  const eval::EvalRun run = eval::run_eval(items, *model, ecfg, stack ? stack->retriever.get() : nullptr,
                                           extractor.get());
  std::cout << run.table();
  for (const auto& o : run.outcomes)
    if (o.failure) std::cerr << "item " << o.item_id << " failed: " << *o.failure << "\n";
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write " + report_path);
    out << run.report_json().dump(2) << "\n";
  }
  if (!transcripts_dir.empty()) {
    fs::create_directories(transcripts_dir);
    for (const auto& o : run.outcomes) std::ofstream(fs::path(transcripts_dir) / (o.item_id + ".json")) << o.transcript.dump(2) << "\n";
  }
  return 0;
}

std::u32string random_text(std::mt19937_64& rng, std::size_t n) {
  static const std::u32string alphabet = U"aąbcćdeęfghijklłmnńoóprsśtuwyzźż      ";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::u32string s(n, U' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

int cmd_bench(const RunConfig& cfg, std::size_t synthetic_kb, const std::string& queries_path, std::size_t n_queries,
              std::size_t query_len, std::size_t repeat, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::u32string> docs;
  std::size_t bytes = 0;
  if (!cfg.corpus_path.empty()) {
    const auto index = retrieval::build_index(load_act(cfg));
    for (const auto& t : index.texts()) docs.push_back(t.chars);
  } else {
    std::u32string doc;
    while (u32_to_utf8(doc).size() < synthetic_kb * 1024) doc += random_text(rng, 4096);
    docs.push_back(std::move(doc));
  }
  for (const auto& d : docs) bytes += u32_to_utf8(d).size();

  std::vector<std::u32string> queries;
  if (!queries_path.empty()) {
    std::istringstream in(read_text(queries_path));
    for (std::string line; std::getline(in, line);)
      if (auto q = normalize_text(line); !q.empty()) queries.push_back(q.chars);
  } else {
    for (std::size_t i = 0; i < n_queries; ++i) queries.push_back(random_text(rng, query_len));
  }
  if (queries.empty()) throw ConfigError("no queries to run");

  using clock = std::chrono::steady_clock;
  std::vector<scoring::Score> naive_scores, fast_scores;
  double naive_s = 1e300, fast_s = 1e300;
  for (std::size_t r = 0; r < repeat; ++r) {
    naive_scores.clear();
    auto t0 = clock::now();
    for (const auto& q : queries)
      for (const auto& d : docs) naive_scores.push_back(scoring::score_document_naive(d, q));
    naive_s = std::min(naive_s, std::chrono::duration<double>(clock::now() - t0).count());

    fast_scores.clear();
    t0 = clock::now();
    for (const auto& q : queries) {
      const scoring::QueryPattern pattern(q);
      for (const auto& d : docs) fast_scores.push_back(pattern.score(d));
    }
    fast_s = std::min(fast_s, std::chrono::duration<double>(clock::now() - t0).count());
  }
  if (naive_scores != fast_scores) {
    std::cerr << "fast and naive scorers disagree\n";
    return 1;
  }

  static const char* kLevels[] = {"generic", "avx2", "avx512"};
  const double mb = static_cast<double>(bytes) * static_cast<double>(queries.size()) / 1e6;
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "instruction set: " << kLevels[static_cast<int>(scoring::active_simd_level())] << "\n";
  std::cout << "corpus: " << docs.size() << " documents, " << bytes << " bytes; " << queries.size() << " queries\n";
  std::cout << "naive: " << mb / naive_s << " MB/s (" << naive_s * 1000 << " ms)\n";
  std::cout << "fast:  " << mb / fast_s << " MB/s (" << fast_s * 1000 << " ms)\n";
  std::cout << "speedup: " << naive_s / fast_s << "x\n";
  return 0;
}

}  // namespace

const CLI::Validator kAtLeastOne(
    [](std::string& v) {
      return v.find_first_not_of("0123456789") == std::string::npos && v.find_first_not_of('0') != std::string::npos
                 ? std::string()
                 : "must be a whole number of at least 1, got " + v;
    },
    "INT>=1");

int main(int argc, char** argv) {
  CLI::App app{"Statute retrieval, question answering and exam evaluation."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML configuration file; flags override its values");

  RunConfig cfg;
  app.add_option("--corpus", cfg.corpus_path, "Corpus JSON written by ingest, or a raw .txt act");
  app.add_option("--dataset", cfg.dataset_path, "Exam dataset (JSONL)");
  app.add_option("--base-url", cfg.base_url, "Chat-completion endpoint base URL");
  app.add_option("--model", cfg.model, "Model name sent to the endpoint");
  app.add_option("--auth-env", cfg.auth_env, "Environment variable holding the bearer token")->capture_default_str();
  app.add_option("--script", cfg.script_path, "Scripted model replies (JSON) instead of an endpoint")
      ->check(CLI::ExistingFile);
  app.add_option("-k,--k", cfg.k, "Articles per retrieval")->check(kAtLeastOne)->capture_default_str();
  app.add_option("--max-tool-calls", cfg.max_tool_calls, "Retriever calls per question")
      ->check(kAtLeastOne)
      ->capture_default_str();
  app.add_option("--context-budget", cfg.context_budget_tokens, "Tokens of retrieved articles per question")
      ->check(kAtLeastOne)
      ->capture_default_str();
  app.add_option("--parallelism", cfg.parallelism, "Worker threads")->check(kAtLeastOne)->capture_default_str();
  app.add_option("--backend", cfg.backend, "Retrieval backend")
      ->check(CLI::IsMember({"positional", "vector"}))
      ->capture_default_str();
  app.add_option("--vectors", cfg.vectors_path, "Article embeddings (JSONL) for the vector backend")
      ->check(CLI::ExistingFile);
  app.add_option("--embedding-url", cfg.embedding_url, "Query embedding endpoint for the vector backend");
  app.add_option("--timeout", cfg.timeout_s, "Request timeout in seconds")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Parse a plain-text act into a corpus file");
  std::string ingest_in, ingest_out;
  std::vector<std::string> superscripts;
  ingest->add_option("input", ingest_in, "Plain-text act")->required()->check(CLI::ExistingFile);
  ingest->add_option("output", ingest_out, "Corpus JSON to write")->required();
  ingest->add_option("--superscripts", superscripts,
                     "Superscripted articles whose numbers may appear fused, e.g. 109^1")
      ->delimiter(',');

  auto* search = app.add_subcommand("search", "Rank articles for a query");
  std::string search_query;
  search->add_option("query", search_query, "Query text")->required();

  auto* ask = app.add_subcommand("ask", "Answer a question with the retrieval agent (no question: read stdin)");
  std::string question, transcript_path;
  ask->add_option("question", question, "Question text");
  ask->add_option("--transcript", transcript_path, "Write the full run as JSON");

  auto* evalc = app.add_subcommand("eval", "Score an assistant on an exam dataset");
  std::string subject = "agent", extractor_kind = "pattern", assistant_name, report_path, transcripts_dir;
  evalc->add_option("--subject", subject, "Evaluated assistant")
      ->check(CLI::IsMember({"agent", "raw"}))
      ->capture_default_str();
  evalc->add_option("--extractor", extractor_kind, "Answer extraction")
      ->check(CLI::IsMember({"pattern", "model"}))
      ->capture_default_str();
  evalc->add_option("--name", assistant_name, "Assistant name in the report");
  evalc->add_option("--report", report_path, "Write the metrics report as JSON");
  evalc->add_option("--transcripts", transcripts_dir, "Directory for per-item transcripts");

  auto* bench = app.add_subcommand("bench", "Time the naive and fast scorers");
  std::size_t synthetic_kb = 500, n_queries = 5, query_len = 64, repeat = 3;
  std::uint64_t seed = 1;
  std::string queries_path;
  bench->add_option("--synthetic-kb", synthetic_kb, "Size of the random document used without --corpus")
      ->check(kAtLeastOne)
      ->capture_default_str();
  bench->add_option("--queries", queries_path, "Query file, one per line")->check(CLI::ExistingFile);
  bench->add_option("--n-queries", n_queries, "Random queries without --queries")
      ->check(kAtLeastOne)
      ->capture_default_str();
  bench->add_option("--query-len", query_len, "Random query length")->check(kAtLeastOne)->capture_default_str();
  bench->add_option("--repeat", repeat, "Timed repetitions, best kept")->check(kAtLeastOne)->capture_default_str();
  bench->add_option("--seed", seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_in, ingest_out, superscripts);
    if (*search) return cmd_search(cfg, search_query);
    if (*ask) return cmd_ask(cfg, question, transcript_path);
    if (*evalc) return cmd_eval(cfg, subject, extractor_kind, assistant_name, report_path, transcripts_dir);
    if (*bench) return cmd_bench(cfg, synthetic_kb, queries_path, n_queries, query_len, repeat, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
