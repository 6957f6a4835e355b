// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "statute/corpus.hpp"
#include "statute/errors.hpp"
#include "statute/retrieval.hpp"
#include "test_util.hpp"
// After Eigen: <resolv.h> defines a `_res` macro.
#include "local_server.hpp"

using namespace statute;
using namespace statute::retrieval;
using corpus::ArticleId;
using corpus::LegalAct;

namespace {

ArticleId id(std::uint32_t base) { return {base, std::nullopt}; }

LegalAct act_of(const std::vector<std::string>& texts) {
  LegalAct act;
  for (std::size_t i = 0; i < texts.size(); ++i)
    act.articles.push_back(corpus::make_article(id(static_cast<std::uint32_t>(i + 1)), texts[i]));
  return act;
}

std::vector<std::size_t> positions(const std::vector<ScoredDocument>& docs) {
  std::vector<std::size_t> out;
  for (const auto& d : docs) out.push_back(d.position);
  return out;
}

void check_ranked(const std::vector<ScoredDocument>& docs) {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    REQUIRE(docs[i].rank == i + 1);
    if (i == 0) continue;
    REQUIRE(docs[i - 1].score >= docs[i].score);
    if (docs[i - 1].score == docs[i].score) REQUIRE(docs[i - 1].position < docs[i].position);
  }
}

LegalAct random_act(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> len(40, 400);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n; ++i)
    texts.push_back(u32_to_utf8(oracle::random_text(rng, len(rng), U"abcdeęłóśż .,")));
  return act_of(texts);
}

}  // namespace

TEST_CASE("build_index keeps corpus order and is deterministic") {
  const LegalAct act = act_of({"Art. 1. Pierwszy.", "Art. 2. DRUGI  artykuł", "Art. 3. Trzeci."});
  const Index a = build_index(act);
  const Index b = build_index(act);
  REQUIRE(a.size() == 3);
  CHECK(a.articles()[1].id == id(2));
  CHECK(a.texts()[1].chars == U"art. 2. drugi artykuł");
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.texts()[i] == b.texts()[i]);
  CHECK(a.position_of(id(3)) == std::optional<std::size_t>(2));
  CHECK(!a.position_of(id(9)));
  CHECK_THROWS_AS(build_index(LegalAct{}), EmptyCorpus);
}

TEST_CASE("retrieve ranks by positional score") {
  const Index index = build_index(act_of({"aaa", "abc", "xyz"}));
  // Independent scores: aaa→1, abc→3, xyz→0.
  REQUIRE(oracle::brute_force_score(U"aaa", U"abc").value == 1);
  REQUIRE(oracle::brute_force_score(U"abc", U"abc").value == 3);
  REQUIRE(oracle::brute_force_score(U"xyz", U"abc").value == 0);

  const auto top = retrieve(index, "abc", 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].article->text == "abc");
  CHECK(top[0].score == 3.0);
  CHECK(top[0].rank == 1);
  CHECK(top[1].article->text == "aaa");
  CHECK(top[1].score == 1.0);
  REQUIRE(top[0].match);
  CHECK(top[0].match->best_offset == 0);

  const auto all = retrieve(index, "abc", 10);
  CHECK(positions(all) == std::vector<std::size_t>{1, 0, 2});
  check_ranked(all);
}

TEST_CASE("retrieve ties keep corpus order") {
  const Index index = build_index(act_of({"zzz", "xab", "abx", "ab"}));
  const auto top = retrieve(index, "ab");
  CHECK(positions(top) == std::vector<std::size_t>{1, 2, 3, 0});
}

TEST_CASE("retrieve argument errors") {
  const Index index = build_index(act_of({"abc"}));
  CHECK_THROWS_AS(retrieve(index, "abc", 0), ConfigError);
  CHECK_THROWS_AS(retrieve(index, "  \n\t", 5), EmptyQuery);
  CHECK_THROWS_AS(retrieve(index, "", 5), EmptyQuery);
}

TEST_CASE("property: scores match the brute-force oracle on normalized text") {
  std::mt19937_64 rng(3);
  const Index index = build_index(random_act(rng, 60));
  for (int t = 0; t < 20; ++t) {
    const std::u32string query = oracle::random_text(rng, 1 + rng() % 30, U"abcdeęłóśż .,");
    const std::string q8 = u32_to_utf8(query);
    const auto qn = normalize_text(q8).chars;
    if (qn.empty()) continue;
    for (const auto& d : retrieve(index, q8, index.size())) {
      const auto expected = oracle::brute_force_score(index.texts()[d.position].chars, qn);
      REQUIRE(d.score == static_cast<double>(expected.value));
      REQUIRE(d.match->best_offset == expected.offset);
    }
  }
}

TEST_CASE("property: ranking is prefix stable, ordered and thread independent") {
  std::mt19937_64 rng(17);
  const Index index = build_index(random_act(rng, 200));
  for (int t = 0; t < 10; ++t) {
    const std::string query = u32_to_utf8(oracle::random_text(rng, 1 + rng() % 64, U"abcdeęłóśż"));
    const auto full = retrieve(index, query, index.size());
    check_ranked(full);
    const auto order = positions(full);
    const auto prefix = [&](std::size_t n) {
      return std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    };
    for (std::size_t k : {1, 5, 50, 199, 200, 500}) {
      const auto part = retrieve(index, query, k);
      REQUIRE(part.size() == std::min<std::size_t>(k, 200));
      REQUIRE(positions(part) == prefix(part.size()));
    }
    for (std::size_t threads : {2, 3, 8}) REQUIRE(positions(retrieve(index, query, 50, threads)) == prefix(50));
  }
}

TEST_CASE("property: a unique substring ranks its article first") {
  std::mt19937_64 rng(23);
  const Index index = build_index(random_act(rng, 200));
  int checked = 0;
  for (int t = 0; t < 200 && checked < 50; ++t) {
    const std::size_t pos = rng() % index.size();
    const auto& text = index.texts()[pos].chars;
    const std::size_t len = std::min<std::size_t>(text.size(), 12 + rng() % 20);
    const std::size_t start = rng() % (text.size() - len + 1);
    const std::u32string needle = text.substr(start, len);
    if (needle.front() == U' ' || needle.back() == U' ') continue;
    std::size_t holders = 0;
    for (const auto& t2 : index.texts()) holders += oracle::contains(t2.chars, needle);
    if (holders != 1) continue;
    const auto top = retrieve(index, u32_to_utf8(needle), 1);
    REQUIRE(top.front().position == pos);
    REQUIRE(top.front().score == static_cast<double>(len));
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("vector backend ranks by cosine") {
  const Index index = build_index(act_of({"a", "b", "c"}));
  const double c60 = std::cos(std::numbers::pi / 3), s60 = std::sin(std::numbers::pi / 3);
  const std::vector<VectorRecord> records = {
      {id(1), {0.0, 3.0}},              // 90 degrees from the query
      {id(2), {2.0 * c60, 2.0 * s60}},  // 60 degrees
      {id(3), {5.0, 0.0}},              // parallel
  };
  const VectorIndex vectors(index, records);
  CHECK(vectors.dimension() == 2);
  const std::vector<double> query = {1.0, 0.0};
  const auto top = retrieve_vector(vectors, query);
  REQUIRE(top.size() == 3);
  CHECK(positions(top) == std::vector<std::size_t>{2, 1, 0});
  CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(top[1].score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(top[2].score) < 1e-12);
  CHECK(!top[0].match);

  const std::vector<double> same = {0.0, 3.0};
  const auto identity = vectors.retrieve(same, 1);
  CHECK(identity[0].position == 0);
  CHECK(identity[0].score == doctest::Approx(1.0).epsilon(1e-12));
  // Orthogonal to the parallel record; the other two point away from it.
  const std::vector<double> orthogonal = {0.0, -1.0};
  const auto away = vectors.retrieve(orthogonal, 3);
  CHECK(away[0].position == 2);
  CHECK(std::abs(away[0].score) < 1e-12);
  CHECK(away[2].score == doctest::Approx(-1.0).epsilon(1e-12));

  const std::vector<double> wrong_dim = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(vectors.retrieve(wrong_dim, 3), DimensionMismatch);
  const std::vector<double> zero = {0.0, 0.0};
  CHECK_THROWS_AS(vectors.retrieve(zero, 3), SchemaError);
}

TEST_CASE("vector index validation") {
  const Index index = build_index(act_of({"a", "b"}));
  const std::vector<VectorRecord> unknown = {{id(1), {1.0}}, {id(9), {1.0}}};
  CHECK_THROWS_AS(VectorIndex(index, unknown), UnknownArticleId);
  const std::vector<VectorRecord> mixed = {{id(1), {1.0, 0.0}}, {id(2), {1.0}}};
  CHECK_THROWS_AS(VectorIndex(index, mixed), DimensionMismatch);
  const std::vector<VectorRecord> zero = {{id(1), {0.0, 0.0}}};
  CHECK_THROWS_AS(VectorIndex(index, zero), SchemaError);
}

TEST_CASE("load_vectors") {
  testutil::TempDir dir;
  const auto good = dir / "v.jsonl";
  testutil::write_file(good,
                       "{\"article_id\": \"Art. 1\", \"vector\": [1, 0]}\n\n"
                       "{\"article_id\": \"109^1\", \"vector\": [0.5, 0.5]}\n");
  const auto records = load_vectors(good);
  REQUIRE(records.size() == 2);
  CHECK(records[1].article_id == ArticleId{109, 1});
  CHECK(records[1].vector == std::vector<double>{0.5, 0.5});

  const auto mixed = dir / "mixed.jsonl";
  testutil::write_file(mixed, "{\"article_id\": \"1\", \"vector\": [1, 0]}\n{\"article_id\": \"2\", \"vector\": [1]}\n");
  CHECK_THROWS_AS(load_vectors(mixed), DimensionMismatch);

  const auto broken = dir / "broken.jsonl";
  testutil::write_file(broken, "{\"article_id\": \"1\", \"vector\": [1, 0]}\n{\"article_id\": \"2\"\n");
  try {
    load_vectors(broken);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 2);
  }
  const auto zero = dir / "zero.jsonl";
  testutil::write_file(zero, "{\"article_id\": \"1\", \"vector\": [0, 0]}\n");
  CHECK_THROWS_AS(load_vectors(zero), SchemaError);
  CHECK_THROWS_AS(load_vectors(dir / "missing.jsonl"), IoError);
}

TEST_CASE("vector retriever with an embedding endpoint") {
  testutil::LocalServer server;
  server.server().Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : body.at("texts"))
      vectors.push_back(t.get<std::string>().find("drugi") != std::string::npos ? nlohmann::json{0.0, 1.0}
                                                                                  : nlohmann::json{1.0, 0.0});
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  server.start();

  const Index index = build_index(act_of({"a", "b"}));
  const std::vector<VectorRecord> records = {{id(1), {1.0, 0.0}}, {id(2), {0.0, 1.0}}};
  const VectorIndex vectors(index, records);
  HttpEmbedder embedder({server.url("/embed"), std::chrono::milliseconds(2000), 0});
  VectorRetriever retriever(index, vectors, embedder);
  CHECK(retriever.search("artykuł drugi", 1).front().position == 1);
  CHECK(retriever.search("pierwszy", 1).front().position == 0);
  CHECK_THROWS_AS(retriever.search("   ", 1), EmptyQuery);
}

TEST_CASE("embedding endpoint failures are retried then surfaced") {
  testutil::LocalServer server;
  std::atomic<int> calls{0};
  server.server().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  server.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": true}", "application/json");
  });
  server.start();

  HttpEmbedder failing({server.url("/embed"), std::chrono::milliseconds(2000), 2});
  const std::vector<std::string> texts = {"x"};
  CHECK_THROWS_AS(failing.embed(texts), Error);
  CHECK(calls.load() == 3);

  HttpEmbedder malformed({server.url("/garbage"), std::chrono::milliseconds(2000), 0});
  CHECK_THROWS_AS(malformed.embed(texts), Error);
}
