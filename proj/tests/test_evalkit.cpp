#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dfnet/evaluate.hpp"
#include "dfnet/metrics.hpp"
#include "dfnet/rng.hpp"

using namespace dfnet;

namespace {

std::vector<std::string> words(const std::string& text) {
  return tokenize(text);
}

Corpus toy(std::uint64_t seed, int per_domain = 2) {
  ToySpec spec;
  spec.domains = {"alpha", "beta"};
  spec.dialogues_per_domain = per_domain;
  spec.seed = seed;
  return make_toy_corpus(spec);
}

}  // namespace

TEST_CASE("bleu is exactly one on a perfect corpus") {
  std::vector<std::vector<std::string>> refs{
      words("the cat sat on the mat"),
      words("a long sentence with many tokens inside it")};
  CHECK(corpus_bleu(refs, refs) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu vanishes without shared unigrams") {
  std::vector<std::vector<std::string>> hyp{words("aa bb cc dd")};
  std::vector<std::vector<std::string>> ref{words("ee ff gg hh")};
  CHECK(corpus_bleu(hyp, ref) < 1e-6);
}

TEST_CASE("bleu matches a hand-counted oracle") {
  std::vector<std::vector<std::string>> hyp{words("the cat sat on mat")};
  std::vector<std::vector<std::string>> ref{
      words("the cat sat on the mat")};
  // n-gram precisions 5/5, 3/4, 2/3, 1/2; brevity penalty exp(1 - 6/5).
  double expected = std::exp(1.0 - 6.0 / 5.0) *
                    std::pow(1.0 * (3.0 / 4.0) * (2.0 / 3.0) * (1.0 / 2.0),
                             0.25);
  CHECK(corpus_bleu(hyp, ref) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(corpus_bleu(hyp, ref) == doctest::Approx(0.578934).epsilon(1e-5));
}

TEST_CASE("bleu input validation") {
  std::vector<std::vector<std::string>> one{words("a b")};
  std::vector<std::vector<std::string>> two{words("a b"), words("c d")};
  CHECK_THROWS_AS(corpus_bleu({}, {}), UsageError);
  CHECK_THROWS_AS(corpus_bleu(one, two), UsageError);
  // Empty hypothesis strings are data, not an error.
  std::vector<std::vector<std::string>> empty_hyp{{}};
  CHECK(corpus_bleu(empty_hyp, one) == 0.0);
}

TEST_CASE("bleu stays in range and improves toward the reference") {
  Rng rng(77);
  std::vector<std::string> pool;
  for (int i = 0; i < 12; ++i) pool.push_back("w" + std::to_string(i));
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<std::string>> hyp, ref;
    for (int s = 0; s < 4; ++s) {
      std::vector<std::string> h, r;
      for (std::size_t k = 0; k < 3 + rng.uniform_int(6); ++k) {
        h.push_back(pool[rng.uniform_int(pool.size())]);
      }
      for (std::size_t k = 0; k < 3 + rng.uniform_int(6); ++k) {
        r.push_back(pool[rng.uniform_int(pool.size())]);
      }
      hyp.push_back(h);
      ref.push_back(r);
    }
    double base = corpus_bleu(hyp, ref);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    for (std::size_t s = 0; s < hyp.size(); ++s) {
      auto improved = hyp;
      improved[s] = ref[s];
      double better = corpus_bleu(improved, ref);
      CHECK(better >= base - 1e-12);
    }
  }
}

TEST_CASE("entity f1 hand oracles") {
  std::set<std::string> lexicon{"a", "b", "c", "d"};

  SUBCASE("perfect predictions") {
    auto report = entity_f1({words("x a y b"), words("c only")},
                            {{"a", "b"}, {"c"}}, lexicon, {"d1", "d1"});
    CHECK(report.micro_f1 == 1.0);
    CHECK(report.counts.tp == 3);
    CHECK(report.counts.fp == 0);
    CHECK(report.counts.fn == 0);
  }

  SUBCASE("half right") {
    auto report =
        entity_f1({words("a c")}, {{"a", "b"}}, lexicon, {"d1"});
    CHECK(report.counts.tp == 1);
    CHECK(report.counts.fp == 1);
    CHECK(report.counts.fn == 1);
    CHECK(report.micro_f1 == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("micro pooling over turns") {
    auto report = entity_f1({words("has a"), words("nothing here")},
                            {{"a"}, {"b"}}, lexicon, {"d1", "d2"});
    CHECK(report.micro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(report.per_domain_f1.at("d1") == 1.0);
    CHECK(report.per_domain_f1.at("d2") == 0.0);
  }

  SUBCASE("set semantics ignore duplicates") {
    auto report = entity_f1({words("a a a")}, {{"a"}}, lexicon, {"d1"});
    CHECK(report.counts.tp == 1);
    CHECK(report.counts.fp == 0);
    CHECK(report.micro_f1 == 1.0);
  }

  SUBCASE("empty everything scores one") {
    auto report = entity_f1({words("no entities at all")}, {{}}, lexicon,
                            {"d1"});
    CHECK(report.counts.tp == 0);
    CHECK(report.micro_f1 == 1.0);
  }

  SUBCASE("per-domain counts sum to global") {
    auto report = entity_f1(
        {words("a b x"), words("c"), words("d d"), words("b c")},
        {{"a"}, {"c", "d"}, {"d"}, {"a", "b"}}, lexicon,
        {"d1", "d2", "d2", "d1"});
    long tp = 0, fp = 0, fn = 0;
    for (const auto& [domain, c] : report.per_domain_counts) {
      tp += c.tp;
      fp += c.fp;
      fn += c.fn;
    }
    CHECK(tp == report.counts.tp);
    CHECK(fp == report.counts.fp);
    CHECK(fn == report.counts.fn);
  }

  SUBCASE("alignment is validated") {
    CHECK_THROWS_AS(entity_f1({words("a")}, {{"a"}, {"b"}}, lexicon, {"d1"}),
                    UsageError);
  }
}

TEST_CASE("entity lexicon unions kb objects") {
  Corpus c = toy(3);
  auto lex = entity_lexicon(c);
  CHECK_FALSE(lex.empty());
  for (const auto& d : c.dialogues) {
    for (const auto& t : d.kb) CHECK(lex.count(t.object) == 1);
  }
  // Subjects and relations are not entities unless they appear as objects.
  std::set<std::string> objects = lex;
  for (const auto& d : c.dialogues) {
    for (const auto& t : d.kb) {
      if (!objects.count(t.relation)) CHECK(lex.count(t.relation) == 0);
    }
  }
}

TEST_CASE("evaluate is deterministic and scores an untrained model low") {
  Corpus corpus = toy(21, 3);
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.embedding = 6;
  cfg.hops = 2;
  cfg.dropout = 0.0;
  DfNet<double> model(vocab, corpus.domains, cfg, ModelFlags{}, 5);

  auto r1 = evaluate(model, corpus);
  auto r2 = evaluate(model, corpus);
  CHECK(r1.bleu == r2.bleu);
  CHECK(r1.micro_f1 == r2.micro_f1);
  CHECK(r1.counts.tp == r2.counts.tp);
  CHECK(r1.bleu < 0.3);
  CHECK(r1.micro_f1 < 0.5);
  CHECK(r1.per_domain_f1.size() == 2);

  Corpus empty;
  empty.domains = corpus.domains;
  CHECK_THROWS_AS(evaluate(model, empty), UsageError);
}

TEST_CASE("gate export samples per domain and reports simplex means") {
  Corpus corpus = toy(33, 3);
  Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.embedding = 6;
  cfg.hops = 2;
  cfg.dropout = 0.0;
  DfNet<double> model(vocab, corpus.domains, cfg, ModelFlags{}, 5);

  // Pin the decoder gate one-hot through the shared parameter handles.
  for (auto& p : model.manifest()) {
    if (p.name == "dec_gate.w") p.tensor.value().setZero();
    if (p.name == "dec_gate.b") {
      p.tensor.value()(0, 0) = 40.0;
      p.tensor.value()(1, 0) = 0.0;
    }
  }
  auto trace = export_gates(model, corpus, 2, 9);
  REQUIRE(trace.expert_domains == corpus.domains);
  REQUIRE(trace.mean_alpha.size() == 2);
  for (const auto& row : trace.rows) {
    REQUIRE(row.alpha.size() == 2);
    CHECK(row.alpha[0] + row.alpha[1] ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
  bool any_tokens = false;
  for (const auto& [domain, mean] : trace.mean_alpha) {
    REQUIRE(mean.size() == 2);
    if (mean[0] + mean[1] > 0.5) {
      any_tokens = true;
      CHECK(mean[0] == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(mean[1] == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
  CHECK(any_tokens);

  auto again = export_gates(model, corpus, 2, 9);
  CHECK(again.rows.size() == trace.rows.size());

  write_gate_trace(trace, "/tmp/dfnet_gates.csv");
  std::ifstream in("/tmp/dfnet_gates.csv");
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "target_domain,example_id,token_index,alpha_alpha,"
                  "alpha_beta");
  std::size_t lines = 0;
  std::string line;
  std::size_t mean_lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    if (line.find(",mean,-1,") != std::string::npos) ++mean_lines;
  }
  CHECK(lines == trace.rows.size() + 2);
  CHECK(mean_lines == 2);

  CHECK_THROWS_AS(export_gates(model, corpus, 0, 9), UsageError);

  ModelFlags no_gate;
  no_gate.dynamic_fusion = false;
  DfNet<double> plain(vocab, corpus.domains, cfg, no_gate, 5);
  CHECK_THROWS_AS(export_gates(plain, corpus, 2, 9), UsageError);
}
