#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "coderank/bm25.hpp"
#include "coderank/error.hpp"
#include "coderank/synthetic.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace coderank;

namespace {

std::vector<LabelDescriptor> three_labels() {
  return {{"L1", {"acute", "pain"}},
          {"L2", {"chronic", "pain", "disorder"}},
          {"L3", {"fracture"}}};
}

Document doc_with(std::vector<std::string> tokens) {
  Document doc;
  doc.id = "q";
  doc.tokens = std::move(tokens);
  return doc;
}

CandidateSet aux_set(std::set<LabelId> labels) {
  return CandidateSet{"q", std::move(labels), Stage::auxiliary, false};
}

}  // namespace

TEST_CASE("index statistics: avgdl and document frequency") {
  const auto index = build_bm25_index(
      {{"L1", {"acute", "pain"}}, {"L2", {"chronic", "pain", "disorder"}}});
  CHECK(index.avgdl == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(index.doc_freq.at("pain") == 2);
  CHECK(index.doc_freq.at("acute") == 1);
  CHECK(index.n_labels == 2);
}

TEST_CASE("singleton index") {
  const auto index = build_bm25_index({{"L1", {"fever"}}});
  CHECK(index.avgdl == 1.0);
  CHECK(index.doc_freq.at("fever") == 1);
}

TEST_CASE("a duplicated descriptor token raises TF but not DF") {
  const auto index = build_bm25_index({{"L1", {"pain", "pain"}}, {"L2", {"rash"}}});
  CHECK(index.term_freq.at("L1").at("pain") == 2);
  CHECK(index.doc_freq.at("pain") == 1);
}

TEST_CASE("build_bm25_index rejects empty inputs") {
  try {
    build_bm25_index({});
    FAIL("expected EmptyLabelSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyLabelSet);
  }
  try {
    build_bm25_index({{"L1", {}}});
    FAIL("expected EmptyDescriptor");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDescriptor);
  }
}

TEST_CASE("zero lexical overlap scores zero") {
  const auto index = build_bm25_index(three_labels());
  CHECK(bm25_score(doc_with({"unrelated", "words"}), "L1", index, {}) == 0.0);
}

TEST_CASE("a token present in every descriptor contributes nothing") {
  const auto index = build_bm25_index({{"L1", {"pain", "acute"}}, {"L2", {"pain"}}});
  // df = n -> idf = ln((2 - 2 + 0.5) / 2.5) < 0, floored to zero.
  CHECK(bm25_idf(index, "pain") == 0.0);
  CHECK(bm25_score(doc_with({"pain"}), "L2", index, {}) == 0.0);
}

TEST_CASE("hand-computed one-token score") {
  const auto index = build_bm25_index(three_labels());  // avgdl = (2+3+1)/3 = 2
  const Bm25Params params;                              // k1 = 1.2, b = 0.75
  const double idf = std::log((3.0 - 1.0 + 0.5) / (1.0 + 0.5));
  const double len_norm = 1.0 - 0.75 + 0.75 * 2.0 / 2.0;
  const double expected = idf * 1.0 * (1.2 + 1.0) / (1.0 * 1.2 * len_norm);
  CHECK(bm25_score(doc_with({"acute"}), "L1", index, params) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("repeating a document token does not change the score") {
  const auto index = build_bm25_index(three_labels());
  const double once = bm25_score(doc_with({"acute"}), "L1", index, {});
  const double thrice = bm25_score(doc_with({"acute", "acute", "acute"}), "L1", index, {});
  CHECK(once == thrice);
}

TEST_CASE("scoring an unindexed label throws") {
  const auto index = build_bm25_index(three_labels());
  try {
    bm25_score(doc_with({"acute"}), "L9", index, {});
    FAIL("expected UnknownLabel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownLabel);
  }
}

TEST_CASE("scores match the straight-line reference on every pair") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Corpus corpus = generate_synthetic_corpus(seed, 30, 20);
    const auto index = build_bm25_index(corpus.labels);
    const Bm25Params params;
    for (const auto& doc : corpus.documents) {
      for (const auto& label : corpus.labels) {
        const double expected =
            oracle::bm25_reference(doc.tokens, corpus.labels, label.id, params.k1, params.b);
        CHECK(bm25_score(doc, label.id, index, params) ==
              doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("filter keeps only scores strictly above theta") {
  const auto index = build_bm25_index(three_labels());
  const Document doc = doc_with({"acute", "pain", "fracture"});
  const CandidateSet cands = aux_set({"L1", "L2", "L3"});

  Bm25Params vacuous;
  vacuous.theta = -1.0;
  CHECK(filter_bm25(doc, cands, index, vacuous).labels == cands.labels);

  Bm25Params impossible;
  impossible.theta = std::numeric_limits<double>::infinity();
  CHECK(filter_bm25(doc, cands, index, impossible).labels.empty());

  // theta exactly at a label's score excludes it (strict >).
  Bm25Params boundary;
  boundary.theta = bm25_score(doc, "L3", index, boundary);
  CHECK(filter_bm25(doc, cands, index, boundary).labels.count("L3") == 0);

  CHECK(filter_bm25(doc, cands, index, vacuous).stage == Stage::bm25);
}

TEST_CASE("filter requires an auxiliary-stage input") {
  const auto index = build_bm25_index(three_labels());
  CandidateSet wrong = aux_set({"L1"});
  wrong.stage = Stage::bm25;
  try {
    filter_bm25(doc_with({"acute"}), wrong, index, {});
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

TEST_CASE("raising theta never adds candidates and output stays a subset") {
  const Corpus corpus = generate_synthetic_corpus(4, 60, 20);
  const auto index = build_bm25_index(corpus.labels);
  std::set<LabelId> vocabulary;
  for (const auto& label : corpus.labels) vocabulary.insert(label.id);

  const double grid[] = {-1.0, 0.0, 0.5, 1.0, 2.0};
  for (const Document* doc : corpus.test_documents()) {
    const CandidateSet aux = aux_set(vocabulary);
    std::set<LabelId> previous;
    bool first = true;
    for (double theta : grid) {
      Bm25Params params;
      params.theta = theta;
      const CandidateSet filtered = filter_bm25(*doc, aux, index, params);
      for (const auto& label : filtered.labels) CHECK(aux.labels.count(label) == 1);
      if (!first) {
        for (const auto& label : filtered.labels) CHECK(previous.count(label) == 1);
      }
      previous = filtered.labels;
      first = false;
    }
  }
}

TEST_CASE("adding a document token never decreases a score") {
  const auto index = build_bm25_index(three_labels());
  const std::vector<std::string> base = {"acute", "fracture"};
  for (const std::string extra : {"pain", "chronic", "disorder", "unrelated"}) {
    std::vector<std::string> extended = base;
    extended.push_back(extra);
    for (const auto& label : three_labels()) {
      CHECK(bm25_score(doc_with(extended), label.id, index, {}) >=
            bm25_score(doc_with(base), label.id, index, {}));
    }
  }
}

TEST_CASE("bm25 index persists and refuses a foreign fingerprint") {
  const auto index = build_bm25_index(three_labels());
  testutil::TempDir dir;
  const std::string path = dir.file("bm25_index.json");
  save_bm25_index(index, path, "fp-1");
  const auto loaded = load_bm25_index(path, "fp-1");
  CHECK(loaded.doc_freq == index.doc_freq);
  CHECK(loaded.term_freq == index.term_freq);
  CHECK(loaded.descriptor_len == index.descriptor_len);
  CHECK(loaded.avgdl == index.avgdl);
  CHECK(loaded.n_labels == index.n_labels);

  try {
    load_bm25_index(path, "fp-2");
    FAIL("expected FingerprintMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FingerprintMismatch);
  }
}
