#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "coderank/error.hpp"
#include "coderank/reranker.hpp"
#include "coderank/rng.hpp"
#include "coderank/synthetic.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace coderank;

namespace {

// 2-d vector with the given cosine against (1, 0).
Vector with_cosine(double c) {
  Vector v(2);
  v << c, std::sqrt(1.0 - c * c);
  return v;
}

Vector unit_x() {
  Vector v(2);
  v << 1.0, 0.0;
  return v;
}

double softplus_ref(double z) { return std::log1p(std::exp(z)); }

}  // namespace

TEST_CASE("equal mean cosines give exactly ln 2") {
  const Vector doc = unit_x();
  CHECK(contrastive_loss(doc, {with_cosine(0.3)}, {with_cosine(0.3)}, 1.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Positive cosines {0.3, 0.5} and negative cosines {0.8, 0.0} share mean 0.4.
  const Scalar loss = contrastive_loss(doc, {with_cosine(0.3), with_cosine(0.5)},
                                       {with_cosine(0.8), with_cosine(0.0)}, 1.0);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("positive cosine 1 against negatives averaging -1") {
  const Vector doc = unit_x();
  const Vector pos = 2.0 * doc;   // cosine exactly 1
  const Vector neg = -3.0 * doc;  // cosine exactly -1
  CHECK(contrastive_loss(doc, {pos}, {neg}, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-9));
}

TEST_CASE("the printed form is invariant in tau, the conventional form is not") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    const Index dim = 3 + static_cast<Index>(rng.uniform_index(4));
    auto random_vec = [&]() {
      Vector v(dim);
      for (Index i = 0; i < dim; ++i) v(i) = rng.uniform(-1.0, 1.0) + 0.1;
      return v;
    };
    const Vector doc = random_vec();
    std::vector<Vector> pos(1 + rng.uniform_index(3));
    std::vector<Vector> neg(1 + rng.uniform_index(3));
    for (auto& v : pos) v = random_vec();
    for (auto& v : neg) v = random_vec();

    const Scalar at_1 = contrastive_loss(doc, pos, neg, 1.0);
    const Scalar at_01 = contrastive_loss(doc, pos, neg, 0.1);
    const Scalar at_37 = contrastive_loss(doc, pos, neg, 3.7);
    CHECK(std::fabs(at_1 - at_01) < 1e-12);
    CHECK(std::fabs(at_1 - at_37) < 1e-12);
  }

  LossFlags conventional;
  conventional.conventional_tau = true;
  const Vector doc = unit_x();
  const std::vector<Vector> pos = {with_cosine(0.9)};
  const std::vector<Vector> neg = {with_cosine(-0.2)};
  const Scalar conv_1 = contrastive_loss(doc, pos, neg, 1.0, conventional);
  const Scalar conv_01 = contrastive_loss(doc, pos, neg, 0.1, conventional);
  CHECK(std::fabs(conv_1 - conv_01) > 1e-2);
  // At tau = 1 the two forms coincide.
  CHECK(conv_1 == doctest::Approx(contrastive_loss(doc, pos, neg, 1.0)).epsilon(1e-12));
}

TEST_CASE("per-positive averaging matches the hand formula") {
  const Vector doc = unit_x();
  const std::vector<Vector> pos = {with_cosine(1.0), with_cosine(0.0)};
  const std::vector<Vector> neg = {with_cosine(0.0)};

  const Scalar pooled = contrastive_loss(doc, pos, neg, 1.0);
  CHECK(pooled == doctest::Approx(softplus_ref(0.0 - 0.5)).epsilon(1e-12));

  LossFlags per_positive;
  per_positive.per_positive = true;
  const Scalar split = contrastive_loss(doc, pos, neg, 1.0, per_positive);
  CHECK(split ==
        doctest::Approx((softplus_ref(-1.0) + softplus_ref(0.0)) / 2.0).epsilon(1e-12));
}

TEST_CASE("loss falls when positives align and rises when negatives do") {
  const Vector doc = unit_x();
  const std::vector<Vector> neg = {with_cosine(0.1)};
  Scalar previous = contrastive_loss(doc, {with_cosine(-0.5)}, neg, 1.0);
  for (double c : {0.0, 0.5, 0.9}) {
    const Scalar loss = contrastive_loss(doc, {with_cosine(c)}, neg, 1.0);
    CHECK(loss < previous);
    previous = loss;
  }

  const std::vector<Vector> pos = {with_cosine(0.4)};
  previous = contrastive_loss(doc, pos, {with_cosine(-0.5)}, 1.0);
  for (double c : {0.0, 0.5, 0.9}) {
    const Scalar loss = contrastive_loss(doc, pos, {with_cosine(c)}, 1.0);
    CHECK(loss > previous);
    previous = loss;
  }
}

TEST_CASE("loss gradients match central finite differences under every flag set") {
  Rng rng(73);
  for (const bool conventional : {false, true}) {
    for (const bool per_positive : {false, true}) {
      LossFlags flags;
      flags.conventional_tau = conventional;
      flags.per_positive = per_positive;
      const Scalar tau = conventional ? 0.7 : 1.0;

      const Index dim = 4;
      auto random_vec = [&]() {
        Vector v(dim);
        for (Index i = 0; i < dim; ++i) v(i) = rng.uniform(-1.0, 1.0) + 0.2;
        return v;
      };
      Vector doc = random_vec();
      std::vector<Vector> pos = {random_vec(), random_vec()};
      std::vector<Vector> neg = {random_vec(), random_vec(), random_vec()};

      LossGrads grads;
      contrastive_loss(doc, pos, neg, tau, flags, &grads);
      auto eval = [&]() { return contrastive_loss(doc, pos, neg, tau, flags); };
      const double step = 1e-4;

      for (Index i = 0; i < dim; ++i) {
        CHECK(oracle::gradient_gap(grads.doc(i), oracle::central_difference(doc(i), step, eval)) <
              1e-3);
        for (std::size_t p = 0; p < pos.size(); ++p) {
          CHECK(oracle::gradient_gap(grads.pos[p](i),
                                     oracle::central_difference(pos[p](i), step, eval)) < 1e-3);
        }
        for (std::size_t q = 0; q < neg.size(); ++q) {
          CHECK(oracle::gradient_gap(grads.neg[q](i),
                                     oracle::central_difference(neg[q](i), step, eval)) < 1e-3);
        }
      }
    }
  }
}

TEST_CASE("loss input guards") {
  const Vector doc = unit_x();
  const std::vector<Vector> pos = {with_cosine(0.5)};
  const std::vector<Vector> neg = {with_cosine(-0.5)};

  try {
    contrastive_loss(doc, {}, neg, 1.0);
    FAIL("expected EmptyPositives");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyPositives);
  }
  try {
    contrastive_loss(doc, pos, {}, 1.0);
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateBatch);
  }
  try {
    contrastive_loss(Vector::Zero(2), pos, neg, 1.0);
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVector);
  }
  try {
    contrastive_loss(doc, {Vector::Zero(2)}, neg, 1.0);
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroVector);
  }
  try {
    contrastive_loss(doc, pos, neg, 0.0);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

namespace {

Document doc_with_gold(const std::string& id, std::set<LabelId> gold) {
  Document doc;
  doc.id = id;
  doc.gold_labels = std::move(gold);
  return doc;
}

}  // namespace

TEST_CASE("negatives come from the other batch members' gold labels") {
  const Document d0 = doc_with_gold("d0", {"a", "b"});
  const Document d1 = doc_with_gold("d1", {"c", "d"});
  const ContrastiveBatch batch = sample_negatives({&d0, &d1}, 5);

  CHECK(batch.negatives[0].size() == 2);
  CHECK(batch.negatives[1].size() == 2);
  for (const auto& label : batch.negatives[0]) CHECK(d1.gold_labels.count(label) == 1);
  for (const auto& label : batch.negatives[1]) CHECK(d0.gold_labels.count(label) == 1);
  CHECK_FALSE(batch.sampled_with_replacement);

  const ContrastiveBatch again = sample_negatives({&d0, &d1}, 5);
  CHECK(again.negatives == batch.negatives);
}

TEST_CASE("negatives never collide with the document's own gold labels") {
  const Corpus corpus = generate_synthetic_corpus(21, 40, 12);
  const auto docs = corpus.train_documents();
  for (std::size_t start = 0; start + 4 <= docs.size(); start += 4) {
    const std::vector<const Document*> batch(docs.begin() + static_cast<std::ptrdiff_t>(start),
                                             docs.begin() + static_cast<std::ptrdiff_t>(start + 4));
    const ContrastiveBatch sampled = sample_negatives(batch, 1234 + start);
    for (std::size_t d = 0; d < batch.size(); ++d) {
      CHECK(sampled.negatives[d].size() == batch.size());
      for (const auto& label : sampled.negatives[d]) {
        CHECK(batch[d]->gold_labels.count(label) == 0);
      }
    }
  }
}

TEST_CASE("a document holding every batch label degenerates the batch") {
  const Document d0 = doc_with_gold("d0", {"a", "b", "c"});
  const Document d1 = doc_with_gold("d1", {"a"});
  const Document d2 = doc_with_gold("d2", {"b", "c"});
  try {
    sample_negatives({&d0, &d1, &d2}, 1);
    FAIL("expected DegenerateBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateBatch);
  }
}

TEST_CASE("pools smaller than the batch fall back to replacement") {
  const Document d0 = doc_with_gold("d0", {"a"});
  const Document d1 = doc_with_gold("d1", {"b"});
  const Document d2 = doc_with_gold("d2", {"c"});
  const ContrastiveBatch batch = sample_negatives({&d0, &d1, &d2}, 7);
  CHECK(batch.sampled_with_replacement);
  for (const auto& negatives : batch.negatives) CHECK(negatives.size() == 3);
}

TEST_CASE("negative sampling needs at least two documents") {
  const Document d0 = doc_with_gold("d0", {"a"});
  try {
    sample_negatives({&d0}, 1);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}

namespace {

// Ranker whose document encoding always points along (1, 0): one vocabulary
// token with embedding (2, 0), identity projection. Label rows are unit
// vectors with chosen cosines against that direction.
Ranker toy_ranker(const std::vector<LabelId>& labels, const std::vector<double>& cosines) {
  Ranker ranker;
  ranker.encoder.hidden = 2;
  ranker.encoder.vocab = {kUnkToken, "q"};
  ranker.encoder.vocab_index = {{kUnkToken, 0}, {"q", 1}};
  ranker.encoder.embeddings.resize(2, 2);
  ranker.encoder.embeddings << 0.0, 0.0, 2.0, 0.0;
  ranker.encoder.projection = Matrix::Identity(2, 2);
  ranker.encoder.projection_bias = Vector::Zero(2);
  ranker.use_graphormer = false;
  ranker.labels = labels;
  for (Index i = 0; i < static_cast<Index>(labels.size()); ++i) {
    ranker.label_pos.emplace(labels[static_cast<std::size_t>(i)], i);
  }
  ranker.label_embeddings.resize(static_cast<Index>(labels.size()), 2);
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    ranker.label_embeddings(static_cast<Index>(i), 0) = cosines[i];
    ranker.label_embeddings(static_cast<Index>(i), 1) =
        std::sqrt(1.0 - cosines[i] * cosines[i]);
  }
  ranker.policy = DecisionPolicy{"top_k", 2, 0.0};
  return ranker;
}

Document query_doc() {
  Document doc;
  doc.id = "q0";
  doc.tokens = {"q"};
  return doc;
}

CandidateSet bm25_set(std::set<LabelId> labels) {
  return CandidateSet{"q0", std::move(labels), Stage::bm25, false};
}

}  // namespace

TEST_CASE("candidates are ranked by cosine with the declared tie-break") {
  const Ranker ranker = toy_ranker({"La", "Lb", "Lc"}, {0.1, 0.9, -0.5});
  const RankedList ranked = rank_candidates(query_doc(), bm25_set({"La", "Lb", "Lc"}), ranker);

  REQUIRE(ranked.entries.size() == 3);
  CHECK(ranked.entries[0].label == "Lb");
  CHECK(ranked.entries[0].score == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(ranked.entries[1].label == "La");
  CHECK(ranked.entries[1].score == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(ranked.entries[2].label == "Lc");
  CHECK(ranked.entries[2].score == doctest::Approx(-0.5).epsilon(1e-12));

  // Identical embeddings tie and fall back to lexicographic label order.
  const Ranker tied = toy_ranker({"Lz", "La"}, {0.4, 0.4});
  const RankedList tie_ranked = rank_candidates(query_doc(), bm25_set({"Lz", "La"}), tied);
  CHECK(tie_ranked.entries[0].label == "La");
  CHECK(tie_ranked.entries[1].label == "Lz");

  const RankedList single = rank_candidates(query_doc(), bm25_set({"Lc"}), ranker);
  CHECK(single.entries.size() == 1);
  CHECK(single.entries[0].label == "Lc");
}

TEST_CASE("scores ignore the document vector's magnitude") {
  Ranker ranker = toy_ranker({"La", "Lb"}, {0.3, 0.8});
  const RankedList base = rank_candidates(query_doc(), bm25_set({"La", "Lb"}), ranker);
  ranker.encoder.embeddings(1, 0) = 0.5;  // shorter vector, same direction
  const RankedList scaled = rank_candidates(query_doc(), bm25_set({"La", "Lb"}), ranker);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(scaled.entries[i].label == base.entries[i].label);
    CHECK(scaled.entries[i].score == doctest::Approx(base.entries[i].score).epsilon(1e-12));
  }
}

TEST_CASE("ranking guards stage, ids, and vocabulary") {
  const Ranker ranker = toy_ranker({"La"}, {0.5});
  try {
    CandidateSet aux = bm25_set({"La"});
    aux.stage = Stage::auxiliary;
    rank_candidates(query_doc(), aux, ranker);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
  try {
    rank_candidates(query_doc(), bm25_set({"Lx"}), ranker);
    FAIL("expected UnknownLabel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownLabel);
  }
  try {
    CandidateSet other = bm25_set({"La"});
    other.doc_id = "someone-else";
    rank_candidates(query_doc(), other, ranker);
    FAIL("expected MismatchedIds");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MismatchedIds);
  }
}

TEST_CASE("predict_set applies top-k and threshold policies") {
  RankedList ranked;
  ranked.doc_id = "d";
  for (int i = 0; i < 20; ++i) {
    ranked.entries.push_back(RankedEntry{"L" + std::to_string(100 + i), 1.0 - 0.05 * i});
  }

  const std::set<LabelId> top8 = predict_set(ranked, DecisionPolicy{"top_k", 8, 0.0});
  CHECK(top8.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(top8.count("L" + std::to_string(100 + i)) == 1);

  CHECK(predict_set(ranked, DecisionPolicy{"top_k", 50, 0.0}).size() == 20);
  CHECK(predict_set(ranked, DecisionPolicy{"threshold", 0, 1.1}).empty());
  CHECK(predict_set(ranked, DecisionPolicy{"threshold", 0, -1.0}).size() == 20);
  // The boundary score itself is kept (inclusive threshold).
  CHECK(predict_set(ranked, DecisionPolicy{"threshold", 0, 1.0}).size() == 1);

  try {
    predict_set(ranked, DecisionPolicy{"checkpoint", 8, 0.0});
    FAIL("expected InvalidPolicy");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidPolicy);
  }
  try {
    predict_set(ranked, DecisionPolicy{"top_k", 0, 0.0});
    FAIL("expected InvalidPolicy");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidPolicy);
  }
}

TEST_CASE("calibrated threshold equals the exhaustive grid optimum") {
  Rng rng(79);
  const std::vector<LabelId> labels = {"L1", "L2", "L3", "L4", "L5", "L6"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::set<LabelId>> gold(5);
    std::vector<RankedList> ranked(5);
    for (std::size_t d = 0; d < 5; ++d) {
      ranked[d].doc_id = "d" + std::to_string(d);
      for (const auto& label : labels) {
        if (rng.bernoulli(0.4)) gold[d].insert(label);
        ranked[d].entries.push_back(
            RankedEntry{label, std::round(rng.uniform(-1.0, 1.0) * 50.0) / 50.0});
      }
      std::sort(ranked[d].entries.begin(), ranked[d].entries.end(),
                [](const RankedEntry& a, const RankedEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.label < b.label;
                });
    }

    double best_f1 = -1.0;
    double best_threshold = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double t = -1.0 + 0.02 * i;
      std::vector<std::set<LabelId>> pred(5);
      for (std::size_t d = 0; d < 5; ++d) {
        for (const auto& entry : ranked[d].entries) {
          if (entry.score >= t) pred[d].insert(entry.label);
        }
      }
      const double f1 = oracle::f1_reference(gold, pred, labels).micro;
      if (f1 > best_f1) {
        best_f1 = f1;
        best_threshold = t;
      }
    }

    double reported_f1 = 0.0;
    const Scalar threshold = calibrate_threshold(gold, ranked, labels, &reported_f1);
    CHECK(threshold == doctest::Approx(best_threshold).epsilon(1e-12));
    CHECK(reported_f1 == doctest::Approx(best_f1).epsilon(1e-12));
  }
}

namespace {

// Small corpus that trains in well under a second.
Corpus tiny_corpus() {
  SyntheticSpec spec;
  spec.min_labels_per_doc = 2;
  spec.max_labels_per_doc = 3;
  spec.background_tokens = 10;
  spec.background_vocab = 20;
  spec.train_frac = 0.7;
  spec.valid_frac = 0.3;
  return generate_synthetic_corpus(31, 12, 6, spec);
}

TrainConfig tiny_config() {
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 2;
  config.learning_rate = 0.05;
  config.hidden = 8;
  config.n_layers = 1;
  config.n_heads = 2;
  config.seed = 3;
  return config;
}

bool same_encoder(const EncoderParams& a, const EncoderParams& b) {
  return a.vocab == b.vocab && (a.embeddings - b.embeddings).cwiseAbs().maxCoeff() == 0.0 &&
         (a.projection - b.projection).cwiseAbs().maxCoeff() == 0.0 &&
         (a.projection_bias - b.projection_bias).cwiseAbs().maxCoeff() == 0.0;
}

bool same_graphormer(const GraphormerParams& a, const GraphormerParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if ((a.layers[l].wq - b.layers[l].wq).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.layers[l].wk - b.layers[l].wk).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.layers[l].wv - b.layers[l].wv).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.layers[l].wo - b.layers[l].wo).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return (a.spatial_bias - b.spatial_bias).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("one epoch of training lowers the mean batch loss") {
  const Corpus corpus = tiny_corpus();
  const LabelGraph graph = build_label_graph(corpus.train_documents(), corpus.labels, 1.0);
  const TrainResult result = train(corpus, graph, tiny_config());
  REQUIRE(result.epochs.size() == 2);
  CHECK(result.epochs[1].mean_loss < result.epochs[0].mean_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Corpus corpus = tiny_corpus();
  const LabelGraph graph = build_label_graph(corpus.train_documents(), corpus.labels, 1.0);
  const TrainResult a = train(corpus, graph, tiny_config());
  const TrainResult b = train(corpus, graph, tiny_config());
  CHECK(same_encoder(a.checkpoint.encoder, b.checkpoint.encoder));
  CHECK(same_graphormer(a.checkpoint.graphormer, b.checkpoint.graphormer));
  CHECK(a.checkpoint.best_epoch == b.checkpoint.best_epoch);
  CHECK(a.checkpoint.best_valid_micro_f1 == b.checkpoint.best_valid_micro_f1);
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].mean_loss == b.epochs[e].mean_loss);
    CHECK(a.epochs[e].valid_micro_f1 == b.epochs[e].valid_micro_f1);
  }
}

TEST_CASE("zero epochs and zero learning rate leave the initialization untouched") {
  const Corpus corpus = tiny_corpus();
  const LabelGraph graph = build_label_graph(corpus.train_documents(), corpus.labels, 1.0);

  TrainConfig no_epochs = tiny_config();
  no_epochs.epochs = 0;
  const TrainResult frozen = train(corpus, graph, no_epochs);
  CHECK(frozen.epochs.empty());

  // The checkpoint equals a from-scratch initialization over the training
  // vocabulary (documents plus descriptors).
  std::set<std::string> vocab;
  for (const Document* doc : corpus.train_documents()) {
    vocab.insert(doc->tokens.begin(), doc->tokens.end());
  }
  for (const auto& label : corpus.labels) {
    vocab.insert(label.descriptor_tokens.begin(), label.descriptor_tokens.end());
  }
  const EncoderParams init = init_encoder_params(no_epochs.seed, vocab, no_epochs.hidden);
  CHECK(same_encoder(frozen.checkpoint.encoder, init));
  CHECK(same_graphormer(frozen.checkpoint.graphormer,
                        init_graphormer_params(no_epochs.seed, no_epochs.n_layers,
                                               no_epochs.n_heads, no_epochs.hidden)));

  TrainConfig zero_lr = tiny_config();
  zero_lr.learning_rate = 0.0;
  const TrainResult idle = train(corpus, graph, zero_lr);
  CHECK(same_encoder(idle.checkpoint.encoder, init));
  CHECK(same_graphormer(idle.checkpoint.graphormer, frozen.checkpoint.graphormer));
}

TEST_CASE("train validates its configuration") {
  const Corpus corpus = tiny_corpus();
  const LabelGraph graph = build_label_graph(corpus.train_documents(), corpus.labels, 1.0);

  TrainConfig bad = tiny_config();
  bad.batch_size = 1;
  try {
    train(corpus, graph, bad);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }

  bad = tiny_config();
  bad.optimizer = "newton";
  try {
    train(corpus, graph, bad);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
}
