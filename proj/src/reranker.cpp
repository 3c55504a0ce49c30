#include "coderank/reranker.hpp"

#include <algorithm>
#include <cmath>

#include "coderank/error.hpp"
#include "coderank/metrics.hpp"
#include "coderank/rng.hpp"

namespace coderank {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Scalar checked_norm(const Vector& v, const char* what) {
  const Scalar n = v.norm();
  if (n == 0.0) throw Error(ErrorKind::ZeroVector, std::string(what) + ": cosine undefined for a zero vector");
  return n;
}

Scalar cosine(const Vector& a, const Vector& b, Scalar norm_a, Scalar norm_b) {
  return a.dot(b) / (norm_a * norm_b);
}

// d cos(a,b) / da = b/(|a||b|) - cos * a/|a|^2
Vector cosine_grad_lhs(const Vector& a, const Vector& b, Scalar norm_a, Scalar norm_b, Scalar cos) {
  return b / (norm_a * norm_b) - (cos / (norm_a * norm_a)) * a;
}

}  // namespace

Scalar contrastive_loss(const Vector& doc_vec, const std::vector<Vector>& pos_vecs,
                        const std::vector<Vector>& neg_vecs, Scalar tau,
                        const LossFlags& flags, LossGrads* grads) {
  if (pos_vecs.empty()) throw Error(ErrorKind::EmptyPositives, "contrastive loss needs positives");
  if (neg_vecs.empty()) throw Error(ErrorKind::DegenerateBatch, "contrastive loss needs negatives");
  if (!(tau > 0.0)) throw Error(ErrorKind::ConfigError, "temperature must be positive");

  const Scalar doc_norm = checked_norm(doc_vec, "document vector");
  const std::size_t n_pos = pos_vecs.size();
  const std::size_t n_neg = neg_vecs.size();

  std::vector<Scalar> pos_norm(n_pos), pos_cos(n_pos);
  for (std::size_t i = 0; i < n_pos; ++i) {
    pos_norm[i] = checked_norm(pos_vecs[i], "positive vector");
    pos_cos[i] = cosine(doc_vec, pos_vecs[i], doc_norm, pos_norm[i]);
  }
  std::vector<Scalar> neg_norm(n_neg), neg_cos(n_neg);
  Scalar mean_neg = 0.0;
  for (std::size_t j = 0; j < n_neg; ++j) {
    neg_norm[j] = checked_norm(neg_vecs[j], "negative vector");
    neg_cos[j] = cosine(doc_vec, neg_vecs[j], doc_norm, neg_norm[j]);
    mean_neg += neg_cos[j];
  }
  mean_neg /= static_cast<Scalar>(n_neg);

  // As printed, the loss is -log((S/tau) / (S/tau + D/tau)) with
  // S = exp(mean positive cosine) and D = exp(mean negative cosine); tau
  // cancels, leaving softplus(mean_neg - mean_pos). The conventional variant
  // divides the cosines by tau inside the exponents instead.
  const Scalar scale = flags.conventional_tau ? 1.0 / tau : 1.0;

  Scalar loss = 0.0;
  std::vector<Scalar> d_pos_cos(n_pos, 0.0);
  Scalar d_neg_cos_each = 0.0;  // identical for every negative
  if (flags.per_positive) {
    Scalar sig_sum = 0.0;
    for (std::size_t i = 0; i < n_pos; ++i) {
      const Scalar z = (mean_neg - pos_cos[i]) * scale;
      loss += softplus(z);
      const Scalar s = sigmoid(z);
      sig_sum += s;
      d_pos_cos[i] = -s * scale / static_cast<Scalar>(n_pos);
    }
    loss /= static_cast<Scalar>(n_pos);
    d_neg_cos_each = sig_sum * scale / (static_cast<Scalar>(n_pos) * static_cast<Scalar>(n_neg));
  } else {
    Scalar mean_pos = 0.0;
    for (std::size_t i = 0; i < n_pos; ++i) mean_pos += pos_cos[i];
    mean_pos /= static_cast<Scalar>(n_pos);
    const Scalar z = (mean_neg - mean_pos) * scale;
    loss = softplus(z);
    const Scalar s = sigmoid(z);
    for (std::size_t i = 0; i < n_pos; ++i) d_pos_cos[i] = -s * scale / static_cast<Scalar>(n_pos);
    d_neg_cos_each = s * scale / static_cast<Scalar>(n_neg);
  }
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFiniteLoss, "contrastive loss is not finite");

  if (grads != nullptr) {
    grads->doc = Vector::Zero(doc_vec.size());
    grads->pos.assign(n_pos, Vector());
    grads->neg.assign(n_neg, Vector());
    for (std::size_t i = 0; i < n_pos; ++i) {
      grads->doc +=
          d_pos_cos[i] * cosine_grad_lhs(doc_vec, pos_vecs[i], doc_norm, pos_norm[i], pos_cos[i]);
      grads->pos[i] =
          d_pos_cos[i] * cosine_grad_lhs(pos_vecs[i], doc_vec, pos_norm[i], doc_norm, pos_cos[i]);
    }
    for (std::size_t j = 0; j < n_neg; ++j) {
      grads->doc +=
          d_neg_cos_each * cosine_grad_lhs(doc_vec, neg_vecs[j], doc_norm, neg_norm[j], neg_cos[j]);
      grads->neg[j] =
          d_neg_cos_each * cosine_grad_lhs(neg_vecs[j], doc_vec, neg_norm[j], doc_norm, neg_cos[j]);
    }
  }
  return loss;
}

ContrastiveBatch sample_negatives(const std::vector<const Document*>& batch, std::uint64_t seed) {
  if (batch.size() < 2) {
    throw Error(ErrorKind::ConfigError, "negative sampling needs a batch of at least 2 documents");
  }
  const std::size_t n = batch.size();

  ContrastiveBatch result;
  result.docs = batch;
  result.positives.reserve(n);
  for (const Document* doc : batch) result.positives.push_back(doc->gold_labels);

  Rng rng(seed);
  result.negatives.resize(n);
  for (std::size_t d = 0; d < n; ++d) {
    // Eligible pool: gold labels of the other batch members, minus this
    // document's own gold labels, in sorted order for determinism.
    std::set<LabelId> pool_set;
    for (std::size_t other = 0; other < n; ++other) {
      if (other == d) continue;
      for (const auto& label : batch[other]->gold_labels) {
        if (batch[d]->gold_labels.count(label) == 0) pool_set.insert(label);
      }
    }
    if (pool_set.empty()) {
      throw Error(ErrorKind::DegenerateBatch,
                  batch[d]->id + ": no eligible negatives in this batch");
    }
    std::vector<LabelId> pool(pool_set.begin(), pool_set.end());
    auto& negatives = result.negatives[d];
    negatives.reserve(n);
    if (pool.size() >= n) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
        negatives.push_back(pool[i]);
      }
    } else {
      result.sampled_with_replacement = true;
      for (std::size_t i = 0; i < n; ++i) negatives.push_back(pool[rng.uniform_index(pool.size())]);
    }
  }
  return result;
}

namespace {

RankedList rank_against(const std::string& doc_id, const Vector& doc_vec,
                        const std::vector<const LabelId*>& cand_labels,
                        const std::vector<Index>& cand_rows, const Matrix& label_embeddings) {
  RankedList ranked;
  ranked.doc_id = doc_id;
  ranked.entries.reserve(cand_labels.size());
  const Scalar doc_norm = doc_vec.norm();
  for (std::size_t i = 0; i < cand_labels.size(); ++i) {
    const Vector label_vec = label_embeddings.row(cand_rows[i]).transpose();
    const Scalar label_norm = label_vec.norm();
    Scalar score = 0.0;
    if (doc_norm != 0.0 && label_norm != 0.0) {
      score = label_vec.dot(doc_vec) / (doc_norm * label_norm);
    }
    ranked.entries.push_back(RankedEntry{*cand_labels[i], score});
  }
  std::sort(ranked.entries.begin(), ranked.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });
  return ranked;
}

struct AdamState {
  Matrix m, v;
  explicit AdamState(Index rows, Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

class Optimizer {
 public:
  Optimizer(bool adam, std::vector<Matrix*> params, std::vector<Vector*> vec_params)
      : adam_(adam), params_(std::move(params)), vec_params_(std::move(vec_params)) {
    if (!adam_) return;
    for (Matrix* p : params_) states_.emplace_back(p->rows(), p->cols());
    for (Vector* p : vec_params_) vec_states_.emplace_back(p->size(), 1);
  }

  void step(const std::vector<const Matrix*>& grads, const std::vector<const Vector*>& vec_grads,
            double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      apply(*params_[i], *grads[i], adam_ ? &states_[i] : nullptr, lr);
    }
    for (std::size_t i = 0; i < vec_params_.size(); ++i) {
      Matrix g = *vec_grads[i];
      Matrix p = *vec_params_[i];
      apply(p, g, adam_ ? &vec_states_[i] : nullptr, lr);
      *vec_params_[i] = p.col(0);
    }
  }

 private:
  void apply(Matrix& p, const Matrix& g, AdamState* state, double lr) {
    if (state == nullptr) {
      p -= lr * g;
      return;
    }
    state->m = kAdamBeta1 * state->m + (1.0 - kAdamBeta1) * g;
    state->v = kAdamBeta2 * state->v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    const double m_corr = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double v_corr = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    p.array() -=
        lr * (state->m.array() / m_corr) / ((state->v.array() / v_corr).sqrt() + kAdamEpsilon);
  }

  bool adam_;
  std::vector<Matrix*> params_;
  std::vector<Vector*> vec_params_;
  std::vector<AdamState> states_;
  std::vector<AdamState> vec_states_;
  std::int64_t t_ = 0;
};

double scheduled_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                    std::int64_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::int64_t decay_span = std::max<std::int64_t>(1, total_steps - warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_span));
  return base_lr * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

void validate_train_config(const TrainConfig& config) {
  if (!(config.tau > 0.0)) throw Error(ErrorKind::ConfigError, "tau must be positive");
  if (config.batch_size < 2) throw Error(ErrorKind::ConfigError, "batch size must be at least 2");
  if (config.epochs < 0) throw Error(ErrorKind::ConfigError, "epochs cannot be negative");
  if (!(config.learning_rate >= 0.0)) {
    throw Error(ErrorKind::ConfigError, "learning rate cannot be negative");
  }
  if (config.warmup_ratio < 0.0 || config.warmup_ratio > 1.0) {
    throw Error(ErrorKind::ConfigError, "warmup ratio must lie in [0, 1]");
  }
  if (config.optimizer != "sgd" && config.optimizer != "adam") {
    throw Error(ErrorKind::ConfigError, "optimizer must be 'sgd' or 'adam'");
  }
  if (config.hidden <= 0 || config.n_layers < 1 || config.n_heads < 1 ||
      config.hidden % config.n_heads != 0) {
    throw Error(ErrorKind::ConfigError, "invalid encoder/graph attention dimensions");
  }
}

}  // namespace

TrainResult train(const Corpus& corpus, const LabelGraph& graph, const TrainConfig& config,
                  const TrainLogger& logger) {
  validate_train_config(config);
  const std::vector<const Document*> train_docs = corpus.train_documents();
  if (train_docs.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no training documents");
  const std::vector<const Document*> valid_docs = corpus.valid_documents();
  if (graph.labels.size() != corpus.labels.size()) {
    throw Error(ErrorKind::MismatchedIds, "label graph does not cover the corpus vocabulary");
  }

  std::set<std::string> vocab;
  for (const Document* doc : train_docs) vocab.insert(doc->tokens.begin(), doc->tokens.end());
  for (const auto& label : corpus.labels) {
    vocab.insert(label.descriptor_tokens.begin(), label.descriptor_tokens.end());
  }

  EncoderParams encoder = init_encoder_params(config.seed, vocab, config.hidden);
  GraphormerParams graphormer =
      init_graphormer_params(config.seed, config.n_layers, config.n_heads, config.hidden);

  const Index n_labels = graph.n;
  std::unordered_map<LabelId, Index> label_pos;
  for (Index i = 0; i < n_labels; ++i) label_pos.emplace(graph.labels[static_cast<std::size_t>(i)], i);

  std::vector<LabelId> label_vocab = graph.labels;
  std::vector<std::set<LabelId>> valid_gold;
  valid_gold.reserve(valid_docs.size());
  for (const Document* doc : valid_docs) valid_gold.push_back(doc->gold_labels);

  // Validation for checkpoint selection: rank the full vocabulary per
  // validation document and score micro F1 under a fixed top-k decision rule.
  // A grid-calibrated global threshold drifts with the score scale from epoch
  // to epoch, so it anti-selects while the ranking is still improving; top-k
  // tracks ranking quality directly. The threshold is still calibrated and
  // stored so the checkpoint policy can use it at inference time.
  const auto validate = [&](const EncoderParams& enc, const GraphormerParams& gra,
                            Scalar* threshold) -> double {
    if (valid_docs.empty()) {
      *threshold = 0.0;
      return 0.0;
    }
    Matrix h0 = init_node_features(corpus.labels, enc);
    Matrix hl = config.use_graphormer ? graphormer_forward(h0, graph, gra) : std::move(h0);
    std::vector<const LabelId*> all_labels;
    std::vector<Index> all_rows;
    all_labels.reserve(static_cast<std::size_t>(n_labels));
    for (Index i = 0; i < n_labels; ++i) {
      all_labels.push_back(&graph.labels[static_cast<std::size_t>(i)]);
      all_rows.push_back(i);
    }
    std::vector<RankedList> ranked;
    ranked.reserve(valid_docs.size());
    for (const Document* doc : valid_docs) {
      const PooledVector pooled = encode(doc->tokens, enc);
      ranked.push_back(rank_against(doc->id, pooled.values, all_labels, all_rows, hl));
    }
    *threshold = calibrate_threshold(valid_gold, ranked, label_vocab);

    DecisionPolicy top_k_rule;
    top_k_rule.kind = "top_k";
    top_k_rule.k = kValidationTopK;
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t d = 0; d < ranked.size(); ++d) {
      const std::set<LabelId> predicted = predict_set(ranked[d], top_k_rule);
      for (const LabelId& y : predicted) {
        if (valid_gold[d].count(y)) ++tp; else ++fp;
      }
      for (const LabelId& y : valid_gold[d]) {
        if (!predicted.count(y)) ++fn;
      }
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };

  TrainResult result;
  Scalar init_threshold = 0.0;
  double best_f1 = validate(encoder, graphormer, &init_threshold);
  EncoderParams best_encoder = encoder;
  GraphormerParams best_graphormer = graphormer;
  Scalar best_threshold = init_threshold;
  int best_epoch = 0;

  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  std::size_t batches_per_epoch = train_docs.size() / batch_size;
  if (train_docs.size() % batch_size >= 2) ++batches_per_epoch;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(batches_per_epoch) * static_cast<std::int64_t>(config.epochs);
  const std::int64_t warmup_steps =
      static_cast<std::int64_t>(std::llround(config.warmup_ratio * static_cast<double>(total_steps)));

  std::vector<Matrix*> matrix_params = {&encoder.embeddings, &encoder.projection,
                                        &graphormer.spatial_bias};
  for (auto& layer : graphormer.layers) {
    matrix_params.push_back(&layer.wq);
    matrix_params.push_back(&layer.wk);
    matrix_params.push_back(&layer.wv);
    matrix_params.push_back(&layer.wo);
  }
  Optimizer optimizer(config.optimizer == "adam", matrix_params, {&encoder.projection_bias});

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(config.seed, "shuffle/epoch" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t loss_batches = 0;
    std::int64_t skipped = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      if (end - start < 2) break;  // tail too small to sample negatives from
      std::vector<const Document*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_docs[order[i]]);

      ContrastiveBatch contrastive;
      try {
        contrastive = sample_negatives(
            batch, derive_seed(config.seed, "negatives/epoch" + std::to_string(epoch) + "/batch" +
                                                std::to_string(start / batch_size)));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::DegenerateBatch) {
          ++skipped;
          continue;
        }
        throw;
      }

      EncoderGrads enc_grads = zero_encoder_grads(encoder);
      std::vector<EncodeCache> label_caches;
      Matrix h0 = init_node_features(corpus.labels, encoder, &label_caches);
      GraphormerCache g_cache;
      Matrix hl = config.use_graphormer ? graphormer_forward(h0, graph, graphormer, &g_cache) : h0;

      const Scalar inv_batch = 1.0 / static_cast<Scalar>(batch.size());
      Matrix g_hl = Matrix::Zero(n_labels, config.hidden);
      double batch_loss = 0.0;
      for (std::size_t d = 0; d < batch.size(); ++d) {
        const Document* doc = batch[d];
        EncodeCache doc_cache;
        const PooledVector pooled = encode(doc->tokens, encoder, &doc_cache);

        std::vector<Index> pos_rows;
        pos_rows.reserve(doc->gold_labels.size());
        std::vector<Vector> pos_vecs;
        pos_vecs.reserve(doc->gold_labels.size());
        for (const auto& label : doc->gold_labels) {
          auto it = label_pos.find(label);
          if (it == label_pos.end()) throw Error(ErrorKind::UnknownLabel, doc->id + ": " + label);
          pos_rows.push_back(it->second);
          pos_vecs.push_back(hl.row(it->second).transpose());
        }
        std::vector<Index> neg_rows;
        neg_rows.reserve(contrastive.negatives[d].size());
        std::vector<Vector> neg_vecs;
        neg_vecs.reserve(contrastive.negatives[d].size());
        for (const auto& label : contrastive.negatives[d]) {
          const Index row = label_pos.at(label);
          neg_rows.push_back(row);
          neg_vecs.push_back(hl.row(row).transpose());
        }

        LossGrads loss_grads;
        const Scalar loss =
            contrastive_loss(pooled.values, pos_vecs, neg_vecs, config.tau, config.loss_flags,
                             &loss_grads);
        batch_loss += loss;
        encode_backward(doc_cache, encoder, loss_grads.doc * inv_batch, enc_grads);
        for (std::size_t i = 0; i < pos_rows.size(); ++i) {
          g_hl.row(pos_rows[i]) += inv_batch * loss_grads.pos[i].transpose();
        }
        for (std::size_t j = 0; j < neg_rows.size(); ++j) {
          g_hl.row(neg_rows[j]) += inv_batch * loss_grads.neg[j].transpose();
        }
      }
      batch_loss *= inv_batch;
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::NonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(start / batch_size) + ": loss is not finite");
      }

      GraphormerGrads g_grads = zero_graphormer_grads(graphormer);
      Matrix g_features;
      if (config.use_graphormer) {
        g_grads = graphormer_backward(g_cache, graphormer, g_hl);
        g_features = std::move(g_grads.features);
      } else {
        g_features = std::move(g_hl);
      }
      for (Index i = 0; i < n_labels; ++i) {
        encode_backward(label_caches[static_cast<std::size_t>(i)], encoder,
                        g_features.row(i).transpose(), enc_grads);
      }

      const double lr = scheduled_lr(config.learning_rate, step, total_steps, warmup_steps);
      std::vector<const Matrix*> matrix_grads = {&enc_grads.embeddings, &enc_grads.projection,
                                                 &g_grads.spatial_bias};
      for (auto& layer : g_grads.layers) {
        matrix_grads.push_back(&layer.wq);
        matrix_grads.push_back(&layer.wk);
        matrix_grads.push_back(&layer.wv);
        matrix_grads.push_back(&layer.wo);
      }
      optimizer.step(matrix_grads, {&enc_grads.projection_bias}, lr);
      ++step;
      loss_sum += batch_loss;
      ++loss_batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_batches == 0 ? 0.0 : loss_sum / static_cast<double>(loss_batches);
    stats.skipped_batches = skipped;
    Scalar threshold = 0.0;
    stats.valid_micro_f1 = validate(encoder, graphormer, &threshold);
    stats.calibrated_threshold = threshold;
    if (stats.valid_micro_f1 >= best_f1) {
      best_f1 = stats.valid_micro_f1;
      best_encoder = encoder;
      best_graphormer = graphormer;
      best_threshold = threshold;
      best_epoch = epoch;
    }
    result.epochs.push_back(stats);
    if (logger) logger(stats);
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.seed = config.seed;
  ckpt.hidden = config.hidden;
  ckpt.n_layers = config.n_layers;
  ckpt.n_heads = config.n_heads;
  ckpt.encoder = std::move(best_encoder);
  ckpt.graphormer = std::move(best_graphormer);
  ckpt.labels = graph.labels;
  ckpt.policy.kind = "threshold";
  ckpt.policy.threshold = best_threshold;
  ckpt.best_epoch = best_epoch;
  ckpt.best_valid_micro_f1 = best_f1;
  return result;
}

Ranker make_ranker(const Checkpoint& ckpt, const LabelGraph& graph,
                   const std::vector<LabelDescriptor>& descriptors, bool use_graphormer) {
  if (ckpt.labels != graph.labels) {
    throw Error(ErrorKind::MismatchedIds, "checkpoint and label graph disagree on label order");
  }
  if (descriptors.size() != graph.labels.size()) {
    throw Error(ErrorKind::MismatchedIds, "descriptor list does not match the label graph");
  }
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    if (descriptors[i].id != graph.labels[i]) {
      throw Error(ErrorKind::MismatchedIds, "descriptor order does not match the label graph");
    }
  }

  Ranker ranker;
  ranker.encoder = ckpt.encoder;
  ranker.graphormer = ckpt.graphormer;
  ranker.use_graphormer = use_graphormer;
  ranker.labels = ckpt.labels;
  for (Index i = 0; i < static_cast<Index>(ranker.labels.size()); ++i) {
    ranker.label_pos.emplace(ranker.labels[static_cast<std::size_t>(i)], i);
  }
  Matrix h0 = init_node_features(descriptors, ranker.encoder);
  ranker.label_embeddings =
      use_graphormer ? graphormer_forward(h0, graph, ranker.graphormer) : std::move(h0);
  ranker.policy = ckpt.policy;
  return ranker;
}

RankedList rank_candidates(const Document& doc, const CandidateSet& cands, const Ranker& ranker) {
  if (cands.doc_id != doc.id) {
    throw Error(ErrorKind::MismatchedIds, "candidate set belongs to a different document");
  }
  if (cands.stage != Stage::bm25) {
    throw Error(ErrorKind::ConfigError, "rank_candidates expects the lexical-stage candidate set");
  }
  std::vector<const LabelId*> cand_labels;
  std::vector<Index> cand_rows;
  cand_labels.reserve(cands.labels.size());
  cand_rows.reserve(cands.labels.size());
  for (const auto& label : cands.labels) {
    auto it = ranker.label_pos.find(label);
    if (it == ranker.label_pos.end()) {
      throw Error(ErrorKind::UnknownLabel, "candidate label not in the model: " + label);
    }
    cand_labels.push_back(&label);
    cand_rows.push_back(it->second);
  }
  const PooledVector pooled = encode(doc.tokens, ranker.encoder);
  return rank_against(doc.id, pooled.values, cand_labels, cand_rows, ranker.label_embeddings);
}

std::set<LabelId> predict_set(const RankedList& ranked, const DecisionPolicy& policy) {
  std::set<LabelId> predicted;
  if (policy.kind == "top_k") {
    if (policy.k < 1) throw Error(ErrorKind::InvalidPolicy, "top_k policy needs k >= 1");
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(policy.k),
                                                   ranked.entries.size());
    for (std::size_t i = 0; i < take; ++i) predicted.insert(ranked.entries[i].label);
    return predicted;
  }
  if (policy.kind == "threshold") {
    if (!std::isfinite(policy.threshold)) {
      throw Error(ErrorKind::InvalidPolicy, "threshold policy needs a finite threshold");
    }
    for (const auto& entry : ranked.entries) {
      if (entry.score >= policy.threshold) predicted.insert(entry.label);
    }
    return predicted;
  }
  throw Error(ErrorKind::InvalidPolicy, "unknown decision policy: " + policy.kind);
}

Scalar calibrate_threshold(const std::vector<std::set<LabelId>>& gold,
                           const std::vector<RankedList>& ranked,
                           const std::vector<LabelId>& labels, double* best_f1) {
  if (gold.size() != ranked.size()) {
    throw Error(ErrorKind::MismatchedIds, "gold and ranking lists differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyLabelSet, "calibration needs a label vocabulary");

  // Entries are sorted descending, so the predictions at threshold t are a
  // prefix; prefix gold counts give pooled TP/FP/FN without building sets.
  std::vector<std::vector<std::int64_t>> prefix_gold(ranked.size());
  std::int64_t gold_total = 0;
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    auto& prefix = prefix_gold[d];
    prefix.resize(ranked[d].entries.size() + 1, 0);
    for (std::size_t i = 0; i < ranked[d].entries.size(); ++i) {
      prefix[i + 1] = prefix[i] + (gold[d].count(ranked[d].entries[i].label) > 0 ? 1 : 0);
    }
    gold_total += static_cast<std::int64_t>(gold[d].size());
  }

  double best = -1.0;
  Scalar best_threshold = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const Scalar t = -1.0 + 0.02 * static_cast<Scalar>(i);
    std::int64_t tp = 0;
    std::int64_t predicted = 0;
    for (std::size_t d = 0; d < ranked.size(); ++d) {
      const auto& entries = ranked[d].entries;
      const auto it = std::lower_bound(
          entries.begin(), entries.end(), t,
          [](const RankedEntry& e, Scalar value) { return e.score >= value; });
      const std::size_t count = static_cast<std::size_t>(it - entries.begin());
      predicted += static_cast<std::int64_t>(count);
      tp += prefix_gold[d][count];
    }
    const std::int64_t fp = predicted - tp;
    const std::int64_t fn = gold_total - tp;
    const std::int64_t denom = 2 * tp + fp + fn;
    const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    if (f1 > best) {
      best = f1;
      best_threshold = t;
    }
  }
  if (best_f1 != nullptr) *best_f1 = best;
  return best_threshold;
}

}  // namespace coderank
