#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "coderank/aux_retrieval.hpp"
#include "coderank/checkpoint.hpp"
#include "coderank/corpus.hpp"
#include "coderank/graphormer.hpp"
#include "coderank/label_graph.hpp"
#include "coderank/ranking.hpp"
#include "coderank/text_encoder.hpp"
#include "coderank/types.hpp"

namespace coderank {

// Variants of the contrastive objective. The default is the printed form,
// where the temperature divides both terms of the ratio and cancels; the
// conventional form puts it inside the exponents instead. Multi-positive
// handling defaults to averaging cosines inside one exponent; the
// per-positive flag averages one loss term per positive instead.
struct LossFlags {
  bool conventional_tau = false;
  bool per_positive = false;
};

struct LossGrads {
  Vector doc;
  std::vector<Vector> pos;
  std::vector<Vector> neg;
};

Scalar contrastive_loss(const Vector& doc_vec, const std::vector<Vector>& pos_vecs,
                        const std::vector<Vector>& neg_vecs, Scalar tau,
                        const LossFlags& flags = {}, LossGrads* grads = nullptr);

struct ContrastiveBatch {
  std::vector<const Document*> docs;
  std::vector<std::set<LabelId>> positives;          // gold labels per doc
  std::vector<std::vector<LabelId>> negatives;       // exactly |docs| per doc
  bool sampled_with_replacement = false;
};

// Negatives come from the other batch members' gold labels, never the doc's
// own. Pools at least as large as the batch are sampled without replacement;
// smaller (nonempty) pools fall back to replacement.
ContrastiveBatch sample_negatives(const std::vector<const Document*>& batch, std::uint64_t seed);

struct TrainConfig {
  Scalar tau = 1.0;
  int batch_size = 16;
  Scalar learning_rate = 5e-5;
  int epochs = 10;
  std::uint64_t seed = 1;
  Scalar warmup_ratio = 0.1;
  std::string optimizer = "sgd";  // or "adam"
  LossFlags loss_flags;
  Index hidden = 64;
  int n_layers = 2;
  int n_heads = 4;
  bool use_graphormer = true;  // false: rank against raw descriptor encodings
};

// Decision rule for the per-epoch validation micro F1 used for checkpoint
// selection. A calibrated global threshold drifts with the score scale while
// training, so selection uses a fixed top-k cut instead; 8 matches the
// default top_k policy.
constexpr int kValidationTopK = 8;

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double valid_micro_f1 = 0.0;  // micro F1 at the top-k validation rule
  Scalar calibrated_threshold = 0.0;
  std::int64_t skipped_batches = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> epochs;
};

using TrainLogger = std::function<void(const EpochStats&)>;

TrainResult train(const Corpus& corpus, const LabelGraph& graph, const TrainConfig& config,
                  const TrainLogger& logger = {});

// Frozen model state plus the precomputed label embedding matrix.
struct Ranker {
  EncoderParams encoder;
  GraphormerParams graphormer;
  bool use_graphormer = true;
  std::vector<LabelId> labels;
  std::unordered_map<LabelId, Index> label_pos;
  Matrix label_embeddings;  // one row per label, graph node order
  DecisionPolicy policy;
};

Ranker make_ranker(const Checkpoint& ckpt, const LabelGraph& graph,
                   const std::vector<LabelDescriptor>& descriptors, bool use_graphormer = true);

RankedList rank_candidates(const Document& doc, const CandidateSet& cands, const Ranker& ranker);

std::set<LabelId> predict_set(const RankedList& ranked, const DecisionPolicy& policy);

// Exhaustive grid search over 101 thresholds in [-1, 1]; returns the smallest
// threshold maximizing micro F1 of "predict every label scoring >= t".
Scalar calibrate_threshold(const std::vector<std::set<LabelId>>& gold,
                           const std::vector<RankedList>& ranked,
                           const std::vector<LabelId>& labels, double* best_f1 = nullptr);

}  // namespace coderank
