#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coderank/ranking.hpp"
#include "coderank/types.hpp"

namespace coderank {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

struct F1Result {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::map<LabelId, ConfusionCounts> per_label;
};

struct AucResult {
  double macro_auc = 0.0;
  double micro_auc = 0.0;
  std::int64_t macro_labels = 0;  // labels with at least one positive and one negative
};

struct PrecisionAtK {
  double value = 0.0;
  std::int64_t short_lists = 0;  // documents ranked with fewer than k entries
};

struct EvalReport {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double macro_auc = 0.0;
  double micro_auc = 0.0;
  std::map<int, double> p_at_k;
  std::int64_t short_ranked_lists = 0;
  std::map<LabelId, ConfusionCounts> per_label;
};

// Micro F1 pools TP/FP/FN over all labels; macro averages per-label F1 over
// the full vocabulary with 0/0 defined as 0.
F1Result f1_scores(const std::vector<std::set<LabelId>>& gold,
                   const std::vector<std::set<LabelId>>& pred,
                   const std::vector<LabelId>& labels);

// Mann–Whitney AUC with midrank tie handling over (score, is_positive)
// instances. Returns NaN-free values only; degenerate inputs throw.
double mann_whitney_auc(const std::vector<std::pair<double, bool>>& instances);

inline constexpr double kUnscoredLabelScore = -1.0;

// Per-doc score maps; (doc, label) pairs absent from the map are treated as
// non-candidates and scored kUnscoredLabelScore. Macro averages over labels
// with at least one positive and one negative instance; micro pools all
// (doc, label) instances.
AucResult auc_scores(const std::vector<std::set<LabelId>>& gold,
                     const std::vector<std::map<LabelId, double>>& scores,
                     const std::vector<LabelId>& labels);

PrecisionAtK precision_at_k(const std::vector<std::set<LabelId>>& gold,
                            const std::vector<RankedList>& ranked, int k);

// Training-frequency bucket per the four-way grouping
// [0,10), [10,50), [50,500), [500,inf).
int frequency_bucket(std::int64_t train_frequency);
extern const char* const kFrequencyBucketNames[4];

}  // namespace coderank
