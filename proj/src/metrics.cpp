#include "coderank/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "coderank/error.hpp"

namespace coderank {

namespace {

double safe_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  const std::int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

F1Result f1_scores(const std::vector<std::set<LabelId>>& gold,
                   const std::vector<std::set<LabelId>>& pred,
                   const std::vector<LabelId>& labels) {
  if (gold.size() != pred.size()) {
    throw Error(ErrorKind::MismatchedIds, "gold and prediction lists differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyLabelSet, "f1_scores needs a label vocabulary");

  F1Result result;
  for (const auto& label : labels) result.per_label.emplace(label, ConfusionCounts{});
  for (std::size_t d = 0; d < gold.size(); ++d) {
    for (const auto& label : gold[d]) {
      auto it = result.per_label.find(label);
      if (it == result.per_label.end()) {
        throw Error(ErrorKind::UnknownLabel, "gold label outside the vocabulary: " + label);
      }
      if (pred[d].count(label) > 0) {
        it->second.tp += 1;
      } else {
        it->second.fn += 1;
      }
    }
    for (const auto& label : pred[d]) {
      auto it = result.per_label.find(label);
      if (it == result.per_label.end()) {
        throw Error(ErrorKind::UnknownLabel, "predicted label outside the vocabulary: " + label);
      }
      if (gold[d].count(label) == 0) it->second.fp += 1;
    }
  }

  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double f1_sum = 0.0;
  for (const auto& [label, counts] : result.per_label) {
    tp += counts.tp;
    fp += counts.fp;
    fn += counts.fn;
    f1_sum += safe_f1(counts.tp, counts.fp, counts.fn);
  }
  result.micro_f1 = safe_f1(tp, fp, fn);
  result.macro_f1 = f1_sum / static_cast<double>(result.per_label.size());
  return result;
}

double mann_whitney_auc(const std::vector<std::pair<double, bool>>& instances) {
  std::int64_t positives = 0;
  for (const auto& [score, is_pos] : instances) {
    if (is_pos) ++positives;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(instances.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::NoValidLabels, "AUC needs at least one positive and one negative");
  }

  std::vector<std::pair<double, bool>> sorted = instances;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  // Midranks: every member of a tie group receives the mean of the 1-based
  // ranks the group spans.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) {
      if (sorted[t].second) positive_rank_sum += midrank;
    }
    i = j;
  }

  const double u = positive_rank_sum -
                   static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

AucResult auc_scores(const std::vector<std::set<LabelId>>& gold,
                     const std::vector<std::map<LabelId, double>>& scores,
                     const std::vector<LabelId>& labels) {
  if (gold.size() != scores.size()) {
    throw Error(ErrorKind::MismatchedIds, "gold and score lists differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyLabelSet, "auc_scores needs a label vocabulary");

  AucResult result;
  double auc_sum = 0.0;
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(gold.size() * labels.size());
  std::vector<std::pair<double, bool>> per_label;
  per_label.reserve(gold.size());
  for (const auto& label : labels) {
    per_label.clear();
    for (std::size_t d = 0; d < gold.size(); ++d) {
      auto it = scores[d].find(label);
      const double score = it == scores[d].end() ? kUnscoredLabelScore : it->second;
      const bool is_pos = gold[d].count(label) > 0;
      per_label.emplace_back(score, is_pos);
      pooled.emplace_back(score, is_pos);
    }
    std::int64_t positives = 0;
    for (const auto& [score, is_pos] : per_label) {
      if (is_pos) ++positives;
    }
    if (positives == 0 || positives == static_cast<std::int64_t>(per_label.size())) continue;
    auc_sum += mann_whitney_auc(per_label);
    result.macro_labels += 1;
  }
  if (result.macro_labels == 0) {
    throw Error(ErrorKind::NoValidLabels, "no label has both positive and negative instances");
  }
  result.macro_auc = auc_sum / static_cast<double>(result.macro_labels);
  result.micro_auc = mann_whitney_auc(pooled);
  return result;
}

PrecisionAtK precision_at_k(const std::vector<std::set<LabelId>>& gold,
                            const std::vector<RankedList>& ranked, int k) {
  if (k < 1) throw Error(ErrorKind::ConfigError, "precision_at_k requires k >= 1");
  if (gold.size() != ranked.size()) {
    throw Error(ErrorKind::MismatchedIds, "gold and ranking lists differ in length");
  }
  if (gold.empty()) return PrecisionAtK{};

  PrecisionAtK result;
  double sum = 0.0;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    const auto& entries = ranked[d].entries;
    const std::size_t prefix = std::min<std::size_t>(static_cast<std::size_t>(k), entries.size());
    if (prefix < static_cast<std::size_t>(k)) result.short_lists += 1;
    if (prefix == 0) continue;  // empty ranking contributes 0
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < prefix; ++i) {
      if (gold[d].count(entries[i].label) > 0) ++hits;
    }
    // Documents ranked with fewer than k entries use the prefix length as the
    // denominator so retrieval truncation is not penalized twice.
    sum += static_cast<double>(hits) / static_cast<double>(prefix);
  }
  result.value = sum / static_cast<double>(gold.size());
  return result;
}

const char* const kFrequencyBucketNames[4] = {"[0,10)", "[10,50)", "[50,500)", "[500,inf)"};

int frequency_bucket(std::int64_t train_frequency) {
  if (train_frequency < 0) throw Error(ErrorKind::ConfigError, "label frequency cannot be negative");
  if (train_frequency < 10) return 0;
  if (train_frequency < 50) return 1;
  if (train_frequency < 500) return 2;
  return 3;
}

}  // namespace coderank
