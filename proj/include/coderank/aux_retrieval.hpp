#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coderank/corpus.hpp"

namespace coderank {

// Aux codes from the three knowledge kinds share one index; keys are
// kind-qualified so the namespaces stay disjoint.
inline std::string qualify_code(const char* kind, const std::string& code) {
  return std::string(kind) + ":" + code;
}

// Counts linking auxiliary codes to labels, computed on the training split.
// One document contributes at most 1 to any count. Conditional probabilities
// are derived, never stored, so thresholds can be re-applied without rebuild.
struct CooccurrenceIndex {
  std::map<std::string, std::int64_t> marginal_counts;              // C_k
  std::map<std::string, std::map<LabelId, std::int64_t>> pair_counts;  // C_{y and k}

  double cond_prob(const std::string& code, const LabelId& label) const;
};

enum class Stage { auxiliary, bm25 };

struct CandidateSet {
  std::string doc_id;
  std::set<LabelId> labels;
  Stage stage = Stage::auxiliary;
  bool fallback = false;  // set when the empty-candidate fallback kicked in
};

struct CoverageStats {
  double recall = 0.0;           // fraction of gold labels inside candidate sets
  double mean_candidates = 0.0;  // mean candidate-set size
  std::size_t documents = 0;
  std::size_t gold_total = 0;
  std::size_t gold_covered = 0;
};

CooccurrenceIndex build_aux_index(const std::vector<const Document*>& train_docs);

// Labels whose conditional probability given the code strictly exceeds eta.
std::set<LabelId> selected_labels_for_code(const CooccurrenceIndex& index,
                                           const std::string& qualified_code,
                                           double eta);

// Union of the selected label sets over every aux code of all three kinds.
CandidateSet retrieve_candidates_aux(const Document& doc,
                                     const CooccurrenceIndex& index, double eta);

CoverageStats coverage_report(const std::vector<CandidateSet>& candidates,
                              const std::vector<const Document*>& docs);

void save_aux_index(const CooccurrenceIndex& index, const std::string& path,
                    const std::string& fingerprint);
CooccurrenceIndex load_aux_index(const std::string& path,
                                 const std::string& expected_fingerprint);

}  // namespace coderank
