#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coderank/aux_retrieval.hpp"
#include "coderank/config.hpp"
#include "coderank/metrics.hpp"
#include "coderank/reranker.hpp"
#include "coderank/synthetic.hpp"

namespace coderank {

void cmd_gen_synthetic(const PipelineConfig& config, int n_docs, int n_labels,
                       const SyntheticSpec& spec, std::ostream& log);

// Builds the auxiliary co-occurrence index, the BM25 index, and the label
// graph, all in memory first, then persists them; a failure anywhere leaves
// no partial artifacts behind.
void cmd_build_index(const PipelineConfig& config, std::ostream& log);

struct RetrieveOutcome {
  CoverageStats aux;
  CoverageStats bm25;
  std::int64_t fallbacks = 0;
};

// Runs both retrieval stages over the chosen documents (explicit ids win over
// the split name) and writes candidates.jsonl with per-stage provenance.
RetrieveOutcome cmd_retrieve(const PipelineConfig& config, const std::string& split,
                             const std::vector<std::string>& doc_ids, std::ostream& log);

TrainResult cmd_train(const PipelineConfig& config, std::ostream& log);

void cmd_rerank(const PipelineConfig& config, const std::string& split, std::ostream& log);

struct BucketReport {
  std::string range;
  std::int64_t labels = 0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

struct EvalOutcome {
  EvalReport report;
  std::vector<BucketReport> buckets;
  CoverageStats coverage;  // final-stage candidate coverage on the split
};

EvalOutcome cmd_evaluate(const PipelineConfig& config, const std::string& split,
                         const std::vector<int>& ks, std::ostream& log);

}  // namespace coderank
