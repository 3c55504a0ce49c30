#pragma once

#include <cstdint>
#include <string>

#include "coderank/bm25.hpp"
#include "coderank/checkpoint.hpp"
#include "coderank/reranker.hpp"

namespace coderank {

inline constexpr char kArtifactsDirEnvVar[] = "CODERANK_ARTIFACTS_DIR";

// One configuration file drives every subcommand; CLI flags override fields
// after loading. The decision policy kind "checkpoint" defers to the policy
// calibrated at training time.
struct PipelineConfig {
  std::string corpus_dir = "data";
  std::string artifacts_dir = "artifacts";

  double eta = 0.005;
  Bm25Params bm25;     // k1 = 1.2, b = 0.75, theta = 200
  double lambda = 1.0;

  TrainConfig train;   // hidden / layers / heads ride along with training dims
  DecisionPolicy policy{"checkpoint", 8, 0.0};

  std::uint64_t seed = 1;

  bool fallback_full_vocab = true;  // empty retrieval stages pass the full vocabulary
  bool use_aux = true;              // off: the auxiliary stage admits every label
  bool use_graphormer = true;       // off: rank against raw descriptor encodings

  std::string documents_path() const { return corpus_dir + "/documents.jsonl"; }
  std::string labels_path() const { return corpus_dir + "/labels.jsonl"; }
  std::string splits_path() const { return corpus_dir + "/splits.json"; }
  std::string aux_index_path() const { return artifacts_dir + "/aux_index.json"; }
  std::string bm25_index_path() const { return artifacts_dir + "/bm25_index.json"; }
  std::string label_graph_path() const { return artifacts_dir + "/label_graph.json"; }
  std::string checkpoint_path() const { return artifacts_dir + "/checkpoint.json"; }
  std::string training_log_path() const { return artifacts_dir + "/training_log.json"; }
  std::string candidates_path() const { return artifacts_dir + "/candidates.jsonl"; }
  std::string predictions_path() const { return artifacts_dir + "/predictions.jsonl"; }
  std::string report_path() const { return artifacts_dir + "/report.json"; }
};

PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& config, const std::string& path);
void validate_config(const PipelineConfig& config);

// Applies the artifact-directory environment override, if set.
void apply_env_overrides(PipelineConfig& config);

// Stable hash over the fields the persisted artifacts actually depend on:
// the corpus and lambda. Everything else applies at query time (eta, theta,
// k1, b, policy) or is carried inside the checkpoint itself. Artifacts
// refuse to load under a different value.
std::string retrieval_fingerprint(const PipelineConfig& config);

}  // namespace coderank
