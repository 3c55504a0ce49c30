#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coderank/graphormer.hpp"
#include "coderank/text_encoder.hpp"
#include "coderank/types.hpp"

namespace coderank {

// How a ranked list becomes a prediction set.
struct DecisionPolicy {
  std::string kind = "threshold";  // "threshold" or "top_k"
  int k = 8;
  Scalar threshold = 0.0;
};

// Unified model state: everything needed to rank documents again.
struct Checkpoint {
  std::uint64_t seed = 0;
  Index hidden = 0;
  int n_layers = 0;
  int n_heads = 0;
  EncoderParams encoder;
  GraphormerParams graphormer;
  std::vector<LabelId> labels;  // node order of the label graph
  DecisionPolicy policy;
  int best_epoch = -1;
  double best_valid_micro_f1 = 0.0;
};

// Written atomically: serialized to a temp file in the same directory, then
// renamed over the target.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     const std::string& fingerprint);
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_fingerprint);

}  // namespace coderank
