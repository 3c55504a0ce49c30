#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coderank/corpus.hpp"
#include "coderank/text_encoder.hpp"
#include "coderank/types.hpp"

namespace coderank {

using ByteMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Directed co-occurrence graph over the label vocabulary. cond_prob(i,j)
// estimates P(y_j | y_i) on the training split; edges binarize it at lambda.
struct LabelGraph {
  Index n = 0;
  std::vector<LabelId> labels;   // node order
  ByteMatrix edges;              // E(i,j) = 1 iff cond_prob(i,j) >= lambda
  Matrix cond_prob;              // zero rows for labels unseen in training
  double lambda = 1.0;
};

enum class SpatialBucket : int { self_node = 0, edge = 1, no_edge = 2 };
inline constexpr int kNumSpatialBuckets = 3;

LabelGraph build_label_graph(const std::vector<const Document*>& train_docs,
                             const std::vector<LabelDescriptor>& labels,
                             double lambda);

SpatialBucket spatial_bucket(const LabelGraph& graph, Index i, Index j);

// Initial node features: one pooled descriptor encoding per label, stacked
// row-wise.
Matrix init_node_features(const std::vector<LabelDescriptor>& labels,
                          const EncoderParams& params,
                          std::vector<EncodeCache>* caches = nullptr);

void save_label_graph(const LabelGraph& graph, const std::string& path,
                      const std::string& fingerprint);
LabelGraph load_label_graph(const std::string& path, const std::string& expected_fingerprint);

}  // namespace coderank
