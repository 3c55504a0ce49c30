#pragma once

#include <cstdint>
#include <vector>

#include "coderank/label_graph.hpp"
#include "coderank/types.hpp"

namespace coderank {

// One attention block: h' = MHA(LN(h)) + h. No feed-forward sublayer, no
// affine layer-norm parameters, no projection biases.
struct GraphormerLayerParams {
  Matrix wq, wk, wv, wo;  // hidden x hidden each
};

struct GraphormerParams {
  int n_layers = 2;
  int n_heads = 4;
  Index hidden = 64;
  std::vector<GraphormerLayerParams> layers;
  // Per-head structural attention bias, one row per spatial bucket
  // (self / edge / no-edge), shared by every layer.
  Matrix spatial_bias;  // kNumSpatialBuckets x n_heads

  Index head_dim() const { return hidden / n_heads; }
};

struct GraphormerLayerCache {
  Matrix input;               // h^l
  Matrix normed;              // LN(h^l)
  Vector inv_std;             // per-row 1/sqrt(var + eps)
  Matrix q, k, v;             // full width, heads side by side
  std::vector<Matrix> probs;  // per head: n x n attention rows
  Matrix heads;               // concatenated head outputs
};

struct GraphormerCache {
  Eigen::MatrixXi buckets;  // spatial bucket per node pair
  std::vector<GraphormerLayerCache> layers;
  Matrix output;
  bool valid = false;
};

struct GraphormerGrads {
  std::vector<GraphormerLayerParams> layers;
  Matrix spatial_bias;
  Matrix features;  // dL/d(input node features)
};

inline constexpr double kLayerNormEpsilon = 1e-5;

GraphormerParams init_graphormer_params(std::uint64_t seed, int n_layers, int n_heads,
                                        Index hidden);

// Runs the stack over one node-feature matrix (one row per label). Row
// results depend only on row contents and the bucket structure, never on row
// position: reordering nodes and their graph consistently permutes the output
// rows bit-for-bit.
Matrix graphormer_forward(const Matrix& features, const LabelGraph& graph,
                          const GraphormerParams& params, GraphormerCache* cache = nullptr);

GraphormerGrads graphormer_backward(const GraphormerCache& cache, const GraphormerParams& params,
                                    const Matrix& upstream);

GraphormerGrads zero_graphormer_grads(const GraphormerParams& params);

}  // namespace coderank
