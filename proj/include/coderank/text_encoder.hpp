#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "coderank/types.hpp"

namespace coderank {

inline constexpr char kUnkToken[] = "<unk>";
inline constexpr std::size_t kMaxEncodeTokens = 4000;

// Mean-pooled bag-of-embeddings encoder with a tanh projection head:
//   v = tanh(W * mean_i E[row(t_i)] + c)
// Out-of-vocabulary tokens share the dedicated UNK row.
struct EncoderParams {
  std::vector<std::string> vocab;  // row order of `embeddings`; row 0 is UNK
  std::unordered_map<std::string, Index> vocab_index;
  Matrix embeddings;        // |vocab| x hidden
  Matrix projection;        // hidden x hidden
  Vector projection_bias;   // hidden
  Index hidden = 0;

  Index row_for(const std::string& token) const {
    auto it = vocab_index.find(token);
    return it == vocab_index.end() ? 0 : it->second;
  }
};

struct PooledVector {
  Vector values;
  std::size_t source_len = 0;  // number of tokens pooled, at most kMaxEncodeTokens
};

// Forward state needed to backpropagate through one encode() call.
struct EncodeCache {
  std::vector<Index> rows;  // embedding row per pooled token (with multiplicity)
  Vector mean;              // pooled embedding
  Vector output;            // tanh activation
  bool valid = false;
};

struct EncoderGrads {
  Matrix embeddings;
  Matrix projection;
  Vector projection_bias;
};

EncoderParams init_encoder_params(std::uint64_t seed, const std::set<std::string>& vocab,
                                  Index hidden);

PooledVector encode(const std::vector<std::string>& tokens, const EncoderParams& params,
                    EncodeCache* cache = nullptr);

// Accumulates dL/d(params) into `grads` given dL/d(output). Only embedding
// rows touched by the cached forward pass are updated.
void encode_backward(const EncodeCache& cache, const EncoderParams& params,
                     const Vector& upstream, EncoderGrads& grads);

EncoderGrads zero_encoder_grads(const EncoderParams& params);

}  // namespace coderank
