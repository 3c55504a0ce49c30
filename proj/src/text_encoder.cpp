#include "coderank/text_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "coderank/error.hpp"
#include "coderank/rng.hpp"

namespace coderank {

EncoderParams init_encoder_params(std::uint64_t seed, const std::set<std::string>& vocab,
                                  Index hidden) {
  if (vocab.empty()) throw Error(ErrorKind::EmptyVocab, "encoder vocabulary is empty");
  if (hidden <= 0) throw Error(ErrorKind::ConfigError, "encoder hidden size must be positive");

  EncoderParams params;
  params.hidden = hidden;
  params.vocab.reserve(vocab.size() + 1);
  params.vocab.push_back(kUnkToken);
  for (const auto& token : vocab) {
    if (token != kUnkToken) params.vocab.push_back(token);
  }
  for (Index i = 0; i < static_cast<Index>(params.vocab.size()); ++i) {
    params.vocab_index.emplace(params.vocab[static_cast<std::size_t>(i)], i);
  }

  // Symmetric uniform init with standard deviation 1/sqrt(hidden).
  const double bound = std::sqrt(3.0) / std::sqrt(static_cast<double>(hidden));
  Rng rng(derive_seed(seed, "encoder_init"));
  params.embeddings.resize(static_cast<Index>(params.vocab.size()), hidden);
  for (Index r = 0; r < params.embeddings.rows(); ++r) {
    for (Index c = 0; c < hidden; ++c) params.embeddings(r, c) = rng.uniform(-bound, bound);
  }
  params.projection.resize(hidden, hidden);
  for (Index r = 0; r < hidden; ++r) {
    for (Index c = 0; c < hidden; ++c) params.projection(r, c) = rng.uniform(-bound, bound);
  }
  params.projection_bias = Vector::Zero(hidden);
  return params;
}

PooledVector encode(const std::vector<std::string>& tokens, const EncoderParams& params,
                    EncodeCache* cache) {
  if (tokens.empty()) throw Error(ErrorKind::EmptyInput, "cannot encode an empty token list");
  const std::size_t count = std::min(tokens.size(), kMaxEncodeTokens);

  Vector mean = Vector::Zero(params.hidden);
  std::vector<Index> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Index row = params.row_for(tokens[i]);
    rows.push_back(row);
    mean += params.embeddings.row(row).transpose();
  }
  mean /= static_cast<Scalar>(count);

  PooledVector pooled;
  pooled.values = (params.projection * mean + params.projection_bias).array().tanh();
  pooled.source_len = count;
  if (!pooled.values.allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, "encoder produced a non-finite vector");
  }
  if (cache != nullptr) {
    cache->rows = std::move(rows);
    cache->mean = mean;
    cache->output = pooled.values;
    cache->valid = true;
  }
  return pooled;
}

void encode_backward(const EncodeCache& cache, const EncoderParams& params,
                     const Vector& upstream, EncoderGrads& grads) {
  if (!cache.valid) throw Error(ErrorKind::NoForwardState, "encode_backward without a cached forward pass");
  if (upstream.size() != params.hidden) {
    throw Error(ErrorKind::ShapeMismatch, "upstream gradient size does not match hidden size");
  }
  // d tanh(u) = (1 - tanh(u)^2) du
  const Vector grad_pre = upstream.array() * (1.0 - cache.output.array().square());
  grads.projection_bias += grad_pre;
  grads.projection += grad_pre * cache.mean.transpose();
  const Vector grad_mean = params.projection.transpose() * grad_pre;
  const Scalar inv_count = 1.0 / static_cast<Scalar>(cache.rows.size());
  for (Index row : cache.rows) {
    grads.embeddings.row(row) += inv_count * grad_mean.transpose();
  }
}

EncoderGrads zero_encoder_grads(const EncoderParams& params) {
  EncoderGrads grads;
  grads.embeddings = Matrix::Zero(params.embeddings.rows(), params.embeddings.cols());
  grads.projection = Matrix::Zero(params.projection.rows(), params.projection.cols());
  grads.projection_bias = Vector::Zero(params.projection_bias.size());
  return grads;
}

}  // namespace coderank
