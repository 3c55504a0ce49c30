#include "coderank/graphormer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coderank/error.hpp"
#include "coderank/rng.hpp"

namespace coderank {

namespace {

// Plain ascending-index product. Compiled without -ffast-math the reduction
// order is fixed, so a row's result depends only on its contents — the
// property the permutation-equivariance guarantee rests on.
Matrix row_stable_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      Scalar sum = 0.0;
      for (Index c = 0; c < a.cols(); ++c) sum += a(i, c) * b(c, j);
      out(i, j) = sum;
    }
  }
  return out;
}

// Layer norm without affine parameters, computed row-locally.
Matrix layer_norm_rows(const Matrix& x, Vector& inv_std) {
  const Index n = x.rows();
  const Index h = x.cols();
  Matrix out(n, h);
  inv_std.resize(n);
  for (Index i = 0; i < n; ++i) {
    Scalar mean = 0.0;
    for (Index c = 0; c < h; ++c) mean += x(i, c);
    mean /= static_cast<Scalar>(h);
    Scalar var = 0.0;
    for (Index c = 0; c < h; ++c) {
      const Scalar centered = x(i, c) - mean;
      var += centered * centered;
    }
    var /= static_cast<Scalar>(h);
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (Index c = 0; c < h; ++c) out(i, c) = (x(i, c) - mean) * inv_std(i);
  }
  return out;
}

// Summation order for one attention row: ascending score, ties broken by the
// value-row contents. Addends that still tie are bitwise identical, so the
// resulting sums do not depend on how the nodes were numbered.
std::vector<Index> canonical_order(const Matrix& scores, Index row, const Matrix& values,
                                   Index value_col0, Index value_cols) {
  std::vector<Index> order(static_cast<std::size_t>(scores.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (scores(row, a) != scores(row, b)) return scores(row, a) < scores(row, b);
    for (Index c = 0; c < value_cols; ++c) {
      const Scalar va = values(a, value_col0 + c);
      const Scalar vb = values(b, value_col0 + c);
      if (va != vb) return va < vb;
    }
    return a < b;
  });
  return order;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, std::string(what) + " contains non-finite values");
  }
}

// Gradient of layer norm without affine, per row: given g = dL/dy and
// y = (x - mu) * inv_std, dL/dx = inv_std * (g - mean(g) - y * mean(g .* y)).
Matrix layer_norm_backward(const Matrix& grad, const Matrix& normed, const Vector& inv_std) {
  const Index n = grad.rows();
  const Index h = grad.cols();
  Matrix out(n, h);
  for (Index i = 0; i < n; ++i) {
    const Scalar g_mean = grad.row(i).mean();
    const Scalar gy_mean = (grad.row(i).array() * normed.row(i).array()).mean();
    out.row(i) = inv_std(i) * (grad.row(i).array() - g_mean - normed.row(i).array() * gy_mean);
  }
  return out;
}

}  // namespace

GraphormerParams init_graphormer_params(std::uint64_t seed, int n_layers, int n_heads,
                                        Index hidden) {
  if (n_layers < 1 || n_heads < 1 || hidden <= 0) {
    throw Error(ErrorKind::ConfigError, "graphormer sizes must be positive");
  }
  if (hidden % n_heads != 0) {
    throw Error(ErrorKind::ConfigError, "hidden size must be divisible by the head count");
  }
  GraphormerParams params;
  params.n_layers = n_layers;
  params.n_heads = n_heads;
  params.hidden = hidden;

  const double bound = std::sqrt(3.0) / std::sqrt(static_cast<double>(hidden));
  Rng rng(derive_seed(seed, "graphormer_init"));
  auto draw = [&](Matrix& m) {
    m.resize(hidden, hidden);
    for (Index r = 0; r < hidden; ++r) {
      for (Index c = 0; c < hidden; ++c) m(r, c) = rng.uniform(-bound, bound);
    }
  };
  params.layers.resize(static_cast<std::size_t>(n_layers));
  for (auto& layer : params.layers) {
    draw(layer.wq);
    draw(layer.wk);
    draw(layer.wv);
    // Zero output projection makes each residual layer an identity map at
    // initialization, so untrained rankings match the plain encoder and the
    // attention path only grows as training finds use for it.
    layer.wo = Matrix::Zero(hidden, hidden);
  }
  params.spatial_bias = Matrix::Zero(kNumSpatialBuckets, n_heads);
  return params;
}

Matrix graphormer_forward(const Matrix& features, const LabelGraph& graph,
                          const GraphormerParams& params, GraphormerCache* cache) {
  const Index n = features.rows();
  if (features.cols() != params.hidden) {
    throw Error(ErrorKind::ShapeMismatch, "node feature width does not match hidden size");
  }
  if (n != graph.n) {
    throw Error(ErrorKind::ShapeMismatch, "node count does not match the label graph");
  }
  if (static_cast<int>(params.layers.size()) != params.n_layers) {
    throw Error(ErrorKind::ShapeMismatch, "layer parameter count does not match n_layers");
  }
  check_finite(features, "node features");

  Eigen::MatrixXi buckets(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      buckets(i, j) = static_cast<int>(spatial_bucket(graph, i, j));
    }
  }

  const Index d = params.head_dim();
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(d));
  if (cache != nullptr) {
    cache->buckets = buckets;
    cache->layers.assign(params.layers.size(), GraphormerLayerCache{});
    cache->valid = false;
  }

  Matrix h = features;
  for (int l = 0; l < params.n_layers; ++l) {
    const GraphormerLayerParams& w = params.layers[static_cast<std::size_t>(l)];
    Vector inv_std;
    Matrix normed = layer_norm_rows(h, inv_std);
    Matrix q = row_stable_product(normed, w.wq);
    Matrix k = row_stable_product(normed, w.wk);
    Matrix v = row_stable_product(normed, w.wv);

    Matrix heads(n, params.hidden);
    std::vector<Matrix> probs(static_cast<std::size_t>(params.n_heads));
    for (int head = 0; head < params.n_heads; ++head) {
      const Index col0 = static_cast<Index>(head) * d;
      Matrix scores(n, n);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          Scalar dot = 0.0;
          for (Index c = 0; c < d; ++c) dot += q(i, col0 + c) * k(j, col0 + c);
          scores(i, j) = dot * inv_sqrt_d + params.spatial_bias(buckets(i, j), head);
        }
      }
      check_finite(scores, "attention scores");

      Matrix& p = probs[static_cast<std::size_t>(head)];
      p.resize(n, n);
      for (Index i = 0; i < n; ++i) {
        const Scalar row_max = scores.row(i).maxCoeff();
        const std::vector<Index> order = canonical_order(scores, i, v, col0, d);
        Scalar denom = 0.0;
        for (Index j : order) denom += std::exp(scores(i, j) - row_max);
        for (Index j = 0; j < n; ++j) p(i, j) = std::exp(scores(i, j) - row_max) / denom;
        for (Index c = 0; c < d; ++c) {
          Scalar sum = 0.0;
          for (Index j : order) sum += p(i, j) * v(j, col0 + c);
          heads(i, col0 + c) = sum;
        }
      }
    }

    Matrix out = row_stable_product(heads, w.wo);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < params.hidden; ++c) out(i, c) += h(i, c);
    }
    check_finite(out, "layer output");

    if (cache != nullptr) {
      GraphormerLayerCache& lc = cache->layers[static_cast<std::size_t>(l)];
      lc.input = std::move(h);
      lc.normed = std::move(normed);
      lc.inv_std = std::move(inv_std);
      lc.q = std::move(q);
      lc.k = std::move(k);
      lc.v = std::move(v);
      lc.probs = std::move(probs);
      lc.heads = std::move(heads);
    }
    h = std::move(out);
  }

  if (cache != nullptr) {
    cache->output = h;
    cache->valid = true;
  }
  return h;
}

GraphormerGrads graphormer_backward(const GraphormerCache& cache, const GraphormerParams& params,
                                    const Matrix& upstream) {
  if (!cache.valid) {
    throw Error(ErrorKind::NoForwardState, "graphormer_backward without a cached forward pass");
  }
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "upstream gradient shape does not match the output");
  }

  const Index d = params.head_dim();
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(d));
  GraphormerGrads grads = zero_graphormer_grads(params);

  Matrix g = upstream;
  for (int l = params.n_layers - 1; l >= 0; --l) {
    const GraphormerLayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    const GraphormerLayerParams& w = params.layers[static_cast<std::size_t>(l)];
    GraphormerLayerParams& gw = grads.layers[static_cast<std::size_t>(l)];
    const Index n = lc.input.rows();

    // out = heads * wo + input
    gw.wo += lc.heads.transpose() * g;
    Matrix g_heads = g * w.wo.transpose();

    Matrix g_q = Matrix::Zero(n, params.hidden);
    Matrix g_k = Matrix::Zero(n, params.hidden);
    Matrix g_v = Matrix::Zero(n, params.hidden);
    for (int head = 0; head < params.n_heads; ++head) {
      const Index col0 = static_cast<Index>(head) * d;
      const Matrix& p = lc.probs[static_cast<std::size_t>(head)];
      const auto gh = g_heads.middleCols(col0, d);
      const auto vh = lc.v.middleCols(col0, d);

      // head output = P * V
      Matrix g_p = gh * vh.transpose();
      g_v.middleCols(col0, d) = p.transpose() * gh;

      // Softmax rows: gS = P .* (gP - sum(gP .* P)); the structural bias
      // enters the scores additively, so its gradient is gS pooled by bucket.
      Matrix g_s(n, n);
      for (Index i = 0; i < n; ++i) {
        const Scalar dot = (g_p.row(i).array() * p.row(i).array()).sum();
        g_s.row(i) = p.row(i).array() * (g_p.row(i).array() - dot);
      }
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) grads.spatial_bias(cache.buckets(i, j), head) += g_s(i, j);
      }

      // S = Q K^T / sqrt(d) + bias
      g_q.middleCols(col0, d) = g_s * lc.k.middleCols(col0, d) * inv_sqrt_d;
      g_k.middleCols(col0, d) = g_s.transpose() * lc.q.middleCols(col0, d) * inv_sqrt_d;
    }

    gw.wq += lc.normed.transpose() * g_q;
    gw.wk += lc.normed.transpose() * g_k;
    gw.wv += lc.normed.transpose() * g_v;
    Matrix g_normed = g_q * w.wq.transpose() + g_k * w.wk.transpose() + g_v * w.wv.transpose();

    // out = ... + input (residual) and normed = LN(input)
    g += layer_norm_backward(g_normed, lc.normed, lc.inv_std);
  }
  grads.features = g;
  return grads;
}

GraphormerGrads zero_graphormer_grads(const GraphormerParams& params) {
  GraphormerGrads grads;
  grads.layers.resize(params.layers.size());
  for (auto& layer : grads.layers) {
    layer.wq = Matrix::Zero(params.hidden, params.hidden);
    layer.wk = Matrix::Zero(params.hidden, params.hidden);
    layer.wv = Matrix::Zero(params.hidden, params.hidden);
    layer.wo = Matrix::Zero(params.hidden, params.hidden);
  }
  grads.spatial_bias = Matrix::Zero(kNumSpatialBuckets, params.n_heads);
  grads.features.resize(0, 0);
  return grads;
}

}  // namespace coderank
