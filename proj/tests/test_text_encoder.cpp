#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "coderank/error.hpp"
#include "coderank/rng.hpp"
#include "coderank/text_encoder.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace coderank;

namespace {

// Two-token vocabulary with hand-set embeddings, identity projection, zero
// bias, so encode() reduces to tanh of the embedding average.
EncoderParams hand_params() {
  EncoderParams params;
  params.hidden = 2;
  params.vocab = {kUnkToken, "acute", "pain"};
  for (Index i = 0; i < 3; ++i) params.vocab_index.emplace(params.vocab[static_cast<std::size_t>(i)], i);
  params.embeddings.resize(3, 2);
  params.embeddings << 0.0, 0.0,   // <unk>
                       0.2, -0.4,  // acute
                       0.6,  0.8;  // pain
  params.projection = Matrix::Identity(2, 2);
  params.projection_bias = Vector::Zero(2);
  return params;
}

}  // namespace

TEST_CASE("a single token encodes to tanh of its projected embedding") {
  const EncoderParams params = hand_params();
  const PooledVector pooled = encode({"pain"}, params);
  CHECK(pooled.source_len == 1);
  CHECK(pooled.values(0) == doctest::Approx(std::tanh(0.6)).epsilon(1e-12));
  CHECK(pooled.values(1) == doctest::Approx(std::tanh(0.8)).epsilon(1e-12));
}

TEST_CASE("two tokens encode to tanh of the embedding average") {
  const EncoderParams params = hand_params();
  const PooledVector pooled = encode({"acute", "pain"}, params);
  CHECK(pooled.values(0) == doctest::Approx(std::tanh((0.2 + 0.6) / 2.0)).epsilon(1e-12));
  CHECK(pooled.values(1) == doctest::Approx(std::tanh((-0.4 + 0.8) / 2.0)).epsilon(1e-12));
}

TEST_CASE("mean pooling is order-invariant") {
  const EncoderParams params = init_encoder_params(5, {"a", "b", "c"}, 16);
  const PooledVector forward = encode({"a", "b", "c", "a"}, params);
  const PooledVector reversed = encode({"a", "c", "b", "a"}, params);
  CHECK((forward.values - reversed.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unknown tokens share the UNK row") {
  const EncoderParams params = init_encoder_params(5, {"a", "b"}, 8);
  CHECK(params.row_for("never-seen") == 0);
  const PooledVector unknown = encode({"never-seen"}, params);
  const PooledVector unk = encode({kUnkToken}, params);
  CHECK((unknown.values - unk.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoding an empty token list throws") {
  const EncoderParams params = hand_params();
  try {
    encode({}, params);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInput);
  }
}

TEST_CASE("encoding pools at most the token cap") {
  const EncoderParams params = init_encoder_params(5, {"a"}, 4);
  const std::vector<std::string> tokens(kMaxEncodeTokens + 100, "a");
  CHECK(encode(tokens, params).source_len == kMaxEncodeTokens);
}

TEST_CASE("initialization is deterministic and zero-centered") {
  const EncoderParams a = init_encoder_params(7, {"x", "y", "z"}, 32);
  const EncoderParams b = init_encoder_params(7, {"x", "y", "z"}, 32);
  CHECK((a.embeddings - b.embeddings).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.projection - b.projection).cwiseAbs().maxCoeff() == 0.0);

  const EncoderParams c = init_encoder_params(8, {"x", "y", "z"}, 32);
  CHECK((a.embeddings - c.embeddings).cwiseAbs().maxCoeff() > 0.0);

  // Empirical mean within 3 standard errors of zero: entries are uniform with
  // standard deviation 1/sqrt(hidden).
  std::set<std::string> vocab;
  for (int i = 0; i < 200; ++i) vocab.insert("tok" + std::to_string(i));
  const EncoderParams big = init_encoder_params(11, vocab, 64);
  const double entries = static_cast<double>(big.embeddings.size());
  const double standard_error = (1.0 / std::sqrt(64.0)) / std::sqrt(entries);
  CHECK(std::fabs(big.embeddings.mean()) <= 3.0 * standard_error);
}

TEST_CASE("output norm stays within the tanh bound") {
  const EncoderParams params = init_encoder_params(13, {"p", "q", "r"}, 16);
  const PooledVector pooled = encode({"p", "q", "r"}, params);
  CHECK(pooled.values.norm() <= std::sqrt(16.0));
  CHECK(pooled.values.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("backward gradients match central finite differences") {
  const EncoderParams frozen = init_encoder_params(17, {"a", "b", "c", "d"}, 6);
  const std::vector<std::string> tokens = {"a", "b", "b", "d"};

  // Scalar probe: L = u . encode(tokens)
  Rng rng(99);
  Vector u(6);
  for (Index i = 0; i < 6; ++i) u(i) = rng.uniform(-1.0, 1.0);

  EncodeCache cache;
  encode(tokens, frozen, &cache);
  EncoderGrads grads = zero_encoder_grads(frozen);
  encode_backward(cache, frozen, u, grads);

  EncoderParams probe = frozen;
  auto eval = [&]() { return u.dot(encode(tokens, probe).values); };
  const double step = 1e-4;

  for (Index r = 0; r < probe.embeddings.rows(); ++r) {
    for (Index c = 0; c < probe.embeddings.cols(); ++c) {
      const double numeric = oracle::central_difference(probe.embeddings(r, c), step, eval);
      CHECK(oracle::gradient_gap(grads.embeddings(r, c), numeric) < 1e-3);
    }
  }
  for (Index r = 0; r < 6; ++r) {
    for (Index c = 0; c < 6; ++c) {
      const double numeric = oracle::central_difference(probe.projection(r, c), step, eval);
      CHECK(oracle::gradient_gap(grads.projection(r, c), numeric) < 1e-3);
    }
    const double numeric = oracle::central_difference(probe.projection_bias(r), step, eval);
    CHECK(oracle::gradient_gap(grads.projection_bias(r), numeric) < 1e-3);
  }
}

TEST_CASE("tokens absent from the input get zero embedding gradient") {
  const EncoderParams params = init_encoder_params(17, {"a", "b", "c"}, 4);
  EncodeCache cache;
  encode({"a"}, params, &cache);
  EncoderGrads grads = zero_encoder_grads(params);
  encode_backward(cache, params, Vector::Ones(4), grads);

  const Index untouched = params.row_for("c");
  CHECK(grads.embeddings.row(untouched).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.embeddings.row(params.row_for("a")).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gradients are linear in the upstream gradient") {
  const EncoderParams params = init_encoder_params(19, {"a", "b"}, 4);
  EncodeCache cache;
  encode({"a", "b"}, params, &cache);

  Vector u(4);
  u << 0.3, -0.7, 0.1, 0.9;
  EncoderGrads once = zero_encoder_grads(params);
  encode_backward(cache, params, u, once);
  EncoderGrads twice = zero_encoder_grads(params);
  encode_backward(cache, params, (2.0 * u).eval(), twice);

  CHECK((twice.embeddings - 2.0 * once.embeddings).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((twice.projection - 2.0 * once.projection).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((twice.projection_bias - 2.0 * once.projection_bias).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward without a forward cache throws") {
  const EncoderParams params = hand_params();
  EncodeCache cache;  // never filled
  EncoderGrads grads = zero_encoder_grads(params);
  try {
    encode_backward(cache, params, Vector::Zero(2), grads);
    FAIL("expected NoForwardState");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoForwardState);
  }
}
