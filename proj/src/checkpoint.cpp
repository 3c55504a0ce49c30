#include "coderank/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {

constexpr int kCheckpointFormatVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
  }
  return nlohmann::json(rows);
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw Error(ErrorKind::MalformedRecord, what + ": empty matrix");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw Error(ErrorKind::MalformedRecord, what + ": ragged matrix row");
    }
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      m(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  std::vector<double> values(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) values[static_cast<std::size_t>(i)] = v(i);
  return nlohmann::json(values);
}

Vector vector_from_json(const nlohmann::json& j) {
  auto values = j.get<std::vector<double>>();
  Vector v(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     const std::string& fingerprint) {
  nlohmann::json root;
  root["format_version"] = kCheckpointFormatVersion;
  root["fingerprint"] = fingerprint;
  root["seed"] = ckpt.seed;
  root["hidden"] = ckpt.hidden;
  root["n_layers"] = ckpt.n_layers;
  root["n_heads"] = ckpt.n_heads;
  root["labels"] = ckpt.labels;
  root["best_epoch"] = ckpt.best_epoch;
  root["best_valid_micro_f1"] = ckpt.best_valid_micro_f1;

  nlohmann::json enc;
  enc["vocab"] = ckpt.encoder.vocab;
  enc["embeddings"] = matrix_to_json(ckpt.encoder.embeddings);
  enc["projection"] = matrix_to_json(ckpt.encoder.projection);
  enc["projection_bias"] = vector_to_json(ckpt.encoder.projection_bias);
  root["encoder"] = std::move(enc);

  nlohmann::json gra;
  gra["spatial_bias"] = matrix_to_json(ckpt.graphormer.spatial_bias);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : ckpt.graphormer.layers) {
    nlohmann::json lj;
    lj["wq"] = matrix_to_json(layer.wq);
    lj["wk"] = matrix_to_json(layer.wk);
    lj["wv"] = matrix_to_json(layer.wv);
    lj["wo"] = matrix_to_json(layer.wo);
    layers.push_back(std::move(lj));
  }
  gra["layers"] = std::move(layers);
  root["graphormer"] = std::move(gra);

  nlohmann::json pol;
  pol["kind"] = ckpt.policy.kind;
  pol["k"] = ckpt.policy.k;
  pol["threshold"] = ckpt.policy.threshold;
  root["policy"] = std::move(pol);

  const std::string tmp_path = path + ".tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp_path);
    out << root.dump(2) << "\n";
    if (!out) throw Error(ErrorKind::IoError, "failed while writing " + tmp_path);
  }
  if (std::rename(tmp_path.c_str(), path.c_str()) != 0) {
    throw Error(ErrorKind::IoError, "cannot rename " + tmp_path + " to " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingIndex, "cannot open " + path);
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorKind::MalformedRecord, path + ": not a JSON object");
  }
  if (root.value("format_version", -1) != kCheckpointFormatVersion) {
    throw Error(ErrorKind::MalformedRecord, path + ": unsupported format version");
  }
  if (root.value("fingerprint", "") != expected_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                path + ": checkpoint was trained under a different configuration");
  }

  Checkpoint ckpt;
  ckpt.seed = root.at("seed").get<std::uint64_t>();
  ckpt.hidden = root.at("hidden").get<Index>();
  ckpt.n_layers = root.at("n_layers").get<int>();
  ckpt.n_heads = root.at("n_heads").get<int>();
  ckpt.labels = root.at("labels").get<std::vector<LabelId>>();
  ckpt.best_epoch = root.at("best_epoch").get<int>();
  ckpt.best_valid_micro_f1 = root.at("best_valid_micro_f1").get<double>();

  const auto& enc = root.at("encoder");
  ckpt.encoder.vocab = enc.at("vocab").get<std::vector<std::string>>();
  ckpt.encoder.embeddings = matrix_from_json(enc.at("embeddings"), path + ": embeddings");
  ckpt.encoder.projection = matrix_from_json(enc.at("projection"), path + ": projection");
  ckpt.encoder.projection_bias = vector_from_json(enc.at("projection_bias"));
  ckpt.encoder.hidden = ckpt.hidden;
  for (Index i = 0; i < static_cast<Index>(ckpt.encoder.vocab.size()); ++i) {
    ckpt.encoder.vocab_index.emplace(ckpt.encoder.vocab[static_cast<std::size_t>(i)], i);
  }
  if (ckpt.encoder.embeddings.rows() != static_cast<Index>(ckpt.encoder.vocab.size()) ||
      ckpt.encoder.embeddings.cols() != ckpt.hidden) {
    throw Error(ErrorKind::MalformedRecord, path + ": embedding table shape mismatch");
  }

  const auto& gra = root.at("graphormer");
  ckpt.graphormer.n_layers = ckpt.n_layers;
  ckpt.graphormer.n_heads = ckpt.n_heads;
  ckpt.graphormer.hidden = ckpt.hidden;
  ckpt.graphormer.spatial_bias = matrix_from_json(gra.at("spatial_bias"), path + ": spatial_bias");
  for (const auto& lj : gra.at("layers")) {
    GraphormerLayerParams layer;
    layer.wq = matrix_from_json(lj.at("wq"), path + ": wq");
    layer.wk = matrix_from_json(lj.at("wk"), path + ": wk");
    layer.wv = matrix_from_json(lj.at("wv"), path + ": wv");
    layer.wo = matrix_from_json(lj.at("wo"), path + ": wo");
    ckpt.graphormer.layers.push_back(std::move(layer));
  }
  if (static_cast<int>(ckpt.graphormer.layers.size()) != ckpt.n_layers) {
    throw Error(ErrorKind::MalformedRecord, path + ": layer count mismatch");
  }

  const auto& pol = root.at("policy");
  ckpt.policy.kind = pol.at("kind").get<std::string>();
  ckpt.policy.k = pol.at("k").get<int>();
  ckpt.policy.threshold = pol.at("threshold").get<Scalar>();
  return ckpt;
}

}  // namespace coderank
