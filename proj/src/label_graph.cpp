#include "coderank/label_graph.hpp"

#include <fstream>
#include <map>
#include <unordered_map>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {

constexpr int kLabelGraphFormatVersion = 1;

}  // namespace

LabelGraph build_label_graph(const std::vector<const Document*>& train_docs,
                             const std::vector<LabelDescriptor>& labels,
                             double lambda) {
  if (train_docs.empty()) {
    throw Error(ErrorKind::EmptyTrainingSet, "label graph needs at least one training document");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyLabelSet, "label graph needs a label vocabulary");
  if (!(lambda > 0.0)) throw Error(ErrorKind::ConfigError, "lambda must be positive");

  LabelGraph graph;
  graph.n = static_cast<Index>(labels.size());
  graph.labels.reserve(labels.size());
  for (const auto& label : labels) graph.labels.push_back(label.id);
  graph.lambda = lambda;

  std::unordered_map<LabelId, Index> position;
  for (Index i = 0; i < graph.n; ++i) position.emplace(graph.labels[i], i);

  // Count single and joint occurrences over training documents; gold sets are
  // already deduplicated (std::set), so each document contributes at most one
  // count per label and per ordered pair.
  Eigen::VectorXi single = Eigen::VectorXi::Zero(graph.n);
  Eigen::MatrixXi joint = Eigen::MatrixXi::Zero(graph.n, graph.n);
  for (const Document* doc : train_docs) {
    std::vector<Index> present;
    present.reserve(doc->gold_labels.size());
    for (const auto& label : doc->gold_labels) {
      auto it = position.find(label);
      if (it == position.end()) throw Error(ErrorKind::UnknownLabel, doc->id + ": " + label);
      present.push_back(it->second);
    }
    for (Index i : present) {
      single(i) += 1;
      for (Index j : present) joint(i, j) += 1;
    }
  }

  graph.cond_prob = Matrix::Zero(graph.n, graph.n);
  graph.edges = ByteMatrix::Zero(graph.n, graph.n);
  for (Index i = 0; i < graph.n; ++i) {
    if (single(i) == 0) continue;  // unseen label: zero row, no outgoing edges
    for (Index j = 0; j < graph.n; ++j) {
      graph.cond_prob(i, j) = static_cast<Scalar>(joint(i, j)) / static_cast<Scalar>(single(i));
      if (graph.cond_prob(i, j) >= lambda) graph.edges(i, j) = 1;
    }
  }
  return graph;
}

SpatialBucket spatial_bucket(const LabelGraph& graph, Index i, Index j) {
  if (i < 0 || j < 0 || i >= graph.n || j >= graph.n) {
    throw Error(ErrorKind::IndexOutOfRange, "spatial_bucket: node index out of range");
  }
  if (i == j) return SpatialBucket::self_node;
  return graph.edges(i, j) != 0 ? SpatialBucket::edge : SpatialBucket::no_edge;
}

Matrix init_node_features(const std::vector<LabelDescriptor>& labels,
                          const EncoderParams& params,
                          std::vector<EncodeCache>* caches) {
  if (labels.empty()) throw Error(ErrorKind::EmptyLabelSet, "no labels to encode");
  Matrix features(static_cast<Index>(labels.size()), params.hidden);
  if (caches != nullptr) caches->assign(labels.size(), EncodeCache{});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EncodeCache* cache = caches != nullptr ? &(*caches)[i] : nullptr;
    PooledVector pooled = encode(labels[i].descriptor_tokens, params, cache);
    features.row(static_cast<Index>(i)) = pooled.values.transpose();
  }
  return features;
}

void save_label_graph(const LabelGraph& graph, const std::string& path,
                      const std::string& fingerprint) {
  nlohmann::json root;
  root["format_version"] = kLabelGraphFormatVersion;
  root["fingerprint"] = fingerprint;
  root["lambda"] = graph.lambda;
  root["labels"] = graph.labels;
  std::vector<std::vector<int>> edges(static_cast<std::size_t>(graph.n));
  std::vector<std::vector<double>> cond(static_cast<std::size_t>(graph.n));
  for (Index i = 0; i < graph.n; ++i) {
    auto& edge_row = edges[static_cast<std::size_t>(i)];
    auto& cond_row = cond[static_cast<std::size_t>(i)];
    edge_row.resize(static_cast<std::size_t>(graph.n));
    cond_row.resize(static_cast<std::size_t>(graph.n));
    for (Index j = 0; j < graph.n; ++j) {
      edge_row[static_cast<std::size_t>(j)] = graph.edges(i, j);
      cond_row[static_cast<std::size_t>(j)] = graph.cond_prob(i, j);
    }
  }
  root["edges"] = edges;
  root["cond_prob"] = cond;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << root.dump(2) << "\n";
}

LabelGraph load_label_graph(const std::string& path, const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingIndex, "cannot open " + path);
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorKind::MalformedRecord, path + ": not a JSON object");
  }
  if (root.value("format_version", -1) != kLabelGraphFormatVersion) {
    throw Error(ErrorKind::MalformedRecord, path + ": unsupported format version");
  }
  if (root.value("fingerprint", "") != expected_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                path + ": artifact was built under a different configuration");
  }
  LabelGraph graph;
  graph.lambda = root.at("lambda").get<double>();
  graph.labels = root.at("labels").get<std::vector<LabelId>>();
  graph.n = static_cast<Index>(graph.labels.size());
  auto edges = root.at("edges").get<std::vector<std::vector<int>>>();
  auto cond = root.at("cond_prob").get<std::vector<std::vector<double>>>();
  if (edges.size() != graph.labels.size() || cond.size() != graph.labels.size()) {
    throw Error(ErrorKind::MalformedRecord, path + ": matrix shape does not match label count");
  }
  graph.edges = ByteMatrix::Zero(graph.n, graph.n);
  graph.cond_prob = Matrix::Zero(graph.n, graph.n);
  for (Index i = 0; i < graph.n; ++i) {
    const auto& edge_row = edges[static_cast<std::size_t>(i)];
    const auto& cond_row = cond[static_cast<std::size_t>(i)];
    if (edge_row.size() != graph.labels.size() || cond_row.size() != graph.labels.size()) {
      throw Error(ErrorKind::MalformedRecord, path + ": ragged matrix row");
    }
    for (Index j = 0; j < graph.n; ++j) {
      graph.edges(i, j) = static_cast<std::uint8_t>(edge_row[static_cast<std::size_t>(j)] != 0);
      graph.cond_prob(i, j) = cond_row[static_cast<std::size_t>(j)];
    }
  }
  return graph;
}

}  // namespace coderank
