#include "coderank/bm25.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {
constexpr int kBm25IndexFormatVersion = 1;
}

Bm25Index build_bm25_index(const std::vector<LabelDescriptor>& labels) {
  if (labels.empty()) {
    throw Error(ErrorKind::EmptyLabelSet, "bm25 index needs at least one label");
  }
  Bm25Index index;
  index.n_labels = static_cast<std::int64_t>(labels.size());
  std::int64_t total_len = 0;
  for (const auto& label : labels) {
    if (label.descriptor_tokens.empty()) {
      throw Error(ErrorKind::EmptyDescriptor, "label '" + label.id + "' has an empty descriptor");
    }
    index.descriptor_len[label.id] =
        static_cast<std::int64_t>(label.descriptor_tokens.size());
    total_len += static_cast<std::int64_t>(label.descriptor_tokens.size());
    auto& tf = index.term_freq[label.id];
    for (const auto& token : label.descriptor_tokens) tf[token] += 1;
    for (const auto& [token, count] : tf) {
      (void)count;
      index.doc_freq[token] += 1;
    }
  }
  index.avgdl = static_cast<double>(total_len) / static_cast<double>(index.n_labels);
  return index;
}

double bm25_idf(const Bm25Index& index, const std::string& token) {
  auto it = index.doc_freq.find(token);
  const double df = it == index.doc_freq.end() ? 0.0 : static_cast<double>(it->second);
  const double n = static_cast<double>(index.n_labels);
  return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5)));
}

double bm25_score(const Document& doc, const LabelId& label, const Bm25Index& index,
                  const Bm25Params& params) {
  auto tf_it = index.term_freq.find(label);
  auto len_it = index.descriptor_len.find(label);
  if (tf_it == index.term_freq.end() || len_it == index.descriptor_len.end()) {
    throw Error(ErrorKind::UnknownLabel, "label '" + label + "' is not indexed");
  }
  const auto& tf = tf_it->second;
  const double len_norm =
      1.0 - params.b + params.b * static_cast<double>(len_it->second) / index.avgdl;

  std::set<std::string> doc_terms(doc.tokens.begin(), doc.tokens.end());
  double score = 0.0;
  for (const auto& token : doc_terms) {
    auto t = tf.find(token);
    if (t == tf.end()) continue;
    const double term_freq = static_cast<double>(t->second);
    score += bm25_idf(index, token) * term_freq * (params.k1 + 1.0) /
             (term_freq * params.k1 * len_norm);
  }
  return score;
}

CandidateSet filter_bm25(const Document& doc, const CandidateSet& cands,
                         const Bm25Index& index, const Bm25Params& params) {
  if (cands.stage != Stage::auxiliary) {
    throw Error(ErrorKind::ConfigError, "filter_bm25 expects an auxiliary-stage candidate set");
  }
  CandidateSet out;
  out.doc_id = cands.doc_id;
  out.stage = Stage::bm25;
  out.fallback = cands.fallback;
  for (const auto& label : cands.labels) {
    if (bm25_score(doc, label, index, params) > params.theta) out.labels.insert(label);
  }
  return out;
}

void save_bm25_index(const Bm25Index& index, const std::string& path,
                     const std::string& fingerprint) {
  nlohmann::json root;
  root["format_version"] = kBm25IndexFormatVersion;
  root["fingerprint"] = fingerprint;
  root["n_labels"] = index.n_labels;
  root["avgdl"] = index.avgdl;
  root["doc_freq"] = index.doc_freq;
  root["descriptor_len"] = index.descriptor_len;
  root["term_freq"] = index.term_freq;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << root.dump(2) << "\n";
}

Bm25Index load_bm25_index(const std::string& path, const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingIndex, "cannot open " + path);
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorKind::MalformedRecord, path + ": not a JSON object");
  }
  if (root.value("format_version", -1) != kBm25IndexFormatVersion) {
    throw Error(ErrorKind::MalformedRecord, path + ": unsupported format version");
  }
  if (root.value("fingerprint", "") != expected_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                path + ": artifact was built under a different configuration");
  }
  Bm25Index index;
  index.n_labels = root.at("n_labels").get<std::int64_t>();
  index.avgdl = root.at("avgdl").get<double>();
  index.doc_freq = root.at("doc_freq").get<std::map<std::string, std::int64_t>>();
  index.descriptor_len = root.at("descriptor_len").get<std::map<LabelId, std::int64_t>>();
  index.term_freq =
      root.at("term_freq").get<std::map<LabelId, std::map<std::string, std::int64_t>>>();
  return index;
}

}  // namespace coderank
