#include "coderank/aux_retrieval.hpp"

#include <fstream>
#include <unordered_map>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {

constexpr int kAuxIndexFormatVersion = 1;

void count_document(CooccurrenceIndex& index, const Document& doc) {
  std::set<std::string> codes;
  for (const auto& c : doc.aux.drg) codes.insert(qualify_code("drg", c));
  for (const auto& c : doc.aux.cpt) codes.insert(qualify_code("cpt", c));
  for (const auto& c : doc.aux.drugs) codes.insert(qualify_code("drug", c));
  for (const auto& code : codes) {
    index.marginal_counts[code] += 1;
    auto& row = index.pair_counts[code];
    for (const auto& label : doc.gold_labels) row[label] += 1;
  }
}

}  // namespace

double CooccurrenceIndex::cond_prob(const std::string& code, const LabelId& label) const {
  auto m = marginal_counts.find(code);
  if (m == marginal_counts.end() || m->second == 0) return 0.0;
  auto p = pair_counts.find(code);
  if (p == pair_counts.end()) return 0.0;
  auto c = p->second.find(label);
  if (c == p->second.end()) return 0.0;
  return static_cast<double>(c->second) / static_cast<double>(m->second);
}

CooccurrenceIndex build_aux_index(const std::vector<const Document*>& train_docs) {
  if (train_docs.empty()) {
    throw Error(ErrorKind::EmptyTrainingSet, "aux index needs a nonempty training split");
  }
  CooccurrenceIndex index;
  for (const Document* doc : train_docs) count_document(index, *doc);
  return index;
}

std::set<LabelId> selected_labels_for_code(const CooccurrenceIndex& index,
                                           const std::string& qualified_code,
                                           double eta) {
  std::set<LabelId> out;
  auto m = index.marginal_counts.find(qualified_code);
  auto p = index.pair_counts.find(qualified_code);
  if (m == index.marginal_counts.end() || p == index.pair_counts.end() || m->second == 0) {
    return out;
  }
  const double denom = static_cast<double>(m->second);
  for (const auto& [label, count] : p->second) {
    if (static_cast<double>(count) / denom > eta) out.insert(label);
  }
  return out;
}

CandidateSet retrieve_candidates_aux(const Document& doc,
                                     const CooccurrenceIndex& index, double eta) {
  CandidateSet cands;
  cands.doc_id = doc.id;
  cands.stage = Stage::auxiliary;
  auto add = [&](const char* kind, const std::set<std::string>& codes) {
    for (const auto& code : codes) {
      auto selected = selected_labels_for_code(index, qualify_code(kind, code), eta);
      cands.labels.insert(selected.begin(), selected.end());
    }
  };
  add("drg", doc.aux.drg);
  add("cpt", doc.aux.cpt);
  add("drug", doc.aux.drugs);
  return cands;
}

CoverageStats coverage_report(const std::vector<CandidateSet>& candidates,
                              const std::vector<const Document*>& docs) {
  if (candidates.size() != docs.size()) {
    throw Error(ErrorKind::MismatchedIds, "candidate and document lists differ in length");
  }
  std::unordered_map<std::string, const CandidateSet*> by_id;
  for (const auto& c : candidates) by_id[c.doc_id] = &c;

  CoverageStats stats;
  stats.documents = docs.size();
  std::size_t size_total = 0;
  for (const Document* doc : docs) {
    auto it = by_id.find(doc->id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::MismatchedIds, "no candidate set for document '" + doc->id + "'");
    }
    const CandidateSet& cands = *it->second;
    size_total += cands.labels.size();
    for (const auto& label : doc->gold_labels) {
      ++stats.gold_total;
      if (cands.labels.count(label)) ++stats.gold_covered;
    }
  }
  stats.recall = stats.gold_total == 0
                     ? 0.0
                     : static_cast<double>(stats.gold_covered) / static_cast<double>(stats.gold_total);
  stats.mean_candidates =
      stats.documents == 0 ? 0.0 : static_cast<double>(size_total) / static_cast<double>(stats.documents);
  return stats;
}

void save_aux_index(const CooccurrenceIndex& index, const std::string& path,
                    const std::string& fingerprint) {
  nlohmann::json root;
  root["format_version"] = kAuxIndexFormatVersion;
  root["fingerprint"] = fingerprint;
  root["marginal_counts"] = index.marginal_counts;
  root["pair_counts"] = index.pair_counts;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << root.dump(2) << "\n";
}

CooccurrenceIndex load_aux_index(const std::string& path,
                                 const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingIndex, "cannot open " + path);
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw Error(ErrorKind::MalformedRecord, path + ": not a JSON object");
  }
  if (root.value("format_version", -1) != kAuxIndexFormatVersion) {
    throw Error(ErrorKind::MalformedRecord, path + ": unsupported format version");
  }
  if (root.value("fingerprint", "") != expected_fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                path + ": artifact was built under a different configuration");
  }
  CooccurrenceIndex index;
  index.marginal_counts =
      root.at("marginal_counts").get<std::map<std::string, std::int64_t>>();
  index.pair_counts =
      root.at("pair_counts").get<std::map<std::string, std::map<LabelId, std::int64_t>>>();
  return index;
}

}  // namespace coderank
