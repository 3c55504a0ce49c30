#include "coderank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "coderank/error.hpp"
#include "json.hpp"

namespace coderank {

namespace {

using nlohmann::json;

bool is_mixed_alnum(const std::string& token) {
  bool has_digit = false;
  bool has_alpha = false;
  for (unsigned char c : token) {
    if (std::isdigit(c)) has_digit = true;
    if (std::isalpha(c)) has_alpha = true;
  }
  return has_digit && has_alpha;
}

json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
  json record = json::parse(line, nullptr, false);
  if (record.is_discarded() || !record.is_object()) {
    throw Error(ErrorKind::MalformedRecord,
                path + ":" + std::to_string(lineno) + ": not a JSON object");
  }
  return record;
}

std::set<std::string> string_set(const json& record, const char* key,
                                 const std::string& where) {
  std::set<std::string> out;
  if (!record.contains(key)) return out;
  if (!record[key].is_array()) {
    throw Error(ErrorKind::MalformedRecord, where + ": field '" + key + "' must be an array");
  }
  for (const auto& v : record[key]) {
    if (!v.is_string()) {
      throw Error(ErrorKind::MalformedRecord, where + ": field '" + key + "' must hold strings");
    }
    out.insert(v.get<std::string>());
  }
  return out;
}

std::string require_string(const json& record, const char* key, const std::string& where) {
  if (!record.contains(key) || !record[key].is_string()) {
    throw Error(ErrorKind::MalformedRecord, where + ": missing string field '" + key + "'");
  }
  return record[key].get<std::string>();
}

}  // namespace

std::vector<std::string> preprocess(const std::string& raw_text, std::size_t max_len) {
  std::string cleaned;
  cleaned.reserve(raw_text.size());
  for (unsigned char c : raw_text) {
    if (std::isalnum(c)) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else {
      cleaned.push_back(' ');
    }
  }

  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string token;
  while (tokens.size() < max_len && in >> token) {
    // Mixed digit-letter runs ("3a", "4kg") are treated as whitespace;
    // pure numbers are kept.
    if (is_mixed_alnum(token)) continue;
    tokens.push_back(token);
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

const Document& Corpus::document(const std::string& id) const {
  auto it = doc_pos_.find(id);
  if (it == doc_pos_.end()) {
    throw Error(ErrorKind::MismatchedIds, "unknown document id '" + id + "'");
  }
  return documents[it->second];
}

bool Corpus::has_label(const LabelId& id) const {
  return label_pos_.find(id) != label_pos_.end();
}

Index Corpus::label_position(const LabelId& id) const {
  auto it = label_pos_.find(id);
  if (it == label_pos_.end()) {
    throw Error(ErrorKind::UnknownLabel, "unknown label '" + id + "'");
  }
  return it->second;
}

std::vector<const Document*> Corpus::split_documents(
    const std::vector<std::string>& ids) const {
  std::vector<const Document*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(&document(id));
  return out;
}

void Corpus::rebuild_lookups() {
  doc_pos_.clear();
  label_pos_.clear();
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (!doc_pos_.emplace(documents[i].id, i).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate document id '" + documents[i].id + "'");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!label_pos_.emplace(labels[i].id, static_cast<Index>(i)).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate label id '" + labels[i].id + "'");
    }
  }
}

void Corpus::validate() const {
  std::unordered_set<std::string> seen;
  auto check_partition = [&](const std::vector<std::string>& ids, const char* name) {
    for (const auto& id : ids) {
      if (doc_pos_.find(id) == doc_pos_.end()) {
        throw Error(ErrorKind::MismatchedIds,
                    std::string("split '") + name + "' references unknown document '" + id + "'");
      }
      if (!seen.insert(id).second) {
        throw Error(ErrorKind::DuplicateId,
                    "document '" + id + "' appears in more than one split");
      }
    }
  };
  check_partition(split.train, "train");
  check_partition(split.valid, "valid");
  check_partition(split.test, "test");

  for (const auto& doc : documents) {
    if (doc.tokens.size() > kMaxDocumentTokens) {
      throw Error(ErrorKind::MalformedRecord,
                  "document '" + doc.id + "' exceeds the token limit");
    }
    for (const auto& label : doc.gold_labels) {
      if (!has_label(label)) {
        throw Error(ErrorKind::UnknownLabel,
                    "document '" + doc.id + "' references unregistered label '" + label + "'");
      }
    }
  }
  for (const auto& label : labels) {
    if (label.descriptor_tokens.empty()) {
      throw Error(ErrorKind::EmptyDescriptor, "label '" + label.id + "' has an empty descriptor");
    }
  }
}

Corpus load_corpus(const std::string& doc_path, const std::string& label_path,
                   const std::string& splits_path, std::size_t max_len) {
  Corpus corpus;

  std::ifstream labels_in(label_path);
  if (!labels_in) throw Error(ErrorKind::IoError, "cannot open " + label_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(labels_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record = parse_line(line, label_path, lineno);
    const std::string where = label_path + ":" + std::to_string(lineno);
    LabelDescriptor label;
    label.id = require_string(record, "id", where);
    label.descriptor_tokens = preprocess(require_string(record, "descriptor", where), max_len);
    if (label.descriptor_tokens.empty()) {
      throw Error(ErrorKind::EmptyDescriptor, where + ": descriptor has no tokens");
    }
    corpus.labels.push_back(std::move(label));
  }

  std::ifstream docs_in(doc_path);
  if (!docs_in) throw Error(ErrorKind::IoError, "cannot open " + doc_path);
  lineno = 0;
  while (std::getline(docs_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record = parse_line(line, doc_path, lineno);
    const std::string where = doc_path + ":" + std::to_string(lineno);
    Document doc;
    doc.id = require_string(record, "id", where);
    doc.tokens = preprocess(require_string(record, "text", where), max_len);
    for (const auto& label : string_set(record, "labels", where)) {
      doc.gold_labels.insert(label);
    }
    doc.aux.drg = string_set(record, "drg", where);
    doc.aux.cpt = string_set(record, "cpt", where);
    doc.aux.drugs = string_set(record, "drugs", where);
    corpus.documents.push_back(std::move(doc));
  }

  if (splits_path.empty()) {
    for (const auto& doc : corpus.documents) corpus.split.train.push_back(doc.id);
  } else {
    std::ifstream splits_in(splits_path);
    if (!splits_in) throw Error(ErrorKind::IoError, "cannot open " + splits_path);
    json record = json::parse(splits_in, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw Error(ErrorKind::MalformedRecord, splits_path + ": not a JSON object");
    }
    auto ids = [&](const char* key) {
      std::vector<std::string> out;
      if (!record.contains(key)) return out;
      for (const auto& v : record[key]) out.push_back(v.get<std::string>());
      return out;
    };
    corpus.split.train = ids("train");
    corpus.split.valid = ids("valid");
    corpus.split.test = ids("test");
  }

  corpus.rebuild_lookups();
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& doc_path,
                 const std::string& label_path, const std::string& splits_path) {
  std::ofstream docs_out(doc_path);
  if (!docs_out) throw Error(ErrorKind::IoError, "cannot write " + doc_path);
  for (const auto& doc : corpus.documents) {
    json record;
    record["id"] = doc.id;
    record["text"] = join_tokens(doc.tokens);
    record["labels"] = doc.gold_labels;
    record["drg"] = doc.aux.drg;
    record["cpt"] = doc.aux.cpt;
    record["drugs"] = doc.aux.drugs;
    docs_out << record.dump() << "\n";
  }

  std::ofstream labels_out(label_path);
  if (!labels_out) throw Error(ErrorKind::IoError, "cannot write " + label_path);
  for (const auto& label : corpus.labels) {
    json record;
    record["id"] = label.id;
    record["descriptor"] = join_tokens(label.descriptor_tokens);
    labels_out << record.dump() << "\n";
  }

  std::ofstream splits_out(splits_path);
  if (!splits_out) throw Error(ErrorKind::IoError, "cannot write " + splits_path);
  json record;
  record["train"] = corpus.split.train;
  record["valid"] = corpus.split.valid;
  record["test"] = corpus.split.test;
  splits_out << record.dump(2) << "\n";
}

}  // namespace coderank
