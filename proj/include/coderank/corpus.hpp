#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "coderank/types.hpp"

namespace coderank {

// Structured side codes attached to a document. The three namespaces are
// disjoint: a code is qualified by its kind when indexed.
struct AuxRecord {
  std::set<std::string> drg;
  std::set<std::string> cpt;
  std::set<std::string> drugs;

  bool empty() const { return drg.empty() && cpt.empty() && drugs.empty(); }
  bool operator==(const AuxRecord&) const = default;
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;  // lowercase, max 4000 after preprocessing
  std::set<LabelId> gold_labels;
  AuxRecord aux;

  bool operator==(const Document&) const = default;
};

struct LabelDescriptor {
  LabelId id;
  std::vector<std::string> descriptor_tokens;  // nonempty

  bool operator==(const LabelDescriptor&) const = default;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;

  bool operator==(const Split&) const = default;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<LabelDescriptor> labels;
  Split split;

  const Document& document(const std::string& id) const;
  bool has_label(const LabelId& id) const;
  Index label_position(const LabelId& id) const;

  // Documents of one split partition, in split-file order.
  std::vector<const Document*> split_documents(const std::vector<std::string>& ids) const;
  std::vector<const Document*> train_documents() const { return split_documents(split.train); }
  std::vector<const Document*> valid_documents() const { return split_documents(split.valid); }
  std::vector<const Document*> test_documents() const { return split_documents(split.test); }

  // Checks split disjointness and gold-label resolution; throws on violation.
  void validate() const;
  void rebuild_lookups();

 private:
  std::unordered_map<std::string, std::size_t> doc_pos_;
  std::unordered_map<LabelId, Index> label_pos_;
};

inline constexpr std::size_t kMaxDocumentTokens = 4000;

// Lowercases, replaces punctuation and mixed digit-letter runs with
// whitespace, splits, and truncates to the first max_len tokens.
std::vector<std::string> preprocess(const std::string& raw_text, std::size_t max_len);

std::string join_tokens(const std::vector<std::string>& tokens);

// Loads and fully validates a corpus from JSONL files. When splits_path is
// empty, every document is assigned to the train split.
Corpus load_corpus(const std::string& doc_path, const std::string& label_path,
                   const std::string& splits_path = "",
                   std::size_t max_len = kMaxDocumentTokens);

void save_corpus(const Corpus& corpus, const std::string& doc_path,
                 const std::string& label_path, const std::string& splits_path);

}  // namespace coderank
