#pragma once

#include <map>
#include <string>
#include <vector>

#include "coderank/aux_retrieval.hpp"
#include "coderank/corpus.hpp"

namespace coderank {

// Lexical statistics over the label descriptors. Descriptors play the role of
// the indexed collection; documents are the queries.
struct Bm25Index {
  std::map<std::string, std::int64_t> doc_freq;            // descriptors containing token
  std::map<LabelId, std::int64_t> descriptor_len;          // |t_y| in tokens
  std::map<LabelId, std::map<std::string, std::int64_t>> term_freq;
  double avgdl = 0.0;
  std::int64_t n_labels = 0;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double theta = 200.0;
};

Bm25Index build_bm25_index(const std::vector<LabelDescriptor>& labels);

// Robertson-Sparck Jones IDF, floored at zero so every per-term contribution
// stays nonnegative.
double bm25_idf(const Bm25Index& index, const std::string& token);

double bm25_score(const Document& doc, const LabelId& label, const Bm25Index& index,
                  const Bm25Params& params);

// Keeps the candidates whose score strictly exceeds theta. Input must be an
// auxiliary-stage set; the output is a subset of it with stage bm25.
CandidateSet filter_bm25(const Document& doc, const CandidateSet& cands,
                         const Bm25Index& index, const Bm25Params& params);

void save_bm25_index(const Bm25Index& index, const std::string& path,
                     const std::string& fingerprint);
Bm25Index load_bm25_index(const std::string& path, const std::string& expected_fingerprint);

}  // namespace coderank
