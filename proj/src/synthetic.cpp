#include "coderank/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coderank/error.hpp"
#include "coderank/rng.hpp"

namespace coderank {

namespace {


std::string alpha_suffix(int i, int width = 3) {
  std::string s(width, 'a');
  for (int k = width - 1; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = static_cast<char>('a' + i % 26);
    i /= 26;
  }
  return s;
}

std::string padded_id(const char* prefix, int i, int width = 5) {
  std::string digits = std::to_string(i);
  return prefix + std::string(width - std::min<std::size_t>(digits.size(), width), '0') + digits;
}

void check_spec(int n_docs, int n_labels, const SyntheticSpec& s) {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (n_docs < 1 || n_labels < 1) {
    throw Error(ErrorKind::InvalidSpec, "n_docs and n_labels must be >= 1");
  }
  if (!prob(s.cue_prob) || !prob(s.aux_prob) || !prob(s.train_frac) || !prob(s.valid_frac)) {
    throw Error(ErrorKind::InvalidSpec, "probabilities must lie in [0, 1]");
  }
  if (s.train_frac + s.valid_frac > 1.0) {
    throw Error(ErrorKind::InvalidSpec, "train_frac + valid_frac must not exceed 1");
  }
  if (s.min_labels_per_doc < 1 || s.max_labels_per_doc < s.min_labels_per_doc) {
    throw Error(ErrorKind::InvalidSpec, "labels-per-doc range is invalid");
  }
  if (s.cue_repeats < 1 || s.background_tokens < 0 || s.background_vocab < 1 ||
      s.aux_noise_codes < 0 || s.zipf_exponent < 0.0) {
    throw Error(ErrorKind::InvalidSpec, "counts must be nonnegative");
  }
  if (s.n_drg < 1 || s.n_cpt < 1 || s.n_drug < 1) {
    throw Error(ErrorKind::InvalidSpec, "aux code spaces must be nonempty");
  }
  if (s.planted_a < 0 || s.planted_b < 0 || s.planted_a >= n_labels ||
      s.planted_b >= n_labels || s.planted_a == s.planted_b) {
    throw Error(ErrorKind::InvalidSpec, "planted pair indices are out of range");
  }
}

}  // namespace

Corpus generate_synthetic_corpus(std::uint64_t seed, int n_docs, int n_labels,
                                 const SyntheticSpec& spec) {
  check_spec(n_docs, n_labels, spec);
  Rng rng(derive_seed(seed, "synthetic"));

  // Descriptors name each label with taxonomy vocabulary: a body-site word
  // shared by a tenth of the labels and a unique finding term that documents
  // also use when the label applies.
  const int site_span = std::max(1, n_labels / 10);
  auto site_of = [&](int g) { return g / site_span; };

  Corpus corpus;
  corpus.labels.reserve(static_cast<std::size_t>(n_labels));
  for (int i = 0; i < n_labels; ++i) {
    LabelDescriptor label;
    label.id = padded_id("c", i);
    label.descriptor_tokens = {"site" + alpha_suffix(site_of(i)),
                               "finding" + alpha_suffix(i)};
    corpus.labels.push_back(std::move(label));
  }

  // Power-law popularity over a shuffled rank assignment.
  std::vector<int> rank(static_cast<std::size_t>(n_labels));
  std::iota(rank.begin(), rank.end(), 0);
  rng.shuffle(rank);
  std::vector<double> cumulative(static_cast<std::size_t>(n_labels));
  double total = 0.0;
  for (int i = 0; i < n_labels; ++i) {
    total += std::pow(static_cast<double>(rank[static_cast<std::size_t>(i)] + 1),
                      -spec.zipf_exponent);
    cumulative[static_cast<std::size_t>(i)] = total;
  }

  auto sample_label = [&]() {
    double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cumulative.begin());
    return static_cast<int>(std::min<std::size_t>(i, static_cast<std::size_t>(n_labels) - 1));
  };

  const int label_range = spec.max_labels_per_doc - spec.min_labels_per_doc + 1;

  for (int d = 0; d < n_docs; ++d) {
    Document doc;
    doc.id = padded_id("d", d);

    int want = spec.min_labels_per_doc + static_cast<int>(rng.uniform_index(
                                             static_cast<std::size_t>(label_range)));
    want = std::min(want, n_labels);
    std::set<int> gold;
    while (static_cast<int>(gold.size()) < want) gold.insert(sample_label());
    if (gold.count(spec.planted_a)) gold.insert(spec.planted_b);
    if (gold.count(spec.planted_b)) gold.insert(spec.planted_a);

    for (int i = 0; i < spec.background_tokens; ++i) {
      doc.tokens.push_back(
          "word" + alpha_suffix(static_cast<int>(rng.uniform_index(
                       static_cast<std::size_t>(spec.background_vocab)))));
    }
    for (int g : gold) {
      doc.gold_labels.insert(corpus.labels[static_cast<std::size_t>(g)].id);
      if (rng.bernoulli(spec.cue_prob)) {
        for (int r = 0; r < spec.cue_repeats; ++r) {
          doc.tokens.push_back("finding" + alpha_suffix(g));
        }
        doc.tokens.push_back("site" + alpha_suffix(site_of(g)));
      }
      if (rng.bernoulli(spec.aux_prob)) {
        doc.aux.drg.insert(padded_id("drg", g % spec.n_drg, 3));
      }
      if (rng.bernoulli(spec.aux_prob)) {
        doc.aux.cpt.insert(padded_id("cpt", g % spec.n_cpt, 3));
      }
      if (rng.bernoulli(spec.aux_prob)) {
        doc.aux.drugs.insert(padded_id("rx", g % spec.n_drug, 3));
      }
    }
    for (int i = 0; i < spec.aux_noise_codes; ++i) {
      doc.aux.drg.insert(padded_id(
          "drg", static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.n_drg))), 3));
      doc.aux.cpt.insert(padded_id(
          "cpt", static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.n_cpt))), 3));
      doc.aux.drugs.insert(padded_id(
          "rx", static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.n_drug))), 3));
    }

    rng.shuffle(doc.tokens);
    if (doc.tokens.size() > kMaxDocumentTokens) doc.tokens.resize(kMaxDocumentTokens);
    corpus.documents.push_back(std::move(doc));
  }

  const int n_train = static_cast<int>(std::floor(spec.train_frac * n_docs));
  const int n_valid = static_cast<int>(std::floor(spec.valid_frac * n_docs));
  for (int d = 0; d < n_docs; ++d) {
    const std::string& id = corpus.documents[static_cast<std::size_t>(d)].id;
    if (d < n_train) {
      corpus.split.train.push_back(id);
    } else if (d < n_train + n_valid) {
      corpus.split.valid.push_back(id);
    } else {
      corpus.split.test.push_back(id);
    }
  }

  corpus.rebuild_lookups();
  corpus.validate();
  return corpus;
}

}  // namespace coderank
