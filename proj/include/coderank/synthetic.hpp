#pragma once

#include <cstdint>
#include <string>

#include "coderank/corpus.hpp"

namespace coderank {

// Knobs for the generated benchmark corpus. Descriptors name each label with
// taxonomy vocabulary (a shared kind word, a shared body-site word, a unique
// finding term); documents repeat the finding and site words of their gold
// labels amid templated filler, the way notes bury informative phrases in
// boilerplate. Each label also maps to one auxiliary code per knowledge
// kind, and one designated label pair always co-occurs. Label popularity
// follows a power law (exponent 0 = uniform).
struct SyntheticSpec {
  int min_labels_per_doc = 5;
  int max_labels_per_doc = 8;

  double cue_prob = 1.0;   // P(cue tokens present | gold label)
  int cue_repeats = 3;     // occurrences of the mention term when present

  double aux_prob = 0.95;  // P(mapped aux code attached | gold label), per kind
  int aux_noise_codes = 1; // extra uniformly random codes per kind per doc

  int background_tokens = 90;
  int background_vocab = 500;

  int n_drg = 40;
  int n_cpt = 40;
  int n_drug = 67;

  int planted_a = 0;  // label indices of the always-co-occurring pair
  int planted_b = 1;

  double zipf_exponent = 0.8;

  double train_frac = 0.8;
  double valid_frac = 0.1;
};

// Deterministic for a fixed (seed, n_docs, n_labels, spec). Throws
// ErrorKind::InvalidSpec when the spec is out of range.
Corpus generate_synthetic_corpus(std::uint64_t seed, int n_docs, int n_labels,
                                 const SyntheticSpec& spec = {});

}  // namespace coderank
