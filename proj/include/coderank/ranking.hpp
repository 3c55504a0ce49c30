#pragma once

#include <string>
#include <vector>

#include "coderank/types.hpp"

namespace coderank {

struct RankedEntry {
  LabelId label;
  Scalar score = 0.0;
};

// Candidate labels ordered by descending score; equal scores fall back to
// lexicographic LabelId order.
struct RankedList {
  std::string doc_id;
  std::vector<RankedEntry> entries;
};

}  // namespace coderank
