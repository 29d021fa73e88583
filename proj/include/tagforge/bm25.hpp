#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tagforge/corpus.hpp"

namespace tagforge {

// Okapi BM25 over tag texts as the document collection; contexts are queries.
// Immutable after build; concurrent queries are safe.
struct Bm25Index {
  double k1 = 1.2;
  double b = 0.75;
  double avg_len = 0.0;
  std::vector<std::string> ids;  // ascending
  std::vector<std::unordered_map<std::string, size_t>> term_freq;  // per tag
  std::vector<size_t> lengths;
  std::unordered_map<std::string, size_t> doc_freq;
};

Bm25Index build_bm25(const std::vector<TagLabel>& tags, double k1 = 1.2, double b = 0.75);

// Descending score, ties broken by tag id ascending. IDF is floored at zero,
// so scores are nonnegative. Repeated query terms contribute once per
// occurrence.
std::vector<std::pair<std::string, double>> bm25_rank(const Bm25Index& index,
                                                      const std::string& query_text, size_t k);

}  // namespace tagforge
