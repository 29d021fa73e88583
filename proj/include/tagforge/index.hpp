#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tagforge/biencoder.hpp"
#include "tagforge/corpus.hpp"

namespace tagforge {

// Flat dense index over tag-tower embeddings. Exhaustive exact search;
// immutable after build, unlimited concurrent queries.
struct TagIndex {
  std::vector<std::string> ids;    // ascending, stable
  std::vector<std::string> texts;  // aligned with ids
  size_t dim = 0;
  std::vector<double> embeddings;  // |T| x dim row-major
  double score_scale = 0.0;
  uint64_t checkpoint_hash = 0;  // provenance of the source model
};

struct RetrievalResult {
  std::string query;  // echo
  std::vector<std::pair<std::string, double>> ranked;  // score desc, id asc on ties
};

// One embedding per tag via the tag tower, rows ordered by tag id.
TagIndex build_index(const BiEncoder& model, const Vocabulary& vocab,
                     const std::vector<TagLabel>& tags, uint64_t checkpoint_hash = 0);

// Exact top-K by score, ties broken by tag id ascending.
RetrievalResult retrieve_topk(const TagIndex& index, const Embedding& query, size_t k,
                              const std::string& query_echo = "");

// All tags whose logistic(score) >= tau; returned sorted by id. tau in (0,1).
std::vector<std::string> retrieve_threshold(const TagIndex& index, const Embedding& query,
                                            double tau);

// Persistence: magic "TAGI", version, source checkpoint hash, score scale,
// tag table, little-endian 64-bit float matrix.
void save_index(const std::filesystem::path& path, const TagIndex& index);
TagIndex load_index(const std::filesystem::path& path);

}  // namespace tagforge
