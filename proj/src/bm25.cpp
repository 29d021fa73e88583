#include "tagforge/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tagforge/kernels.hpp"
#include "tagforge/textproc.hpp"

namespace tagforge {

Bm25Index build_bm25(const std::vector<TagLabel>& tags, double k1, double b) {
  if (tags.empty()) throw std::invalid_argument("build_bm25: empty tag list");
  Bm25Index index;
  index.k1 = k1;
  index.b = b;

  std::vector<size_t> order = identity_order(tags.size());
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t c) { return tags[a].id < tags[c].id; });

  size_t total_len = 0;
  for (size_t o : order) {
    const TagLabel& tag = tags[o];
    index.ids.push_back(tag.id);
    std::unordered_map<std::string, size_t> tf;
    const auto tokens = word_tokens(tag.text);
    for (const auto& tok : tokens) ++tf[tok];
    for (const auto& [tok, n] : tf) ++index.doc_freq[tok];
    index.lengths.push_back(tokens.size());
    total_len += tokens.size();
    index.term_freq.push_back(std::move(tf));
  }
  index.avg_len = std::max(1e-9, static_cast<double>(total_len) /
                                     static_cast<double>(index.ids.size()));
  return index;
}

std::vector<std::pair<std::string, double>> bm25_rank(const Bm25Index& index,
                                                      const std::string& query_text, size_t k) {
  if (k == 0) throw std::invalid_argument("bm25_rank: K must be >= 1");
  const size_t n_docs = index.ids.size();
  const auto query = word_tokens(query_text);
  std::vector<double> scores(n_docs, 0.0);
  for (const auto& term : query) {
    auto df_it = index.doc_freq.find(term);
    if (df_it == index.doc_freq.end()) continue;
    const double df = static_cast<double>(df_it->second);
    const double idf =
        std::max(0.0, std::log((static_cast<double>(n_docs) - df + 0.5) / (df + 0.5)));
    if (idf == 0.0) continue;
    for (size_t t = 0; t < n_docs; ++t) {
      auto tf_it = index.term_freq[t].find(term);
      if (tf_it == index.term_freq[t].end()) continue;
      const double tf = static_cast<double>(tf_it->second);
      const double len_norm =
          index.k1 * (1.0 - index.b + index.b * static_cast<double>(index.lengths[t]) /
                                          index.avg_len);
      scores[t] += idf * (tf * (index.k1 + 1.0)) / (tf + len_norm);
    }
  }
  std::vector<size_t> order = identity_order(n_docs);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b2) {
    if (scores[a] != scores[b2]) return scores[a] > scores[b2];
    return index.ids[a] < index.ids[b2];
  });
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < std::min(k, n_docs); ++i)
    out.emplace_back(index.ids[order[i]], scores[order[i]]);
  return out;
}

}  // namespace tagforge
