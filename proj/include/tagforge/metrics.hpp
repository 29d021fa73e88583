#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tagforge/corpus.hpp"

namespace tagforge {

struct EvalCase {
  std::vector<std::string> ranked;  // predicted tag ids, no duplicates
  std::vector<std::string> gold;    // sorted, non-empty
};

// Mean over cases of S_t(K) / R_n.
double recall_at_k(std::span<const EvalCase> cases, size_t k);
// Mean over cases of S_t(K) / min(R_n, K).
double r_precision_at_k(std::span<const EvalCase> cases, size_t k);
// Binary-relevance nDCG with log base 2; the normalizer is the DCG of an
// ideal ranking that places min(R_n, K) relevant items at the top.
double ndcg_at_k(std::span<const EvalCase> cases, size_t k);

struct MetricBlock {
  size_t n = 0;
  std::map<size_t, double> recall, rp, ndcg;
};

struct MetricReport {
  std::string split;
  std::string system;
  std::string protocol = "standard";
  std::vector<size_t> ks;
  MetricBlock overall;
  std::map<std::string, MetricBlock> buckets;  // "frequent" / "few" / "zero"
  std::vector<std::string> warnings;
};

// Ranked tag ids for a context text; must cover at least max(ks) entries
// (or the whole tag set). Called concurrently, so it must be thread-safe.
using Ranker = std::function<std::vector<std::string>(const std::string& text)>;

// Evaluates a ranker over a split. When buckets are supplied, each bucket
// sub-report keeps the examples whose gold sets intersect the bucket and
// restricts their gold sets to the bucket's tags. Ks above |T| are clamped
// with a warning.
MetricReport evaluate(const Ranker& ranker, const Corpus& corpus, const std::string& split,
                      std::vector<size_t> ks, const FrequencyBuckets* buckets = nullptr);

nlohmann::json report_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

// Plot-ready rows: metric,K,value,system (bucket rows as metric:bucket).
std::string report_csv(std::span<const MetricReport> reports);

}  // namespace tagforge
