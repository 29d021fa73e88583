#include "tagforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tagforge {

namespace {

void check_cases(std::span<const EvalCase> cases, size_t k) {
  if (k == 0) throw std::invalid_argument("metrics: K must be >= 1");
  if (cases.empty()) throw std::invalid_argument("metrics: empty case list");
}

size_t hits_at_k(const EvalCase& c, size_t k) {
  size_t hits = 0;
  const size_t top = std::min(k, c.ranked.size());
  for (size_t i = 0; i < top; ++i)
    if (std::binary_search(c.gold.begin(), c.gold.end(), c.ranked[i])) ++hits;
  return hits;
}

// Per-case values land in slots; the mean is a serial sum in case order.
template <class F>
double mean_over_cases(std::span<const EvalCase> cases, F&& per_case) {
  std::vector<double> values(cases.size());
  const auto n = static_cast<ptrdiff_t>(cases.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) values[static_cast<size_t>(i)] = per_case(cases[static_cast<size_t>(i)]);
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(cases.size());
}

MetricBlock compute_block(std::span<const EvalCase> cases, const std::vector<size_t>& ks) {
  MetricBlock block;
  block.n = cases.size();
  if (cases.empty()) return block;
  for (size_t k : ks) {
    block.recall[k] = recall_at_k(cases, k);
    block.rp[k] = r_precision_at_k(cases, k);
    block.ndcg[k] = ndcg_at_k(cases, k);
  }
  return block;
}

nlohmann::json block_json(const MetricBlock& block) {
  auto per_k = [](const std::map<size_t, double>& m) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : m) out[std::to_string(k)] = v;
    return out;
  };
  return nlohmann::json{{"n", block.n},
                        {"metrics",
                         {{"recall", per_k(block.recall)},
                          {"rp", per_k(block.rp)},
                          {"ndcg", per_k(block.ndcg)}}}};
}

MetricBlock block_from_json(const nlohmann::json& j) {
  MetricBlock block;
  block.n = j.at("n").get<size_t>();
  auto read = [&](const char* name, std::map<size_t, double>& into) {
    for (const auto& [k, v] : j.at("metrics").at(name).items())
      into[static_cast<size_t>(std::stoul(k))] = v.get<double>();
  };
  read("recall", block.recall);
  read("rp", block.rp);
  read("ndcg", block.ndcg);
  return block;
}

}  // namespace

double recall_at_k(std::span<const EvalCase> cases, size_t k) {
  check_cases(cases, k);
  return mean_over_cases(cases, [k](const EvalCase& c) {
    return static_cast<double>(hits_at_k(c, k)) / static_cast<double>(c.gold.size());
  });
}

double r_precision_at_k(std::span<const EvalCase> cases, size_t k) {
  check_cases(cases, k);
  return mean_over_cases(cases, [k](const EvalCase& c) {
    const size_t denom = std::min(c.gold.size(), k);
    return static_cast<double>(hits_at_k(c, k)) / static_cast<double>(denom);
  });
}

double ndcg_at_k(std::span<const EvalCase> cases, size_t k) {
  check_cases(cases, k);
  return mean_over_cases(cases, [k](const EvalCase& c) {
    double dcg = 0.0;
    const size_t top = std::min(k, c.ranked.size());
    for (size_t i = 0; i < top; ++i)
      if (std::binary_search(c.gold.begin(), c.gold.end(), c.ranked[i]))
        dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    double ideal = 0.0;
    const size_t ideal_hits = std::min(c.gold.size(), k);
    for (size_t i = 0; i < ideal_hits; ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / ideal;
  });
}

MetricReport evaluate(const Ranker& ranker, const Corpus& corpus, const std::string& split,
                      std::vector<size_t> ks, const FrequencyBuckets* buckets) {
  const auto& examples = corpus.split(split);
  if (examples.empty()) throw std::runtime_error("evaluate: split '" + split + "' is empty");
  if (ks.empty()) throw std::invalid_argument("evaluate: no K values");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  MetricReport report;
  report.split = split;
  const size_t n_tags = corpus.tags.size();
  for (auto& k : ks) {
    if (k == 0) throw std::invalid_argument("evaluate: K must be >= 1");
    if (k > n_tags) {
      report.warnings.push_back("K=" + std::to_string(k) + " clamped to |T|=" +
                                std::to_string(n_tags));
      k = n_tags;
    }
  }
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  report.ks = ks;

  std::vector<EvalCase> cases(examples.size());
  const auto n = static_cast<ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<size_t>(i);
    cases[u].ranked = ranker(examples[u].text);
    cases[u].gold = examples[u].gold;
  }

  report.overall = compute_block(cases, ks);

  if (buckets) {
    const std::map<std::string, const std::vector<std::string>*> parts = {
        {"frequent", &buckets->frequent}, {"few", &buckets->few}, {"zero", &buckets->zero}};
    for (const auto& [name, members] : parts) {
      std::vector<EvalCase> restricted;
      for (const auto& c : cases) {
        EvalCase rc;
        rc.ranked = c.ranked;
        for (const auto& g : c.gold)
          if (std::binary_search(members->begin(), members->end(), g)) rc.gold.push_back(g);
        if (!rc.gold.empty()) restricted.push_back(std::move(rc));
      }
      MetricBlock block = compute_block(restricted, ks);
      report.buckets[name] = std::move(block);
    }
  }
  return report;
}

nlohmann::json report_json(const MetricReport& report) {
  nlohmann::json j = block_json(report.overall);
  j["split"] = report.split;
  j["system"] = report.system;
  j["protocol"] = report.protocol;
  nlohmann::json ks = nlohmann::json::array();
  for (size_t k : report.ks) ks.push_back(k);
  j["ks"] = ks;
  if (!report.buckets.empty()) {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [name, block] : report.buckets) b[name] = block_json(block);
    j["buckets"] = b;
  }
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport report;
  report.split = j.at("split").get<std::string>();
  report.system = j.value("system", "");
  report.protocol = j.value("protocol", "standard");
  for (const auto& k : j.at("ks")) report.ks.push_back(k.get<size_t>());
  report.overall = block_from_json(j);
  if (j.contains("buckets"))
    for (const auto& [name, block] : j.at("buckets").items())
      report.buckets[name] = block_from_json(block);
  if (j.contains("warnings"))
    for (const auto& w : j.at("warnings")) report.warnings.push_back(w.get<std::string>());
  return report;
}

std::string report_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "metric,K,value,system\n";
  os.precision(17);
  auto emit_block = [&](const MetricBlock& block, const std::string& suffix,
                        const std::string& system) {
    for (const auto& [k, v] : block.recall) os << "recall" << suffix << "," << k << "," << v << "," << system << "\n";
    for (const auto& [k, v] : block.rp) os << "rp" << suffix << "," << k << "," << v << "," << system << "\n";
    for (const auto& [k, v] : block.ndcg) os << "ndcg" << suffix << "," << k << "," << v << "," << system << "\n";
  };
  for (const auto& report : reports) {
    emit_block(report.overall, "", report.system);
    for (const auto& [name, block] : report.buckets) emit_block(block, ":" + name, report.system);
  }
  return os.str();
}

}  // namespace tagforge
