#include "tagforge/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tagforge/kernels.hpp"

namespace tagforge {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'G', 'I'};
constexpr uint32_t kVersion = 1;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

TagIndex build_index(const BiEncoder& model, const Vocabulary& vocab,
                     const std::vector<TagLabel>& tags, uint64_t checkpoint_hash) {
  if (tags.empty()) throw std::invalid_argument("build_index: empty tag list");
  if (vocab.content_hash() != model.vocab_hash)
    throw std::runtime_error("build_index: vocabulary does not match the model");

  std::vector<size_t> order = identity_order(tags.size());
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return tags[a].id < tags[b].id; });

  TagIndex index;
  index.dim = model.tag_tower.dims.dim;
  index.score_scale = model.score_scale;
  index.checkpoint_hash = checkpoint_hash;
  std::vector<PackedInput> packed;
  for (size_t o : order) {
    index.ids.push_back(tags[o].id);
    index.texts.push_back(tags[o].text);
    packed.push_back(pack_single(vocab, tags[o].text, model.pack));
  }
  std::vector<Embedding> embs;
  encode_batch(model.tag_tower, packed, embs);
  index.embeddings.resize(embs.size() * index.dim);
  for (size_t t = 0; t < embs.size(); ++t)
    std::copy(embs[t].begin(), embs[t].end(), index.embeddings.begin() +
                                                  static_cast<ptrdiff_t>(t * index.dim));
  return index;
}

RetrievalResult retrieve_topk(const TagIndex& index, const Embedding& query, size_t k,
                              const std::string& query_echo) {
  if (k == 0) throw std::invalid_argument("retrieve_topk: K must be >= 1");
  std::vector<double> scores;
  scan_scores(index.embeddings, index.ids.size(), index.dim, query, index.score_scale, scores);

  std::vector<size_t> order = identity_order(scores.size());
  const size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(take), order.end(),
                    [&](size_t a, size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return index.ids[a] < index.ids[b];
                    });
  RetrievalResult result;
  result.query = query_echo;
  for (size_t i = 0; i < take; ++i)
    result.ranked.emplace_back(index.ids[order[i]], scores[order[i]]);
  return result;
}

std::vector<std::string> retrieve_threshold(const TagIndex& index, const Embedding& query,
                                            double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("retrieve_threshold: tau must lie in (0, 1)");
  std::vector<double> scores;
  scan_scores(index.embeddings, index.ids.size(), index.dim, query, index.score_scale, scores);
  std::vector<std::string> out;
  for (size_t t = 0; t < scores.size(); ++t)
    if (logistic(scores[t]) >= tau) out.push_back(index.ids[t]);
  return out;  // ids are stored ascending
}

void save_index(const std::filesystem::path& path, const TagIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index " + path.string());
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto u64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto str = [&](const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  };
  out.write(kMagic, sizeof kMagic);
  u32(kVersion);
  u64(index.checkpoint_hash);
  f64(index.score_scale);
  u64(index.ids.size());
  u64(index.dim);
  for (size_t t = 0; t < index.ids.size(); ++t) {
    str(index.ids[t]);
    str(index.texts[t]);
  }
  out.write(reinterpret_cast<const char*>(index.embeddings.data()),
            static_cast<std::streamsize>(index.embeddings.size() * sizeof(double)));
}

TagIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index " + path.string());
  auto fail = [&]() -> std::runtime_error {
    return std::runtime_error("index " + path.string() + ": truncated or corrupt");
  };
  auto u32 = [&]() {
    uint32_t v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw fail();
    return v;
  };
  auto u64 = [&]() {
    uint64_t v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw fail();
    return v;
  };
  auto f64 = [&]() {
    double v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw fail();
    return v;
  };
  auto str = [&]() {
    const uint32_t n = u32();
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw fail();
    return s;
  };
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("index " + path.string() + ": bad magic");
  const uint32_t version = u32();
  if (version != kVersion)
    throw std::runtime_error("index " + path.string() + ": unsupported version");
  TagIndex index;
  index.checkpoint_hash = u64();
  index.score_scale = f64();
  const uint64_t count = u64();
  index.dim = u64();
  for (uint64_t t = 0; t < count; ++t) {
    index.ids.push_back(str());
    index.texts.push_back(str());
  }
  index.embeddings.resize(count * index.dim);
  if (!in.read(reinterpret_cast<char*>(index.embeddings.data()),
               static_cast<std::streamsize>(index.embeddings.size() * sizeof(double))))
    throw fail();
  return index;
}

}  // namespace tagforge
