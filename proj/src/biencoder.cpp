#include "tagforge/biencoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "tagforge/hash.hpp"
#include "tagforge/rng.hpp"

namespace tagforge {

namespace {

constexpr double kProbClamp = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Distinct draws when the pool suffices, multiset fill otherwise.
std::vector<std::string> sample_tags(const std::vector<std::string>& pool, size_t n, Rng& rng) {
  std::vector<std::string> out;
  if (pool.empty() || n == 0) return out;
  if (pool.size() >= n) {
    std::vector<size_t> idx(pool.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t i = 0; i < n; ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform_below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      out.push_back(pool[idx[i]]);
    }
  } else {
    out = pool;
    while (out.size() < n) out.push_back(pool[rng.uniform_below(pool.size())]);
  }
  return out;
}

struct AdamState {
  std::vector<double> m, v;
};

void adam_step_tensor(std::vector<double>& params, std::span<const double> grads, AdamState& state,
                      uint64_t t, const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / corr1;
    const double v_hat = state.v[i] / corr2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

struct TowerAdam {
  AdamState emb, wq, wk, wv, wo, bo;
  uint64_t t = 0;

  void step(EncoderParams& p, const ParamGrads& g, const TrainConfig& cfg) {
    ++t;
    adam_step_tensor(p.tok_emb, g.tok_emb, emb, t, cfg);
    adam_step_tensor(p.w_query, g.w_query, wq, t, cfg);
    adam_step_tensor(p.w_key, g.w_key, wk, t, cfg);
    adam_step_tensor(p.w_value, g.w_value, wv, t, cfg);
    adam_step_tensor(p.w_out, g.w_out, wo, t, cfg);
    adam_step_tensor(p.b_out, g.b_out, bo, t, cfg);
  }
};

TrainResult run_training(BiEncoder& model, const Corpus& corpus, const Vocabulary& vocab,
                         const TrainConfig& cfg) {
  if (cfg.batch_contexts < 2)
    throw std::invalid_argument("train: batch_contexts must be >= 2 for in-batch negatives");
  if (cfg.ceaa_negatives < 0) throw std::invalid_argument("train: ceaa_negatives must be >= 0");
  if (vocab.content_hash() != model.vocab_hash)
    throw std::runtime_error("train: vocabulary does not match the model");
  const auto& train_split = corpus.split("train");
  if (train_split.empty()) throw std::runtime_error("train: empty train split");

  TrainResult result;
  Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL));
  TowerAdam ctx_adam, tag_adam;

  std::vector<size_t> indices(train_split.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  std::vector<Embedding> ctx_embs, tag_embs;
  std::vector<double> scores, d_ctx, d_tag;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double loss_sum = 0.0;
    size_t n_batches = 0;
    const size_t bs = static_cast<size_t>(cfg.batch_contexts);
    for (size_t start = 0; start + 2 <= indices.size(); start += bs) {
      const size_t count = std::min(bs, indices.size() - start);
      if (count < 2) break;
      BatchOptions opts;
      opts.ceaa = cfg.ceaa;
      opts.negatives = cfg.ceaa_negatives;
      opts.full_matrix = cfg.ceaa_full_matrix;
      opts.pack = model.pack;
      opts.seed = derive_seed(cfg.seed, static_cast<uint64_t>(epoch), n_batches);
      const TrainingBatch batch =
          build_batch(corpus, vocab, {indices.data() + start, count}, opts);

      encode_batch(model.context_tower, batch.context_inputs, ctx_embs);
      encode_batch(model.tag_tower, batch.tag_inputs, tag_embs);
      score_matrix(ctx_embs, tag_embs, model.score_scale, scores);
      BceResult bce = bce_loss(scores, batch.labels, batch.mask, batch.rows(), batch.cols(),
                               cfg.norm, batch.reduce_order);
      loss_sum += bce.loss;
      ++n_batches;

      score_backward_rows(bce.d_scores, tag_embs, batch.rows(), model.score_scale, d_ctx);
      score_backward_cols(bce.d_scores, ctx_embs, batch.reduce_order, batch.cols(),
                          model.score_scale, d_tag);

      ParamGrads ctx_grads = zero_grads(model.context_tower.dims);
      backward_batch(model.context_tower, batch.context_inputs, d_ctx, batch.reduce_order,
                     ctx_grads);
      ParamGrads tag_grads = zero_grads(model.tag_tower.dims);
      const auto tag_order = identity_order(batch.cols());
      backward_batch(model.tag_tower, batch.tag_inputs, d_tag, tag_order, tag_grads);

      ctx_adam.step(model.context_tower, ctx_grads, cfg);
      tag_adam.step(model.tag_tower, tag_grads, cfg);
    }
    if (n_batches == 0) throw std::runtime_error("train: no batch with >= 2 contexts");
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n_batches));
  }
  return result;
}

}  // namespace

BiEncoder make_biencoder(uint64_t seed, const EncoderDims& dims, const Vocabulary& vocab,
                         Pooling pooling, const PackConfig& pack) {
  EncoderDims full = dims;
  full.vocab = vocab.size();
  BiEncoder model;
  model.context_tower = init_encoder(derive_seed(seed, 0xC0ULL), full, pooling);
  model.tag_tower = init_encoder(derive_seed(seed, 0x7AULL), full, pooling);
  model.score_scale = 1.0 / std::sqrt(static_cast<double>(full.dim));
  model.pack = pack;
  model.vocab_hash = vocab.content_hash();
  return model;
}

double dot_score(std::span<const double> a, std::span<const double> b, double scale) {
  if (a.size() != b.size()) throw std::invalid_argument("dot_score: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return scale * acc;
}

double score(const BiEncoder& model, const PackedInput& context, const PackedInput& tag) {
  const Embedding c = encode(model.context_tower, context);
  const Embedding t = encode(model.tag_tower, tag);
  return dot_score(c, t, model.score_scale);
}

double score_ceaa(const BiEncoder& model, const Vocabulary& vocab,
                  const std::string& context_text, const std::string& tag_text) {
  if (vocab.content_hash() != model.vocab_hash)
    throw std::runtime_error("score_ceaa: vocabulary does not match the model");
  const PackedInput joint = pack_concat(vocab, context_text, tag_text, model.pack);
  const PackedInput relevance = pack_single(vocab, kRelevanceTagText, model.pack);
  return score(model, joint, relevance);
}

TrainingBatch build_batch(const Corpus& corpus, const Vocabulary& vocab,
                          std::span<const size_t> indices, const BatchOptions& options) {
  const auto& train_split = corpus.split("train");
  std::set<std::string> distinct;
  for (size_t idx : indices) {
    if (idx >= train_split.size()) throw std::out_of_range("build_batch: index out of range");
    distinct.insert(train_split[idx].id);
  }
  if (distinct.size() < 2)
    throw std::invalid_argument("build_batch: need at least 2 distinct contexts");
  if (options.negatives < 0) throw std::invalid_argument("build_batch: negatives must be >= 0");

  TrainingBatch batch;
  batch.ceaa = options.ceaa;
  batch.plain_rows = indices.size();

  // Columns: unique gold tags of the batch, ascending id.
  std::set<std::string> unique_tags;
  for (size_t idx : indices)
    for (const auto& t : train_split[idx].gold) unique_tags.insert(t);
  batch.tag_ids.assign(unique_tags.begin(), unique_tags.end());
  const size_t n_real = batch.tag_ids.size();
  for (const auto& id : batch.tag_ids)
    batch.tag_inputs.push_back(pack_single(vocab, corpus.tag(id).text, options.pack));
  if (options.ceaa) {
    batch.tag_ids.push_back(kRelevanceTagText);
    batch.tag_inputs.push_back(pack_single(vocab, kRelevanceTagText, options.pack));
  }
  const size_t n_cols = batch.tag_ids.size();

  std::map<std::string, size_t> col_of;
  for (size_t j = 0; j < n_real; ++j) col_of[batch.tag_ids[j]] = j;

  // Plain rows.
  struct RowKey {
    std::string example_id;
    int kind;  // 0 plain, 1 concat
    size_t intra;
  };
  std::vector<RowKey> keys;
  const size_t n_ceaa_rows =
      options.ceaa ? indices.size() * (1 + static_cast<size_t>(options.negatives)) : 0;
  const size_t n_rows = indices.size() + n_ceaa_rows;
  batch.labels.assign(n_rows * n_cols, 0);
  batch.mask.assign(n_rows * n_cols, 0);

  for (size_t r = 0; r < indices.size(); ++r) {
    const Example& ex = train_split[indices[r]];
    batch.context_inputs.push_back(pack_single(vocab, ex.text, options.pack));
    keys.push_back({ex.id, 0, 0});
    for (size_t j = 0; j < n_real; ++j) batch.mask[r * n_cols + j] = 1;
    for (const auto& t : ex.gold) batch.labels[r * n_cols + col_of.at(t)] = 1;
    if (options.ceaa && options.full_matrix) batch.mask[r * n_cols + n_real] = 1;  // y = 0
  }

  // CEAA rows: one positive and `negatives` negative concatenations per
  // context. Sampling is keyed by (batch seed, example id) so a permutation
  // of the batch produces the same rows.
  if (options.ceaa) {
    size_t row = indices.size();
    for (size_t r = 0; r < indices.size(); ++r) {
      const Example& ex = train_split[indices[r]];
      Rng rng(derive_seed(options.seed, fnv1a64(ex.id)));

      const std::string& positive = ex.gold[rng.uniform_below(ex.gold.size())];
      std::vector<std::string> pool;
      for (size_t j = 0; j < n_real; ++j)
        if (!std::binary_search(ex.gold.begin(), ex.gold.end(), batch.tag_ids[j]))
          pool.push_back(batch.tag_ids[j]);
      if (pool.empty()) {
        // Batch offers no non-gold tag; fall back to the vocabulary complement.
        for (const auto& tag : corpus.tags)
          if (!std::binary_search(ex.gold.begin(), ex.gold.end(), tag.id)) pool.push_back(tag.id);
      }
      const auto negatives = sample_tags(pool, static_cast<size_t>(options.negatives), rng);

      auto add_row = [&](const std::string& tag_id, bool is_gold, size_t intra) {
        batch.context_inputs.push_back(
            pack_concat(vocab, ex.text, corpus.tag(tag_id).text, options.pack));
        keys.push_back({ex.id, 1, intra});
        batch.mask[row * n_cols + n_real] = 1;
        batch.labels[row * n_cols + n_real] = is_gold ? 1 : 0;
        if (options.full_matrix)
          for (size_t j = 0; j < n_real; ++j) batch.mask[row * n_cols + j] = 1;  // y = 0
        ++row;
      };
      add_row(positive, true, 0);
      for (size_t i = 0; i < negatives.size(); ++i) add_row(negatives[i], false, i + 1);
      // Fully degenerate case (gold covers the whole vocabulary): pad with
      // positive rows so every batch keeps M * (1 + negatives) CEAA rows.
      for (size_t i = negatives.size(); i < static_cast<size_t>(options.negatives); ++i)
        add_row(positive, true, i + 1);
    }
  }

  batch.reduce_order = identity_order(batch.rows());
  std::stable_sort(batch.reduce_order.begin(), batch.reduce_order.end(),
                   [&](size_t a, size_t b) {
                     if (keys[a].example_id != keys[b].example_id)
                       return keys[a].example_id < keys[b].example_id;
                     if (keys[a].kind != keys[b].kind) return keys[a].kind < keys[b].kind;
                     return keys[a].intra < keys[b].intra;
                   });
  return batch;
}

BceResult bce_loss(std::span<const double> scores, std::span<const uint8_t> labels,
                   std::span<const uint8_t> mask, size_t rows, size_t cols, LossNorm norm,
                   std::span<const size_t> row_order) {
  if (scores.size() != rows * cols || labels.size() != scores.size() ||
      mask.size() != scores.size())
    throw std::invalid_argument("bce_loss: shape mismatch");
  size_t unmasked = 0;
  for (uint8_t m : mask) unmasked += m;
  if (unmasked == 0) throw std::invalid_argument("bce_loss: all entries masked");

  const double denom = norm == LossNorm::MeanUnmasked ? static_cast<double>(unmasked)
                                                      : static_cast<double>(rows);
  BceResult out;
  out.d_scores.assign(scores.size(), 0.0);
  auto row_at = [&](size_t r) { return row_order.empty() ? r : row_order[r]; };
  double loss = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    const size_t i = row_at(r);
    for (size_t j = 0; j < cols; ++j) {
      const size_t at = i * cols + j;
      if (!mask[at]) continue;
      const double p = sigmoid(scores[at]);
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      loss -= labels[at] ? std::log(pc) : std::log(1.0 - pc);
      out.d_scores[at] = (p - static_cast<double>(labels[at])) / denom;
    }
  }
  out.loss = loss / denom;
  return out;
}

TrainResult train(BiEncoder& model, const Corpus& corpus, const Vocabulary& vocab,
                  const TrainConfig& config) {
  return run_training(model, corpus, vocab, config);
}

TrainResult pretrain_qa(BiEncoder& model, const Corpus& qa_corpus, const Vocabulary& vocab,
                        const TrainConfig& config) {
  for (const auto& ex : qa_corpus.split("train"))
    if (ex.gold.size() != 1)
      throw std::runtime_error("pretrain_qa: example '" + ex.id +
                               "' must have exactly one question");
  return run_training(model, qa_corpus, vocab, config);
}

}  // namespace tagforge
