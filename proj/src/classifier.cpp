#include "tagforge/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "tagforge/kernels.hpp"
#include "tagforge/rng.hpp"

namespace tagforge {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct AdamState {
  std::vector<double> m, v;
};

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state,
               uint64_t t, const ClassifierConfig& cfg) {
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double corr1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grads[i];
    state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grads[i] * grads[i];
    params[i] -= cfg.learning_rate * (state.m[i] / corr1) /
                 (std::sqrt(state.v[i] / corr2) + cfg.adam_eps);
  }
}

std::vector<double> head_logits(const ClassifierHead& head, std::span<const double> hidden) {
  const size_t d = hidden.size();
  std::vector<double> logits(head.label_ids.size());
  for (size_t t = 0; t < logits.size(); ++t) {
    double acc = head.bias[t];
    const double* row = head.weight.data() + t * d;
    for (size_t j = 0; j < d; ++j) acc += row[j] * hidden[j];
    logits[t] = acc;
  }
  return logits;
}

}  // namespace

ClassifierModel classifier_train(const EncoderParams& encoder_init, const Corpus& corpus,
                                 const Vocabulary& vocab, const ClassifierConfig& config,
                                 const PackConfig& pack, ClassifierTrainResult* trace) {
  const auto& train_split = corpus.split("train");
  if (train_split.empty()) throw std::runtime_error("classifier_train: empty train split");

  ClassifierModel model;
  model.encoder = encoder_init;
  model.pack = pack;
  model.vocab_hash = vocab.content_hash();

  // Label set: tags observed in the training split, frozen ascending.
  std::set<std::string> observed;
  bool multi = false;
  for (const auto& ex : train_split) {
    for (const auto& t : ex.gold) observed.insert(t);
    multi = multi || ex.gold.size() > 1;
  }
  model.multi_label = multi;
  model.head.label_ids.assign(observed.begin(), observed.end());
  const size_t n_labels = model.head.label_ids.size();
  const size_t d = model.encoder.dims.dim;

  Rng init_rng(derive_seed(config.seed, 0x686561ULL));
  model.head.weight.resize(n_labels * d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& w : model.head.weight) w = init_rng.normal() * scale;
  model.head.bias.assign(n_labels, 0.0);

  std::map<std::string, size_t> label_pos;
  for (size_t t = 0; t < n_labels; ++t) label_pos[model.head.label_ids[t]] = t;

  // Pre-pack all contexts once.
  std::vector<PackedInput> packed;
  packed.reserve(train_split.size());
  for (const auto& ex : train_split) packed.push_back(pack_single(vocab, ex.text, pack));

  Rng shuffle_rng(derive_seed(config.seed, 0x736875ULL));
  std::vector<size_t> indices(train_split.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  AdamState head_w_state, head_b_state;
  struct EncAdam {
    AdamState emb, wq, wk, wv, wo, bo;
  } enc_state;
  uint64_t step = 0;

  std::vector<Embedding> hidden;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double loss_sum = 0.0;
    size_t n_batches = 0;
    const size_t bs = static_cast<size_t>(std::max(1, config.batch_size));
    for (size_t start = 0; start < indices.size(); start += bs) {
      const size_t count = std::min(bs, indices.size() - start);
      std::vector<PackedInput> batch_inputs;
      std::vector<size_t> batch_rows(indices.begin() + static_cast<ptrdiff_t>(start),
                                     indices.begin() + static_cast<ptrdiff_t>(start + count));
      for (size_t r : batch_rows) batch_inputs.push_back(packed[r]);

      encode_batch(model.encoder, batch_inputs, hidden);

      std::vector<double> head_w_grad(n_labels * d, 0.0);
      std::vector<double> head_b_grad(n_labels, 0.0);
      std::vector<double> upstreams(count * d, 0.0);
      double batch_loss = 0.0;

      // Canonical row order keeps gradient sums independent of shuffling ties.
      std::vector<size_t> order = identity_order(count);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return train_split[batch_rows[a]].id < train_split[batch_rows[b]].id;
      });

      for (size_t o : order) {
        const Example& ex = train_split[batch_rows[o]];
        const auto logits = head_logits(model.head, hidden[o]);
        std::vector<double> d_logits(n_labels);
        if (!model.multi_label) {
          double m = logits[0];
          for (double l : logits) m = std::max(m, l);
          double denom = 0.0;
          std::vector<double> p(n_labels);
          for (size_t t = 0; t < n_labels; ++t) {
            p[t] = std::exp(logits[t] - m);
            denom += p[t];
          }
          const size_t gold = label_pos.at(ex.gold.front());
          for (size_t t = 0; t < n_labels; ++t) {
            p[t] /= denom;
            d_logits[t] = p[t];
          }
          d_logits[gold] -= 1.0;
          batch_loss -= std::log(std::max(p[gold], 1e-300));
          for (auto& g : d_logits) g /= static_cast<double>(count);
        } else {
          for (size_t t = 0; t < n_labels; ++t) {
            const bool y = std::binary_search(ex.gold.begin(), ex.gold.end(),
                                              model.head.label_ids[t]);
            const double p = stable_sigmoid(logits[t]);
            const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
            batch_loss -= y ? std::log(pc) : std::log(1.0 - pc);
            d_logits[t] = (p - (y ? 1.0 : 0.0)) / static_cast<double>(count * n_labels);
          }
        }
        for (size_t t = 0; t < n_labels; ++t) {
          const double g = d_logits[t];
          double* wrow = head_w_grad.data() + t * d;
          const double* w = model.head.weight.data() + t * d;
          for (size_t j = 0; j < d; ++j) {
            wrow[j] += g * hidden[o][j];
            upstreams[o * d + j] += g * w[j];
          }
          head_b_grad[t] += g;
        }
      }
      batch_loss /= static_cast<double>(model.multi_label ? count * n_labels : count);

      ParamGrads enc_grads = zero_grads(model.encoder.dims);
      backward_batch(model.encoder, batch_inputs, upstreams, order, enc_grads);

      ++step;
      adam_step(model.head.weight, head_w_grad, head_w_state, step, config);
      adam_step(model.head.bias, head_b_grad, head_b_state, step, config);
      adam_step(model.encoder.tok_emb, enc_grads.tok_emb, enc_state.emb, step, config);
      adam_step(model.encoder.w_query, enc_grads.w_query, enc_state.wq, step, config);
      adam_step(model.encoder.w_key, enc_grads.w_key, enc_state.wk, step, config);
      adam_step(model.encoder.w_value, enc_grads.w_value, enc_state.wv, step, config);
      adam_step(model.encoder.w_out, enc_grads.w_out, enc_state.wo, step, config);
      adam_step(model.encoder.b_out, enc_grads.b_out, enc_state.bo, step, config);

      loss_sum += batch_loss;
      ++n_batches;
    }
    if (trace) trace->epoch_mean_loss.push_back(loss_sum / static_cast<double>(n_batches));
  }
  return model;
}

std::vector<double> classifier_logits(const ClassifierModel& model, const Vocabulary& vocab,
                                      const std::string& text) {
  if (vocab.content_hash() != model.vocab_hash)
    throw std::runtime_error("classifier: vocabulary does not match the model");
  const Embedding h = encode(model.encoder, pack_single(vocab, text, model.pack));
  return head_logits(model.head, h);
}

std::vector<double> classifier_probs(const ClassifierModel& model, const Vocabulary& vocab,
                                     const std::string& text) {
  auto logits = classifier_logits(model, vocab, text);
  double m = logits.empty() ? 0.0 : logits[0];
  for (double l : logits) m = std::max(m, l);
  double denom = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - m);
    denom += l;
  }
  for (auto& l : logits) l /= denom;
  return logits;
}

std::vector<std::pair<std::string, double>> classifier_rank(const ClassifierModel& model,
                                                            const Vocabulary& vocab,
                                                            const std::string& text, size_t k) {
  if (k == 0) throw std::invalid_argument("classifier_rank: K must be >= 1");
  const auto logits = classifier_logits(model, vocab, text);
  std::vector<size_t> order = identity_order(logits.size());
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return model.head.label_ids[a] < model.head.label_ids[b];
  });
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < std::min(k, order.size()); ++i)
    out.emplace_back(model.head.label_ids[order[i]], logits[order[i]]);
  return out;
}

}  // namespace tagforge
