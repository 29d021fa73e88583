#include "tagforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tagforge/rng.hpp"

namespace tagforge {

namespace {

void check_dims(const EncoderDims& dims) {
  if (dims.vocab < Vocabulary::kReserved)
    throw std::invalid_argument("encoder dims: vocab must cover the reserved tokens");
  if (dims.dim < 2) throw std::invalid_argument("encoder dims: dim must be >= 2");
}

// y = M x, M row-major d x d.
void matvec(std::span<const double> m, std::span<const double> x, std::span<double> y, size_t d) {
  for (size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    const double* row = m.data() + i * d;
    for (size_t j = 0; j < d; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// y = M^T x.
void matvec_t(std::span<const double> m, std::span<const double> x, std::span<double> y, size_t d) {
  for (size_t j = 0; j < d; ++j) y[j] = 0.0;
  for (size_t i = 0; i < d; ++i) {
    const double* row = m.data() + i * d;
    for (size_t j = 0; j < d; ++j) y[j] += row[j] * x[i];
  }
}

// Canonical order of non-PAD positions: sorted by token id, stable on ties.
// Equal ids carry identical key/value vectors, so the order of reductions is
// content-determined and encode is exactly permutation-invariant.
std::vector<size_t> canonical_positions(const PackedInput& input, size_t vocab) {
  std::vector<size_t> order;
  order.reserve(input.ids.size());
  for (size_t p = 0; p < input.ids.size(); ++p) {
    const int32_t id = input.ids[p];
    if (id == Vocabulary::kPad) continue;
    if (id < 0 || static_cast<size_t>(id) >= vocab)
      throw std::out_of_range("encode: token id " + std::to_string(id) +
                              " out of range for vocab " + std::to_string(vocab));
    order.push_back(p);
  }
  if (order.empty()) throw std::invalid_argument("encode: input has no non-PAD positions");
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return input.ids[a] < input.ids[b]; });
  return order;
}

struct Forward {
  std::vector<size_t> order;                 // n canonical positions
  size_t n = 0;
  std::vector<double> e, q, k, v;            // n x d each
  std::vector<double> attn;                  // n x n row-stochastic
  std::vector<double> z;                     // n x d attention outputs
  std::vector<double> pooled;                // d
  std::vector<double> out;                   // d, tanh output
  size_t pool_slot = 0;                      // canonical index of position 0 (ClsSlot)
};

Forward run_forward(const EncoderParams& params, const PackedInput& input) {
  const size_t d = params.dims.dim;
  Forward f;
  f.order = canonical_positions(input, params.dims.vocab);
  f.n = f.order.size();
  const size_t n = f.n;
  f.e.resize(n * d);
  f.q.resize(n * d);
  f.k.resize(n * d);
  f.v.resize(n * d);
  for (size_t a = 0; a < n; ++a) {
    const auto tok = static_cast<size_t>(input.ids[f.order[a]]);
    std::copy_n(params.tok_emb.data() + tok * d, d, f.e.data() + a * d);
    std::span<const double> e_a(f.e.data() + a * d, d);
    matvec(params.w_query, e_a, {f.q.data() + a * d, d}, d);
    matvec(params.w_key, e_a, {f.k.data() + a * d, d}, d);
    matvec(params.w_value, e_a, {f.v.data() + a * d, d}, d);
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  f.attn.resize(n * n);
  f.z.assign(n * d, 0.0);
  std::vector<double> logits(n);
  for (size_t a = 0; a < n; ++a) {
    double m = -std::numeric_limits<double>::infinity();
    for (size_t b = 0; b < n; ++b) {
      double acc = 0.0;
      for (size_t j = 0; j < d; ++j) acc += f.q[a * d + j] * f.k[b * d + j];
      logits[b] = acc * inv_sqrt_d;
      m = std::max(m, logits[b]);
    }
    double denom = 0.0;
    for (size_t b = 0; b < n; ++b) {
      f.attn[a * n + b] = std::exp(logits[b] - m);
      denom += f.attn[a * n + b];
    }
    for (size_t b = 0; b < n; ++b) {
      f.attn[a * n + b] /= denom;
      const double w = f.attn[a * n + b];
      for (size_t j = 0; j < d; ++j) f.z[a * d + j] += w * f.v[b * d + j];
    }
  }

  f.pooled.assign(d, 0.0);
  if (params.pooling == Pooling::MeanTokens) {
    for (size_t a = 0; a < n; ++a)
      for (size_t j = 0; j < d; ++j) f.pooled[j] += f.z[a * d + j];
    for (size_t j = 0; j < d; ++j) f.pooled[j] /= static_cast<double>(n);
  } else {
    auto it = std::find(f.order.begin(), f.order.end(), size_t{0});
    if (it == f.order.end())
      throw std::invalid_argument("encode: ClsSlot pooling requires a non-PAD leading token");
    f.pool_slot = static_cast<size_t>(it - f.order.begin());
    std::copy_n(f.z.data() + f.pool_slot * d, d, f.pooled.data());
  }

  f.out.resize(d);
  for (size_t i = 0; i < d; ++i) {
    double acc = params.b_out[i];
    const double* row = params.w_out.data() + i * d;
    for (size_t j = 0; j < d; ++j) acc += row[j] * f.pooled[j];
    f.out[i] = std::tanh(acc);
  }
  return f;
}

}  // namespace

ParamGrads zero_grads(const EncoderDims& dims) {
  ParamGrads g;
  g.tok_emb.assign(dims.vocab * dims.dim, 0.0);
  g.w_query.assign(dims.dim * dims.dim, 0.0);
  g.w_key.assign(dims.dim * dims.dim, 0.0);
  g.w_value.assign(dims.dim * dims.dim, 0.0);
  g.w_out.assign(dims.dim * dims.dim, 0.0);
  g.b_out.assign(dims.dim, 0.0);
  return g;
}

EncoderParams init_encoder(uint64_t seed, const EncoderDims& dims, Pooling pooling) {
  check_dims(dims);
  EncoderParams p;
  p.dims = dims;
  p.pooling = pooling;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.dim));
  Rng rng(seed);
  auto fill = [&](std::vector<double>& v, size_t n) {
    v.resize(n);
    for (auto& x : v) x = rng.normal() * scale;
  };
  fill(p.tok_emb, dims.vocab * dims.dim);
  fill(p.w_query, dims.dim * dims.dim);
  fill(p.w_key, dims.dim * dims.dim);
  fill(p.w_value, dims.dim * dims.dim);
  fill(p.w_out, dims.dim * dims.dim);
  p.b_out.assign(dims.dim, 0.0);
  return p;
}

Embedding encode(const EncoderParams& params, const PackedInput& input, EncodeTrace* trace) {
  check_dims(params.dims);
  Forward f = run_forward(params, input);
  if (trace) {
    trace->order = f.order;
    trace->attn = f.attn;
    trace->pooled = f.pooled;
  }
  return f.out;
}

RowGrads encode_backward_row(const EncoderParams& params, const PackedInput& input,
                             std::span<const double> upstream) {
  const size_t d = params.dims.dim;
  if (upstream.size() != d) throw std::invalid_argument("encode_backward: upstream size mismatch");
  Forward f = run_forward(params, input);
  const size_t n = f.n;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  RowGrads g;
  g.w_query.assign(d * d, 0.0);
  g.w_key.assign(d * d, 0.0);
  g.w_value.assign(d * d, 0.0);
  g.w_out.assign(d * d, 0.0);
  g.b_out.assign(d, 0.0);

  // Affine + tanh head.
  std::vector<double> d_pre(d);
  for (size_t i = 0; i < d; ++i) d_pre[i] = upstream[i] * (1.0 - f.out[i] * f.out[i]);
  for (size_t i = 0; i < d; ++i) {
    g.b_out[i] = d_pre[i];
    for (size_t j = 0; j < d; ++j) g.w_out[i * d + j] = d_pre[i] * f.pooled[j];
  }
  std::vector<double> d_pooled(d);
  matvec_t(params.w_out, d_pre, d_pooled, d);

  // Pooling.
  std::vector<double> d_z(n * d, 0.0);
  if (params.pooling == Pooling::MeanTokens) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t a = 0; a < n; ++a)
      for (size_t j = 0; j < d; ++j) d_z[a * d + j] = d_pooled[j] * inv_n;
  } else {
    for (size_t j = 0; j < d; ++j) d_z[f.pool_slot * d + j] = d_pooled[j];
  }

  // Attention: z_a = sum_b attn[a,b] v_b with attn = softmax of scaled q.k.
  std::vector<double> d_q(n * d, 0.0), d_k(n * d, 0.0), d_v(n * d, 0.0);
  std::vector<double> d_w(n);
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = 0; b < n; ++b) {
      const double w = f.attn[a * n + b];
      double dw = 0.0;
      for (size_t j = 0; j < d; ++j) {
        d_v[b * d + j] += w * d_z[a * d + j];
        dw += d_z[a * d + j] * f.v[b * d + j];
      }
      d_w[b] = dw;
    }
    double inner = 0.0;
    for (size_t b = 0; b < n; ++b) inner += f.attn[a * n + b] * d_w[b];
    for (size_t b = 0; b < n; ++b) {
      const double d_logit = f.attn[a * n + b] * (d_w[b] - inner) * inv_sqrt_d;
      for (size_t j = 0; j < d; ++j) {
        d_q[a * d + j] += d_logit * f.k[b * d + j];
        d_k[b * d + j] += d_logit * f.q[a * d + j];
      }
    }
  }

  // Projections back to embeddings; embedding-table grads stay sparse.
  std::vector<double> d_e(n * d, 0.0);
  std::vector<double> tmp(d);
  for (size_t a = 0; a < n; ++a) {
    std::span<const double> e_a(f.e.data() + a * d, d);
    for (size_t i = 0; i < d; ++i) {
      const double dq = d_q[a * d + i], dk = d_k[a * d + i], dv = d_v[a * d + i];
      for (size_t j = 0; j < d; ++j) {
        g.w_query[i * d + j] += dq * e_a[j];
        g.w_key[i * d + j] += dk * e_a[j];
        g.w_value[i * d + j] += dv * e_a[j];
      }
    }
    matvec_t(params.w_query, {d_q.data() + a * d, d}, tmp, d);
    for (size_t j = 0; j < d; ++j) d_e[a * d + j] += tmp[j];
    matvec_t(params.w_key, {d_k.data() + a * d, d}, tmp, d);
    for (size_t j = 0; j < d; ++j) d_e[a * d + j] += tmp[j];
    matvec_t(params.w_value, {d_v.data() + a * d, d}, tmp, d);
    for (size_t j = 0; j < d; ++j) d_e[a * d + j] += tmp[j];
  }

  // Canonical order groups equal token ids adjacently; fold duplicates.
  for (size_t a = 0; a < n; ++a) {
    const int32_t tok = input.ids[f.order[a]];
    if (g.emb_tokens.empty() || g.emb_tokens.back() != tok) {
      g.emb_tokens.push_back(tok);
      g.emb_grad.insert(g.emb_grad.end(), d_e.begin() + static_cast<ptrdiff_t>(a * d),
                        d_e.begin() + static_cast<ptrdiff_t>((a + 1) * d));
    } else {
      double* dst = g.emb_grad.data() + (g.emb_tokens.size() - 1) * d;
      for (size_t j = 0; j < d; ++j) dst[j] += d_e[a * d + j];
    }
  }
  return g;
}

void accumulate(ParamGrads& total, const RowGrads& row, const EncoderDims& dims) {
  const size_t d = dims.dim;
  for (size_t t = 0; t < row.emb_tokens.size(); ++t) {
    double* dst = total.tok_emb.data() + static_cast<size_t>(row.emb_tokens[t]) * d;
    const double* src = row.emb_grad.data() + t * d;
    for (size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  for (size_t i = 0; i < d * d; ++i) {
    total.w_query[i] += row.w_query[i];
    total.w_key[i] += row.w_key[i];
    total.w_value[i] += row.w_value[i];
    total.w_out[i] += row.w_out[i];
  }
  for (size_t i = 0; i < d; ++i) total.b_out[i] += row.b_out[i];
}

ParamGrads encode_backward(const EncoderParams& params, const PackedInput& input,
                           std::span<const double> upstream) {
  ParamGrads total = zero_grads(params.dims);
  accumulate(total, encode_backward_row(params, input, upstream), params.dims);
  return total;
}

double grad_check(uint64_t seed, double eps, size_t coords) {
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
  const EncoderDims dims{24, 8};
  Rng rng(derive_seed(seed, 0x6772616463686bULL));
  const Pooling pooling = rng.uniform_below(2) == 0 ? Pooling::MeanTokens : Pooling::ClsSlot;
  EncoderParams params = init_encoder(derive_seed(seed, 1), dims, pooling);

  PackedInput input;
  input.ids.push_back(Vocabulary::kCls);
  const size_t n_tokens = 5 + rng.uniform_below(6);
  for (size_t i = 0; i < n_tokens; ++i)
    input.ids.push_back(static_cast<int32_t>(
        Vocabulary::kReserved + rng.uniform_below(dims.vocab - Vocabulary::kReserved)));
  input.length = input.ids.size();

  std::vector<double> upstream(dims.dim);
  for (auto& u : upstream) u = rng.normal();

  const ParamGrads analytic = encode_backward(params, input, upstream);

  struct Group {
    std::vector<double>* values;
    const std::vector<double>* grads;
  };
  std::vector<Group> groups = {
      {&params.tok_emb, &analytic.tok_emb}, {&params.w_query, &analytic.w_query},
      {&params.w_key, &analytic.w_key},     {&params.w_value, &analytic.w_value},
      {&params.w_out, &analytic.w_out},     {&params.b_out, &analytic.b_out},
  };

  auto objective = [&]() {
    const Embedding emb = encode(params, input);
    double acc = 0.0;
    for (size_t j = 0; j < dims.dim; ++j) acc += upstream[j] * emb[j];
    return acc;
  };

  double worst = 0.0;
  for (size_t c = 0; c < coords; ++c) {
    // Round-robin over parameter groups so every group is sampled.
    Group& grp = groups[c % groups.size()];
    const size_t idx = static_cast<size_t>(rng.uniform_below(grp.values->size()));
    const double saved = (*grp.values)[idx];
    (*grp.values)[idx] = saved + eps;
    const double f_plus = objective();
    (*grp.values)[idx] = saved - eps;
    const double f_minus = objective();
    (*grp.values)[idx] = saved;
    const double numeric = (f_plus - f_minus) / (2.0 * eps);
    const double exact = (*grp.grads)[idx];
    const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

}  // namespace tagforge
