#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tagforge/textproc.hpp"

namespace tagforge {

struct EncoderDims {
  size_t vocab = 0;  // V, including reserved tokens
  size_t dim = 32;   // d
};

enum class Pooling : uint32_t { MeanTokens = 0, ClsSlot = 1 };

// One encoder tower: embedding lookup -> single-head self-attention ->
// masked pooling -> affine + tanh projection. No positional encodings.
struct EncoderParams {
  EncoderDims dims;
  Pooling pooling = Pooling::MeanTokens;
  std::vector<double> tok_emb;  // V x d row-major
  std::vector<double> w_query;  // d x d
  std::vector<double> w_key;    // d x d
  std::vector<double> w_value;  // d x d
  std::vector<double> w_out;    // d x d
  std::vector<double> b_out;    // d
};

using Embedding = std::vector<double>;  // length d, components in [-1, 1]

struct ParamGrads {
  std::vector<double> tok_emb, w_query, w_key, w_value, w_out, b_out;
};

ParamGrads zero_grads(const EncoderDims& dims);

// Gradient contribution of a single input row. Embedding-table gradients are
// kept sparse (one slot per distinct token); dense layers are small.
struct RowGrads {
  std::vector<int32_t> emb_tokens;   // distinct token ids, ascending
  std::vector<double> emb_grad;      // emb_tokens.size() x d
  std::vector<double> w_query, w_key, w_value, w_out;  // d x d each
  std::vector<double> b_out;                           // d
};

// Optional forward trace for inspection and tests.
struct EncodeTrace {
  std::vector<size_t> order;   // canonical position order (sorted by token id)
  std::vector<double> attn;    // n x n row-stochastic weights in canonical order
  std::vector<double> pooled;  // pre-projection hidden state, length d
};

// Deterministic seeded initialization, scale 1/sqrt(d); bias zero.
EncoderParams init_encoder(uint64_t seed, const EncoderDims& dims,
                           Pooling pooling = Pooling::MeanTokens);

// Pure and deterministic. PAD positions are excluded from attention and from
// pooling. All internal reductions run in token-id-canonical order, so any
// permutation of non-CLS tokens yields a bitwise-identical embedding.
Embedding encode(const EncoderParams& params, const PackedInput& input,
                 EncodeTrace* trace = nullptr);

// Exact analytic gradient of (upstream . encode(params, input)) with respect
// to every parameter, as a sparse per-row contribution.
RowGrads encode_backward_row(const EncoderParams& params, const PackedInput& input,
                             std::span<const double> upstream);

void accumulate(ParamGrads& total, const RowGrads& row, const EncoderDims& dims);

// Dense convenience wrapper over encode_backward_row.
ParamGrads encode_backward(const EncoderParams& params, const PackedInput& input,
                           std::span<const double> upstream);

// Samples random params/inputs and compares analytic gradients against
// central finite differences on >= `coords` random coordinates. Returns the
// worst error: |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(uint64_t seed, double eps = 1e-5, size_t coords = 100);

}  // namespace tagforge
