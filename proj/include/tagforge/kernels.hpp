#pragma once

#include <span>
#include <vector>

#include "tagforge/encoder.hpp"

namespace tagforge {

// Data-parallel kernels behind training, retrieval and evaluation. The
// production variants parallelize over independent output slots with OpenMP;
// tagforge::serial holds plain-loop reference implementations. Both variants
// produce bitwise-identical results: per-slot work is shared code, and every
// cross-slot reduction runs serially in a canonical order.

// One embedding per input row.
void encode_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                  std::vector<Embedding>& out);

// Accumulates per-row gradients into `total`. Rows are differentiated in
// parallel; the reduction applies them serially following `reduce_order`
// (pass an identity permutation when no canonical order is needed).
void backward_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                    std::span<const double> upstreams,  // rows x d
                    std::span<const size_t> reduce_order, ParamGrads& total);

// scores[i*cols.size()+j] = scale * (rows[i] . cols[j]).
void score_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols, double scale,
                  std::vector<double>& scores);

// Upstream gradients through the score matrix.
// d_rows[i] = scale * sum_j d_scores[i,j] * cols[j]
void score_backward_rows(std::span<const double> d_scores, std::span<const Embedding> cols,
                         size_t n_rows, double scale, std::vector<double>& d_rows);
// d_cols[j] = scale * sum_i d_scores[i,j] * rows[i], rows visited in
// `row_order` so the sum is independent of batch assembly order.
void score_backward_cols(std::span<const double> d_scores, std::span<const Embedding> rows,
                         std::span<const size_t> row_order, size_t n_cols, double scale,
                         std::vector<double>& d_cols);

// scores[t] = scale * (matrix row t . query); the flat index scan.
void scan_scores(std::span<const double> matrix, size_t count, size_t dim,
                 std::span<const double> query, double scale, std::vector<double>& scores);

namespace serial {
void encode_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                  std::vector<Embedding>& out);
void backward_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                    std::span<const double> upstreams, std::span<const size_t> reduce_order,
                    ParamGrads& total);
void score_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols, double scale,
                  std::vector<double>& scores);
void scan_scores(std::span<const double> matrix, size_t count, size_t dim,
                 std::span<const double> query, double scale, std::vector<double>& scores);
}  // namespace serial

std::vector<size_t> identity_order(size_t n);

}  // namespace tagforge
