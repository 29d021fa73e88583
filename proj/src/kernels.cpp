#include "tagforge/kernels.hpp"

#include <numeric>
#include <stdexcept>

namespace tagforge {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

std::vector<size_t> identity_order(size_t n) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  return order;
}

void encode_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                  std::vector<Embedding>& out) {
  out.resize(inputs.size());
  const auto n = static_cast<ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = encode(params, inputs[static_cast<size_t>(i)]);
}

void backward_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                    std::span<const double> upstreams, std::span<const size_t> reduce_order,
                    ParamGrads& total) {
  const size_t d = params.dims.dim;
  if (upstreams.size() != inputs.size() * d)
    throw std::invalid_argument("backward_batch: upstream size mismatch");
  if (reduce_order.size() != inputs.size())
    throw std::invalid_argument("backward_batch: reduce_order size mismatch");
  std::vector<RowGrads> rows(inputs.size());
  const auto n = static_cast<ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<size_t>(i);
    rows[u] = encode_backward_row(params, inputs[u], upstreams.subspan(u * d, d));
  }
  for (size_t r : reduce_order) accumulate(total, rows[r], params.dims);
}

void score_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols, double scale,
                  std::vector<double>& scores) {
  const size_t n_cols = cols.size();
  scores.resize(rows.size() * n_cols);
  const auto n = static_cast<ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<size_t>(i);
    for (size_t j = 0; j < n_cols; ++j) scores[u * n_cols + j] = scale * dot(rows[u], cols[j]);
  }
}

void score_backward_rows(std::span<const double> d_scores, std::span<const Embedding> cols,
                         size_t n_rows, double scale, std::vector<double>& d_rows) {
  const size_t n_cols = cols.size();
  const size_t d = n_cols == 0 ? 0 : cols[0].size();
  d_rows.assign(n_rows * d, 0.0);
  const auto n = static_cast<ptrdiff_t>(n_rows);
#pragma omp parallel for schedule(static)
  for (ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<size_t>(i);
    for (size_t j = 0; j < n_cols; ++j) {
      const double g = scale * d_scores[u * n_cols + j];
      for (size_t x = 0; x < d; ++x) d_rows[u * d + x] += g * cols[j][x];
    }
  }
}

void score_backward_cols(std::span<const double> d_scores, std::span<const Embedding> rows,
                         std::span<const size_t> row_order, size_t n_cols, double scale,
                         std::vector<double>& d_cols) {
  const size_t d = rows.empty() ? 0 : rows[0].size();
  d_cols.assign(n_cols * d, 0.0);
  const auto n = static_cast<ptrdiff_t>(n_cols);
#pragma omp parallel for schedule(static)
  for (ptrdiff_t j = 0; j < n; ++j) {
    const auto c = static_cast<size_t>(j);
    for (size_t i : row_order) {
      const double g = scale * d_scores[i * n_cols + c];
      for (size_t x = 0; x < d; ++x) d_cols[c * d + x] += g * rows[i][x];
    }
  }
}

void scan_scores(std::span<const double> matrix, size_t count, size_t dim,
                 std::span<const double> query, double scale, std::vector<double>& scores) {
  if (query.size() != dim) throw std::invalid_argument("scan_scores: query dim mismatch");
  scores.resize(count);
  const auto n = static_cast<ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
  for (ptrdiff_t t = 0; t < n; ++t) {
    const auto u = static_cast<size_t>(t);
    scores[u] = scale * dot(matrix.subspan(u * dim, dim), query);
  }
}

namespace serial {

void encode_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                  std::vector<Embedding>& out) {
  out.resize(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) out[i] = encode(params, inputs[i]);
}

void backward_batch(const EncoderParams& params, std::span<const PackedInput> inputs,
                    std::span<const double> upstreams, std::span<const size_t> reduce_order,
                    ParamGrads& total) {
  const size_t d = params.dims.dim;
  if (upstreams.size() != inputs.size() * d)
    throw std::invalid_argument("backward_batch: upstream size mismatch");
  std::vector<RowGrads> rows(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i)
    rows[i] = encode_backward_row(params, inputs[i], upstreams.subspan(i * d, d));
  for (size_t r : reduce_order) accumulate(total, rows[r], params.dims);
}

void score_matrix(std::span<const Embedding> rows, std::span<const Embedding> cols, double scale,
                  std::vector<double>& scores) {
  const size_t n_cols = cols.size();
  scores.resize(rows.size() * n_cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < n_cols; ++j) scores[i * n_cols + j] = scale * dot(rows[i], cols[j]);
}

void scan_scores(std::span<const double> matrix, size_t count, size_t dim,
                 std::span<const double> query, double scale, std::vector<double>& scores) {
  if (query.size() != dim) throw std::invalid_argument("scan_scores: query dim mismatch");
  scores.resize(count);
  for (size_t t = 0; t < count; ++t) scores[t] = scale * dot(matrix.subspan(t * dim, dim), query);
}

}  // namespace serial

}  // namespace tagforge
