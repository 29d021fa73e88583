// Times the serial reference kernels against the OpenMP production kernels
// and reports the speedup per kernel. Thread count follows OMP_NUM_THREADS.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "tagforge/encoder.hpp"
#include "tagforge/kernels.hpp"
#include "tagforge/rng.hpp"

using namespace tagforge;

namespace {

template <class F>
double best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-18s %10.2f ms %10.2f ms %8.2fx\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  size_t rows = 256, dim = 32, len = 32, vocab = 2000, tags = 20000;
  int reps = 5;
  app.add_option("--rows", rows, "batch rows");
  app.add_option("--dim", dim, "embedding width");
  app.add_option("--len", len, "tokens per row");
  app.add_option("--vocab", vocab, "vocabulary size");
  app.add_option("--tags", tags, "index size for the scan kernel");
  app.add_option("--reps", reps, "repetitions (best-of)");
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel kernels run serially\n");
#endif

  Rng rng(7);
  const EncoderParams params = init_encoder(11, EncoderDims{vocab, dim});
  std::vector<PackedInput> inputs(rows);
  for (auto& in : inputs) {
    in.ids.push_back(Vocabulary::kCls);
    for (size_t t = 0; t < len; ++t)
      in.ids.push_back(static_cast<int32_t>(
          Vocabulary::kReserved + rng.uniform_below(vocab - Vocabulary::kReserved)));
    in.length = in.ids.size();
  }
  std::vector<double> upstreams(rows * dim);
  for (auto& u : upstreams) u = rng.normal();
  const auto order = identity_order(rows);

  std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  std::vector<Embedding> embs;
  report("encode_batch", best_of(reps, [&] { serial::encode_batch(params, inputs, embs); }),
         best_of(reps, [&] { encode_batch(params, inputs, embs); }));

  {
    ParamGrads g1 = zero_grads(params.dims), g2 = zero_grads(params.dims);
    report("backward_batch",
           best_of(reps, [&] { serial::backward_batch(params, inputs, upstreams, order, g1); }),
           best_of(reps, [&] { backward_batch(params, inputs, upstreams, order, g2); }));
  }

  {
    serial::encode_batch(params, inputs, embs);
    std::vector<double> scores;
    report("score_matrix",
           best_of(reps, [&] { serial::score_matrix(embs, embs, 0.25, scores); }),
           best_of(reps, [&] { score_matrix(embs, embs, 0.25, scores); }));
  }

  {
    std::vector<double> matrix(tags * dim);
    for (auto& x : matrix) x = rng.normal();
    std::vector<double> query(dim);
    for (auto& x : query) x = rng.normal();
    std::vector<double> scores;
    report("scan_scores",
           best_of(reps, [&] {
             for (int q = 0; q < 32; ++q) serial::scan_scores(matrix, tags, dim, query, 0.25, scores);
           }),
           best_of(reps, [&] {
             for (int q = 0; q < 32; ++q) scan_scores(matrix, tags, dim, query, 0.25, scores);
           }));
  }
  return 0;
}
