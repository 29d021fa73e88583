#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/encoder.hpp"
#include "tagforge/kernels.hpp"
#include "tagforge/textproc.hpp"

namespace tagforge {

// Two towers over one shared vocabulary. The relevance score is
// score_scale * (E_C(c) . E_T(t)).
struct BiEncoder {
  EncoderParams context_tower;
  EncoderParams tag_tower;
  double score_scale = 0.0;  // default 1/sqrt(d)
  PackConfig pack{};
  std::string vocab_file;  // sibling file name recorded in checkpoints
  uint64_t vocab_hash = 0;
};

BiEncoder make_biencoder(uint64_t seed, const EncoderDims& dims, const Vocabulary& vocab,
                         Pooling pooling = Pooling::MeanTokens, const PackConfig& pack = {64, 42});

double dot_score(std::span<const double> a, std::span<const double> b, double scale);

// Eq-1 style score over packed inputs.
double score(const BiEncoder& model, const PackedInput& context, const PackedInput& tag);

// Cross-encoding score: the concatenated [context; tag] input through the
// context tower, dotted against the tag-tower embedding of "is relevant".
double score_ceaa(const BiEncoder& model, const Vocabulary& vocab,
                  const std::string& context_text, const std::string& tag_text);

enum class LossNorm {
  MeanUnmasked,  // divide by the number of unmasked entries (default)
  RowCount,      // divide by the number of rows
};

struct TrainingBatch {
  size_t plain_rows = 0;                    // M
  std::vector<PackedInput> context_inputs;  // M' rows: plain contexts, then CEAA concats
  std::vector<std::string> tag_ids;         // N columns; relevance column last when ceaa
  std::vector<PackedInput> tag_inputs;
  std::vector<uint8_t> labels;  // M' x N
  std::vector<uint8_t> mask;    // M' x N, 1 = pair contributes to the loss
  std::vector<size_t> reduce_order;  // canonical row order for gradient reduction
  bool ceaa = false;

  size_t rows() const { return context_inputs.size(); }
  size_t cols() const { return tag_inputs.size(); }
};

struct BatchOptions {
  bool ceaa = false;
  int negatives = 5;
  bool full_matrix = false;  // unmask CEAA cross terms with y = 0
  PackConfig pack{64, 42};
  uint64_t seed = 0;
};

// Columns are the batch's unique gold tags (ascending id), plus the
// relevance column when CEAA is on. Plain rows score every real tag
// (y = 1 on gold pairs); CEAA rows are one positive and `negatives` negative
// concatenated inputs per context, unmasked only at the relevance column.
// Negative tags come from the batch's non-gold tags, falling back to the
// full vocabulary complement. Sampling is keyed per example id.
TrainingBatch build_batch(const Corpus& corpus, const Vocabulary& vocab,
                          std::span<const size_t> indices, const BatchOptions& options);

struct BceResult {
  double loss = 0.0;
  std::vector<double> d_scores;  // zero on masked entries
};

// Mean binary cross-entropy over unmasked entries, probabilities clamped to
// [1e-12, 1 - 1e-12]. When `row_order` is given the loss sum follows it.
BceResult bce_loss(std::span<const double> scores, std::span<const uint8_t> labels,
                   std::span<const uint8_t> mask, size_t rows, size_t cols,
                   LossNorm norm = LossNorm::MeanUnmasked, std::span<const size_t> row_order = {});

struct TrainConfig {
  int batch_contexts = 20;
  bool ceaa = false;
  int ceaa_negatives = 5;
  bool ceaa_full_matrix = false;
  double learning_rate = 1e-3;  // desk scale; the reference BERT-scale value is 1e-5
  int epochs = 10;
  uint64_t seed = 7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossNorm norm = LossNorm::MeanUnmasked;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
};

// Seeded-shuffled epochs of in-batch-negative BCE training; Adam on both
// towers. Deterministic given the seed. Trailing chunks with fewer than two
// contexts are dropped.
TrainResult train(BiEncoder& model, const Corpus& corpus, const Vocabulary& vocab,
                  const TrainConfig& config);

// Same loop over a question-answering proxy corpus: passages through the
// context tower, their single gold question through the tag tower. Rejects
// examples with more than one gold entry.
TrainResult pretrain_qa(BiEncoder& model, const Corpus& qa_corpus, const Vocabulary& vocab,
                        const TrainConfig& config);

}  // namespace tagforge
