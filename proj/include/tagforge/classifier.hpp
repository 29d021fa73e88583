#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/encoder.hpp"
#include "tagforge/textproc.hpp"

namespace tagforge {

// Closed-set softmax/sigmoid head over the encoder output. Only tags observed
// in the training split are representable; unseen tags cannot be predicted.
struct ClassifierHead {
  std::vector<std::string> label_ids;  // frozen ordering, ascending
  std::vector<double> weight;          // |T| x d row-major
  std::vector<double> bias;            // |T|
};

struct ClassifierModel {
  EncoderParams encoder;
  ClassifierHead head;
  PackConfig pack{};
  bool multi_label = false;  // sigmoid + per-tag BCE instead of softmax
  std::string vocab_file;
  uint64_t vocab_hash = 0;
};

struct ClassifierConfig {
  int batch_size = 20;
  double learning_rate = 1e-3;
  int epochs = 10;
  uint64_t seed = 7;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct ClassifierTrainResult {
  std::vector<double> epoch_mean_loss;
};

// Jointly trains the encoder and head. Single-label corpora use softmax
// cross-entropy; multi-label corpora per-tag binary cross-entropy.
ClassifierModel classifier_train(const EncoderParams& encoder_init, const Corpus& corpus,
                                 const Vocabulary& vocab, const ClassifierConfig& config,
                                 const PackConfig& pack = {64, 42},
                                 ClassifierTrainResult* trace = nullptr);

// Head logits for a context, aligned with head.label_ids.
std::vector<double> classifier_logits(const ClassifierModel& model, const Vocabulary& vocab,
                                      const std::string& text);

// Softmax over logits (single-label inference view).
std::vector<double> classifier_probs(const ClassifierModel& model, const Vocabulary& vocab,
                                     const std::string& text);

// Top-K labels by logit, ties broken by tag id ascending.
std::vector<std::pair<std::string, double>> classifier_rank(const ClassifierModel& model,
                                                            const Vocabulary& vocab,
                                                            const std::string& text, size_t k);

}  // namespace tagforge
