#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "tagforge/corpus.hpp"

namespace tagforge {

// Desk-scale stand-in for the real tagging corpora and for the QA corpus
// used by transfer pretraining. Tags own hierarchical names and distinct
// salient-term distributions; contexts mix their gold tags' salient terms
// with noise, so the task carries a recoverable lexical signal.
struct SynthConfig {
  size_t n_tags = 100;
  size_t n_contexts = 2000;
  size_t vocab_size = 600;
  double mean_labels = 2.5;     // 1.0 for a single-label corpus
  double zipf_exponent = 1.1;   // tag frequency skew
  size_t tokens_per_context = 20;
  double noise_rate = 0.05;     // probability of an off-topic token
  size_t salient_per_tag = 8;
  // Probability that a salient draw picks one of the two terms shown in the
  // tag's name. Low values mirror the weak lexical overlap between tag names
  // and contexts in the real corpora; the rest of the salient mass is only
  // recoverable by learning the association.
  double name_leak = 0.03;
  // Probability that each secondary gold tag is drawn from the primary tag's
  // chapter instead of the global distribution; gold sets then form topical
  // clusters the way real multi-label corpora do.
  double label_cluster = 0.5;
  // Fraction of tags withheld from train-split gold sets; they still appear
  // in validation/test gold, giving the corpus a genuine zero-shot bucket.
  double zero_shot_fraction = 0.0;
  uint64_t seed = 7;
};

void validate(const SynthConfig& config);

// Deterministic per seed; splits 80/10/10. The optional sidecar receives the
// ground-truth term distributions (diagnostics only, never read by training).
Corpus generate(const SynthConfig& config, nlohmann::json* sidecar = nullptr);

// Passage -> question pairs: each passage is built from one tag's salient
// terms plus noise, and its single "question" subsamples the passage's most
// salient terms. Questions play the tag role in the corpus shape.
Corpus generate_qa_proxy(const SynthConfig& config, nlohmann::json* sidecar = nullptr);

}  // namespace tagforge
