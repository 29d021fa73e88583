#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace tagforge {

struct TagLabel {
  std::string id;
  std::string text;  // human readable, possibly hierarchical ("science >> heat")
};

struct Example {
  std::string id;
  std::string text;
  std::vector<std::string> gold;  // sorted, de-duplicated tag ids
};

// Immutable after load; concurrent reads are safe.
struct Corpus {
  std::vector<TagLabel> tags;  // encounter order from the tag file / first reference
  std::unordered_map<std::string, size_t> tag_pos;
  std::map<std::string, std::vector<Example>> splits;  // names from {train, validation, test}

  bool has_tag(const std::string& id) const { return tag_pos.count(id) != 0; }
  const TagLabel& tag(const std::string& id) const;
  const std::vector<Example>& split(const std::string& name) const;
  void register_tag(const std::string& id, const std::string& text);
};

struct FrequencyBuckets {
  size_t threshold = 0;
  // Sorted, pairwise disjoint; union equals the tag vocabulary.
  std::vector<std::string> frequent;  // train occurrence >  threshold
  std::vector<std::string> few;       // 1 <= occurrence <= threshold
  std::vector<std::string> zero;      // occurrence == 0
};

// Loads a split directory (train.jsonl / validation.jsonl / test.jsonl plus
// optional tags.jsonl) or a single .jsonl file treated as a train-only corpus.
// Example lines: {"id": str, "text": str, "tags": [str, ...]}
// Tag lines:     {"id": str, "text": str}
// Tags referenced but never defined are registered with text = their id.
Corpus load_jsonl(const std::filesystem::path& path);

// Writes tags.jsonl plus one file per present split, in stored order.
void save_jsonl(const Corpus& corpus, const std::filesystem::path& dir);

// Throws std::runtime_error on any invariant violation.
void validate(const Corpus& corpus);

// Partitions the tag vocabulary by train-split occurrence. An example
// containing a tag counts once regardless of how often the tag text repeats.
FrequencyBuckets bucket_tags(const Corpus& corpus, size_t threshold);

// Reduces every train example to exactly one gold tag, sampled uniformly from
// its original gold set. Validation/test splits are left untouched. The draw
// is keyed per example id, so the result is independent of example order and
// idempotent under a fixed seed.
Corpus to_single_label(const Corpus& corpus, uint64_t seed);

uint64_t corpus_content_hash(const Corpus& corpus);

}  // namespace tagforge
