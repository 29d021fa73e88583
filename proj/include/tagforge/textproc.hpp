#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tagforge/corpus.hpp"

namespace tagforge {

// Literal tag text scored against CEAA-concatenated inputs. Its tokens are
// always part of the vocabulary.
inline constexpr const char* kRelevanceTagText = "is relevant";

// Lowercases and splits on every non-alphanumeric boundary. Pure.
std::vector<std::string> word_tokens(const std::string& text);

// Word-level vocabulary with fixed reserved ids. Immutable after build.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kCls = 2;
  static constexpr int32_t kSep = 3;
  static constexpr size_t kReserved = 4;

  // Train-split tokens with frequency >= min_freq, plus all tag-text tokens
  // and the tokens of "is relevant". Order: frequency desc, then lexicographic.
  static Vocabulary build(const Corpus& corpus, size_t min_freq = 1);

  static Vocabulary load_jsonl(const std::filesystem::path& path);
  void save_jsonl(const std::filesystem::path& path) const;

  int32_t id_of(const std::string& token) const;  // UNK fallback
  const std::string& token_of(int32_t id) const;
  size_t size() const { return tokens_.size(); }
  uint64_t content_hash() const;

 private:
  Vocabulary();
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> ids_;
};

// Maps text to token ids with UNK fallback; no CLS/SEP added here.
std::vector<int32_t> tokenize(const Vocabulary& vocab, const std::string& text);

struct PackConfig {
  size_t max_len = 512;      // total budget including CLS/SEP
  size_t context_max = 490;  // context tokens in a concatenated input
};

struct PackedInput {
  std::vector<int32_t> ids;  // CLS first
  size_t length = 0;         // non-PAD positions
  std::optional<size_t> separator;  // SEP index, present only for concatenated inputs
};

// [CLS] + tokens, truncated to cfg.max_len total.
PackedInput pack_single(const Vocabulary& vocab, const std::string& text,
                        const PackConfig& cfg = {});

// [CLS] + context (at most cfg.context_max tokens) + [SEP] + tag (clipped to
// the remaining budget under cfg.max_len).
PackedInput pack_concat(const Vocabulary& vocab, const std::string& context_text,
                        const std::string& tag_text, const PackConfig& cfg = {});

}  // namespace tagforge
