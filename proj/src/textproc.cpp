#include "tagforge/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "tagforge/hash.hpp"

namespace tagforge {

namespace {

const std::vector<std::string> kReservedTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

}  // namespace

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto& t : kReservedTokens) add(t);
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const Corpus& corpus, size_t min_freq) {
  if (min_freq == 0) throw std::invalid_argument("build_vocab: min_freq must be positive");
  const auto& train = corpus.split("train");
  if (train.empty()) throw std::runtime_error("build_vocab: empty train split");

  std::map<std::string, size_t> freq;
  for (const auto& ex : train)
    for (const auto& tok : word_tokens(ex.text)) ++freq[tok];

  // Tag-text tokens and the relevance-tag tokens are always encodable.
  std::map<std::string, size_t> forced;
  for (const auto& tag : corpus.tags)
    for (const auto& tok : word_tokens(tag.text)) forced.emplace(tok, 0);
  for (const auto& tok : word_tokens(kRelevanceTagText)) forced.emplace(tok, 0);
  for (auto& [tok, n] : forced) {
    auto it = freq.find(tok);
    if (it != freq.end()) n = it->second;
  }

  std::vector<std::pair<std::string, size_t>> entries;
  for (const auto& [tok, n] : freq)
    if (n >= min_freq && !forced.count(tok)) entries.emplace_back(tok, n);
  for (const auto& [tok, n] : forced) entries.emplace_back(tok, n);
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, n] : entries) vocab.add(tok);
  return vocab;
}

Vocabulary Vocabulary::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::pair<std::string, int32_t>> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed JSON (" + e.what() + ")");
    }
    entries.emplace_back(obj.at("token").get<std::string>(), obj.at("id").get<int32_t>());
  }
  Vocabulary vocab;
  for (const auto& [tok, id] : entries) {
    if (id < static_cast<int32_t>(kReserved)) {
      if (tok != kReservedTokens[static_cast<size_t>(id)])
        throw std::runtime_error("vocabulary " + path.string() + ": reserved id " +
                                 std::to_string(id) + " bound to '" + tok + "'");
      continue;
    }
    if (id != static_cast<int32_t>(vocab.tokens_.size()))
      throw std::runtime_error("vocabulary " + path.string() + ": ids not dense at '" + tok + "'");
    vocab.add(tok);
  }
  return vocab;
}

void Vocabulary::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    nlohmann::json obj{{"token", tokens_[i]}, {"id", static_cast<int32_t>(i)}};
    out << obj.dump() << '\n';
  }
}

int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::vector<int32_t> tokenize(const Vocabulary& vocab, const std::string& text) {
  std::vector<int32_t> out;
  for (const auto& tok : word_tokens(text)) out.push_back(vocab.id_of(tok));
  return out;
}

PackedInput pack_single(const Vocabulary& vocab, const std::string& text, const PackConfig& cfg) {
  if (cfg.max_len < 1) throw std::invalid_argument("pack_single: max_len must be >= 1");
  PackedInput packed;
  packed.ids.push_back(Vocabulary::kCls);
  for (int32_t id : tokenize(vocab, text)) {
    if (packed.ids.size() >= cfg.max_len) break;
    packed.ids.push_back(id);
  }
  packed.length = packed.ids.size();
  return packed;
}

PackedInput pack_concat(const Vocabulary& vocab, const std::string& context_text,
                        const std::string& tag_text, const PackConfig& cfg) {
  if (cfg.max_len < 3) throw std::invalid_argument("pack_concat: max_len must be >= 3");
  if (cfg.context_max + 2 > cfg.max_len)
    throw std::invalid_argument("pack_concat: context_max leaves no room for [CLS]/[SEP]");
  PackedInput packed;
  packed.ids.push_back(Vocabulary::kCls);
  const auto context_ids = tokenize(vocab, context_text);
  const size_t n_context = std::min(context_ids.size(), cfg.context_max);
  packed.ids.insert(packed.ids.end(), context_ids.begin(),
                    context_ids.begin() + static_cast<ptrdiff_t>(n_context));
  packed.separator = packed.ids.size();
  packed.ids.push_back(Vocabulary::kSep);
  for (int32_t id : tokenize(vocab, tag_text)) {
    if (packed.ids.size() >= cfg.max_len) break;
    packed.ids.push_back(id);
  }
  packed.length = packed.ids.size();
  return packed;
}

}  // namespace tagforge
