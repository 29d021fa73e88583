#include "tagforge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tagforge/hash.hpp"
#include "tagforge/rng.hpp"

namespace tagforge {

namespace {

const std::vector<Example> kEmptySplit;

const std::set<std::string> kSplitNames = {"train", "validation", "test"};

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void parse_example_file(const std::filesystem::path& file, const std::string& split_name,
                        Corpus& corpus) {
  std::ifstream in(file);
  if (!in) fail("cannot open " + file.string());
  auto& examples = corpus.splits[split_name];
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(file.string() + ":" + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") || !obj.contains("tags"))
      fail(file.string() + ":" + std::to_string(line_no) +
           ": expected object with keys id, text, tags");
    Example ex;
    try {
      ex.id = obj.at("id").get<std::string>();
      ex.text = obj.at("text").get<std::string>();
      ex.gold = obj.at("tags").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      fail(file.string() + ":" + std::to_string(line_no) + ": bad field type (" + e.what() + ")");
    }
    if (!seen_ids.insert(ex.id).second)
      fail(file.string() + ":" + std::to_string(line_no) + ": duplicate example id '" + ex.id +
           "' within split " + split_name);
    if (ex.gold.empty())
      fail(file.string() + ":" + std::to_string(line_no) + ": empty tag list on a " + split_name +
           " example");
    ex.gold = sorted_unique(std::move(ex.gold));
    for (const auto& t : ex.gold)
      if (!corpus.has_tag(t)) corpus.register_tag(t, t);  // fallback: text = id
    examples.push_back(std::move(ex));
  }
}

void parse_tag_file(const std::filesystem::path& file, Corpus& corpus) {
  std::ifstream in(file);
  if (!in) fail("cannot open " + file.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(file.string() + ":" + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("text"))
      fail(file.string() + ":" + std::to_string(line_no) + ": expected object with keys id, text");
    const auto id = obj.at("id").get<std::string>();
    const auto text = obj.at("text").get<std::string>();
    if (corpus.has_tag(id))
      fail(file.string() + ":" + std::to_string(line_no) + ": duplicate tag id '" + id + "'");
    if (text.empty())
      fail(file.string() + ":" + std::to_string(line_no) + ": empty text for tag '" + id + "'");
    corpus.register_tag(id, text);
  }
}

void write_examples(const std::filesystem::path& file, const std::vector<Example>& examples) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail("cannot write " + file.string());
  for (const auto& ex : examples) {
    nlohmann::json obj{{"id", ex.id}, {"text", ex.text}, {"tags", ex.gold}};
    out << obj.dump() << '\n';
  }
}

}  // namespace

const TagLabel& Corpus::tag(const std::string& id) const {
  auto it = tag_pos.find(id);
  if (it == tag_pos.end()) fail("unknown tag id '" + id + "'");
  return tags[it->second];
}

const std::vector<Example>& Corpus::split(const std::string& name) const {
  auto it = splits.find(name);
  return it == splits.end() ? kEmptySplit : it->second;
}

void Corpus::register_tag(const std::string& id, const std::string& text) {
  if (has_tag(id)) fail("tag '" + id + "' already registered");
  tag_pos.emplace(id, tags.size());
  tags.push_back(TagLabel{id, text});
}

Corpus load_jsonl(const std::filesystem::path& path) {
  Corpus corpus;
  if (std::filesystem::is_directory(path)) {
    const auto tag_file = path / "tags.jsonl";
    if (std::filesystem::exists(tag_file)) parse_tag_file(tag_file, corpus);
    bool any = false;
    for (const auto& name : kSplitNames) {
      const auto file = path / (name + ".jsonl");
      if (!std::filesystem::exists(file)) continue;
      parse_example_file(file, name, corpus);
      any = true;
    }
    if (!any) fail("no split files (train/validation/test.jsonl) under " + path.string());
  } else if (std::filesystem::exists(path)) {
    parse_example_file(path, "train", corpus);
  } else {
    fail("no such file or directory: " + path.string());
  }
  validate(corpus);
  return corpus;
}

void save_jsonl(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "tags.jsonl", std::ios::binary);
    if (!out) fail("cannot write " + (dir / "tags.jsonl").string());
    for (const auto& t : corpus.tags) {
      nlohmann::json obj{{"id", t.id}, {"text", t.text}};
      out << obj.dump() << '\n';
    }
  }
  for (const auto& [name, examples] : corpus.splits)
    write_examples(dir / (name + ".jsonl"), examples);
}

void validate(const Corpus& corpus) {
  std::set<std::string> tag_ids;
  for (const auto& t : corpus.tags) {
    if (t.text.empty()) fail("tag '" + t.id + "' has empty text");
    if (!tag_ids.insert(t.id).second) fail("duplicate tag id '" + t.id + "'");
  }
  if (corpus.tag_pos.size() != corpus.tags.size()) fail("tag position map out of sync");
  for (const auto& [name, examples] : corpus.splits) {
    if (!kSplitNames.count(name)) fail("unknown split name '" + name + "'");
    std::set<std::string> ids;
    for (const auto& ex : examples) {
      if (!ids.insert(ex.id).second)
        fail("duplicate example id '" + ex.id + "' within split " + name);
      if (ex.gold.empty()) fail("example '" + ex.id + "' in split " + name + " has no gold tags");
      for (const auto& t : ex.gold)
        if (!corpus.has_tag(t))
          fail("example '" + ex.id + "' references unknown tag '" + t + "'");
    }
  }
}

FrequencyBuckets bucket_tags(const Corpus& corpus, size_t threshold) {
  if (threshold == 0) throw std::invalid_argument("bucket_tags: threshold must be positive");
  if (corpus.split("train").empty()) fail("bucket_tags: empty train split");
  std::map<std::string, size_t> counts;
  for (const auto& t : corpus.tags) counts[t.id] = 0;
  for (const auto& ex : corpus.split("train"))
    for (const auto& t : ex.gold) ++counts[t];  // gold is de-duplicated per example
  FrequencyBuckets out;
  out.threshold = threshold;
  for (const auto& [id, n] : counts) {
    if (n > threshold)
      out.frequent.push_back(id);
    else if (n >= 1)
      out.few.push_back(id);
    else
      out.zero.push_back(id);
  }
  return out;
}

Corpus to_single_label(const Corpus& corpus, uint64_t seed) {
  Corpus out = corpus;
  auto it = out.splits.find("train");
  if (it == out.splits.end()) return out;
  for (auto& ex : it->second) {
    if (ex.gold.size() <= 1) continue;
    Rng rng(derive_seed(seed, fnv1a64(ex.id)));
    const size_t pick = static_cast<size_t>(rng.uniform_below(ex.gold.size()));
    ex.gold = {ex.gold[pick]};
  }
  return out;
}

uint64_t corpus_content_hash(const Corpus& corpus) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : corpus.tags) {
    h = fnv1a64(t.id, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(t.text, h);
    h = fnv1a64("\n", h);
  }
  for (const auto& [name, examples] : corpus.splits) {
    h = fnv1a64(name, h);
    for (const auto& ex : examples) {
      h = fnv1a64(ex.id, h);
      h = fnv1a64("\x1f", h);
      h = fnv1a64(ex.text, h);
      for (const auto& t : ex.gold) {
        h = fnv1a64("\x1f", h);
        h = fnv1a64(t, h);
      }
      h = fnv1a64("\n", h);
    }
  }
  return h;
}

}  // namespace tagforge
