#include "tagforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "tagforge/rng.hpp"

namespace tagforge {

namespace {

// Pronounceable pseudo-words: base-20 consonant-vowel syllables.
std::string make_word(size_t i) {
  static const char* kConsonants = "bdfgklmnprstvz";  // 14
  static const char* kVowels = "aeiou";               // 5
  std::string w;
  size_t x = i;
  for (int s = 0; s < 3; ++s) {
    w.push_back(kConsonants[x % 14]);
    x /= 14;
    w.push_back(kVowels[x % 5]);
    x /= 5;
  }
  if (x > 0) w += std::to_string(x);
  return w;
}

std::vector<std::string> word_pool(size_t n) {
  std::vector<std::string> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = make_word(i);
  return pool;
}

std::string zero_pad(size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

struct TagSpec {
  std::string id;
  std::string text;
  std::vector<std::string> salient;
  double weight = 0.0;  // Zipf mass
};

// Zipf sampling over tag ranks via the cumulative table.
struct ZipfSampler {
  std::vector<double> cumulative;
  size_t draw(Rng& rng) const {
    const double u = rng.uniform01() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<size_t>(it - cumulative.begin()), cumulative.size() - 1);
  }
};

std::vector<TagSpec> make_tags(const SynthConfig& cfg, const std::vector<std::string>& pool,
                               Rng& rng) {
  const size_t n_subjects = std::max<size_t>(1, cfg.n_tags / 20);
  const size_t n_chapters = std::max<size_t>(1, cfg.n_tags / 5);
  std::vector<std::string> subjects(n_subjects), chapters(n_chapters);
  for (auto& s : subjects) s = pool[rng.uniform_below(pool.size())];
  for (auto& c : chapters) c = pool[rng.uniform_below(pool.size())];

  // Tags in one chapter draw their salient terms from a shared sub-pool, so
  // related tags share vocabulary and an unseen tag stays reachable through
  // terms its chapter siblings were trained on.
  const size_t chapter_pool_size = std::min(pool.size(), cfg.salient_per_tag * 3);
  std::vector<std::vector<size_t>> chapter_pools(n_chapters);
  for (auto& cp : chapter_pools) {
    std::set<size_t> picks;
    while (picks.size() < chapter_pool_size)
      picks.insert(static_cast<size_t>(rng.uniform_below(pool.size())));
    cp.assign(picks.begin(), picks.end());
  }

  std::vector<TagSpec> tags(cfg.n_tags);
  std::set<std::vector<std::string>> seen_sets;
  for (size_t i = 0; i < cfg.n_tags; ++i) {
    TagSpec& tag = tags[i];
    tag.id = "t" + zero_pad(i, 4);
    const auto& cpool = chapter_pools[i % n_chapters];
    // Half the salient terms are private to the tag (clean identity even for
    // rarely observed tags), half come from the chapter pool (shared
    // vocabulary that keeps unseen tags reachable). The name shows the two
    // leading private terms and one shared term.
    const size_t n_shared = std::min(cfg.salient_per_tag / 2, cpool.size());
    const size_t n_private = cfg.salient_per_tag - n_shared;
    for (int attempt = 0;; ++attempt) {
      std::set<size_t> private_picks;
      while (private_picks.size() < n_private)
        private_picks.insert(static_cast<size_t>(rng.uniform_below(pool.size())));
      std::set<size_t> shared_picks;
      while (shared_picks.size() < n_shared)
        shared_picks.insert(cpool[rng.uniform_below(cpool.size())]);
      std::vector<size_t> privates(private_picks.begin(), private_picks.end());
      std::vector<size_t> shared(shared_picks.begin(), shared_picks.end());
      rng.shuffle(privates);
      rng.shuffle(shared);
      std::vector<std::string> salient;
      if (!privates.empty()) salient.push_back(pool[privates[0]]);
      if (privates.size() > 1) salient.push_back(pool[privates[1]]);
      if (!shared.empty()) salient.push_back(pool[shared[0]]);
      for (size_t k = 2; k < privates.size(); ++k) salient.push_back(pool[privates[k]]);
      for (size_t k = 1; k < shared.size(); ++k) salient.push_back(pool[shared[k]]);
      if (seen_sets.insert(salient).second) {
        tag.salient = std::move(salient);
        break;
      }
      if (attempt > 64)
        throw std::runtime_error("synth: vocabulary too small for distinct salient sets");
    }
    const std::string& subject = subjects[i % n_subjects];
    const std::string& chapter = chapters[i % n_chapters];
    tag.text = subject + " >> " + chapter + " >> " + tag.salient[0] + " " + tag.salient[1] + " " +
               tag.salient[2];
    tag.weight = 1.0 / std::pow(static_cast<double>(i + 1), cfg.zipf_exponent);
  }
  return tags;
}

ZipfSampler make_sampler(const std::vector<TagSpec>& tags) {
  ZipfSampler sampler;
  double acc = 0.0;
  for (const auto& t : tags) {
    acc += t.weight;
    sampler.cumulative.push_back(acc);
  }
  return sampler;
}

void assign_splits(Corpus& corpus, std::vector<Example> examples) {
  const size_t n = examples.size();
  const size_t n_train = n * 8 / 10;
  const size_t n_val = n / 10;
  corpus.splits["train"] = {};
  corpus.splits["validation"] = {};
  corpus.splits["test"] = {};
  for (size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train            ? corpus.splits["train"]
                : i < n_train + n_val ? corpus.splits["validation"]
                                      : corpus.splits["test"];
    dst.push_back(std::move(examples[i]));
  }
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_tags == 0) throw std::invalid_argument("synth: n_tags must be positive");
  if (cfg.vocab_size == 0) throw std::invalid_argument("synth: vocab_size must be positive");
  if (cfg.tokens_per_context == 0)
    throw std::invalid_argument("synth: tokens_per_context must be positive");
  if (cfg.salient_per_tag < 4)
    throw std::invalid_argument("synth: salient_per_tag must be >= 4 (3 name terms + body)");
  if (cfg.mean_labels < 1.0) throw std::invalid_argument("synth: mean_labels must be >= 1");
  if (!(cfg.noise_rate >= 0.0 && cfg.noise_rate < 1.0))
    throw std::invalid_argument("synth: noise_rate must lie in [0, 1)");
  if (!(cfg.name_leak >= 0.0 && cfg.name_leak <= 1.0))
    throw std::invalid_argument("synth: name_leak must lie in [0, 1]");
  if (!(cfg.label_cluster >= 0.0 && cfg.label_cluster <= 1.0))
    throw std::invalid_argument("synth: label_cluster must lie in [0, 1]");
  if (!(cfg.zero_shot_fraction >= 0.0 && cfg.zero_shot_fraction <= 0.5))
    throw std::invalid_argument("synth: zero_shot_fraction must lie in [0, 0.5]");
  if (cfg.vocab_size < cfg.salient_per_tag * 2)
    throw std::runtime_error("synth: vocabulary too small for distinct salient sets");
}

Corpus generate(const SynthConfig& cfg, nlohmann::json* sidecar) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, 0x7461677321ULL));
  const auto pool = word_pool(cfg.vocab_size);
  const auto tags = make_tags(cfg, pool, rng);
  const auto sampler = make_sampler(tags);

  Corpus corpus;
  for (const auto& t : tags) corpus.register_tag(t.id, t.text);

  // Tags withheld from train gold: every k-th rank, so the held-out set
  // spans the frequency spectrum.
  std::vector<bool> holdout(cfg.n_tags, false);
  if (cfg.zero_shot_fraction > 0.0) {
    const size_t stride = static_cast<size_t>(std::llround(1.0 / cfg.zero_shot_fraction));
    for (size_t i = 1; i < cfg.n_tags; i += std::max<size_t>(2, stride)) holdout[i] = true;
  }

  const size_t n_train = cfg.n_contexts * 8 / 10;
  std::vector<Example> examples;
  examples.reserve(cfg.n_contexts);
  for (size_t i = 0; i < cfg.n_contexts; ++i) {
    Example ex;
    ex.id = "c" + zero_pad(i, 5);
    const bool train_side = i < n_train;

    // Label count: 1 + Poisson(mean_labels - 1), clamped to the tag count.
    size_t n_labels = 1;
    const double extra = cfg.mean_labels - 1.0;
    if (extra > 0.0) {
      const double limit = std::exp(-extra);
      double p = 1.0;
      while (true) {
        p *= 1.0 - rng.uniform01();
        if (p <= limit) break;
        ++n_labels;
      }
    }
    n_labels = std::min(n_labels, cfg.n_tags);

    auto admissible = [&](size_t t) { return !(train_side && holdout[t]); };

    // Primary tag from the global Zipf; secondaries cluster in its chapter.
    const size_t n_chapters = std::max<size_t>(1, cfg.n_tags / 5);
    std::set<size_t> gold;
    size_t primary = sampler.draw(rng);
    while (!admissible(primary)) primary = sampler.draw(rng);
    gold.insert(primary);
    size_t guard = 0;
    while (gold.size() < n_labels && guard++ < 64 * n_labels) {
      if (rng.uniform01() < cfg.label_cluster) {
        const size_t sibling = (primary % n_chapters) + n_chapters * rng.uniform_below(
            (cfg.n_tags + n_chapters - 1 - primary % n_chapters) / n_chapters);
        if (sibling < cfg.n_tags && admissible(sibling)) gold.insert(sibling);
      } else {
        const size_t draw = sampler.draw(rng);
        if (admissible(draw)) gold.insert(draw);
      }
    }
    std::vector<size_t> gold_list(gold.begin(), gold.end());
    for (size_t g : gold_list) ex.gold.push_back(tags[g].id);
    std::sort(ex.gold.begin(), ex.gold.end());

    std::string text;
    for (size_t t = 0; t < cfg.tokens_per_context; ++t) {
      const std::string* tok;
      if (rng.uniform01() < cfg.noise_rate) {
        tok = &pool[rng.uniform_below(pool.size())];
      } else {
        const TagSpec& src = tags[gold_list[rng.uniform_below(gold_list.size())]];
        // Name terms (salient[0..2]) leak rarely; the body terms carry the
        // learnable association.
        const size_t n_name = std::min<size_t>(3, src.salient.size());
        if (src.salient.size() > n_name && rng.uniform01() >= cfg.name_leak) {
          tok = &src.salient[n_name + rng.uniform_below(src.salient.size() - n_name)];
        } else {
          tok = &src.salient[rng.uniform_below(n_name)];
        }
      }
      if (!text.empty()) text.push_back(' ');
      text += *tok;
    }
    ex.text = std::move(text);
    examples.push_back(std::move(ex));
  }
  assign_splits(corpus, std::move(examples));
  tagforge::validate(corpus);

  if (sidecar) {
    nlohmann::json terms = nlohmann::json::object();
    for (const auto& t : tags)
      terms[t.id] = nlohmann::json{{"salient", t.salient}, {"weight", t.weight}};
    *sidecar = nlohmann::json{{"type", "tag_corpus"},
                              {"seed", cfg.seed},
                              {"zipf_exponent", cfg.zipf_exponent},
                              {"noise_rate", cfg.noise_rate},
                              {"terms", terms}};
  }
  return corpus;
}

Corpus generate_qa_proxy(const SynthConfig& cfg, nlohmann::json* sidecar) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, 0x71615f70ULL));
  const auto pool = word_pool(cfg.vocab_size);
  const auto tags = make_tags(cfg, pool, rng);
  const auto sampler = make_sampler(tags);

  Corpus corpus;
  std::vector<Example> examples;
  examples.reserve(cfg.n_contexts);
  for (size_t i = 0; i < cfg.n_contexts; ++i) {
    const TagSpec& src = tags[sampler.draw(rng)];

    std::vector<std::string> tokens;
    std::map<std::string, size_t> salient_counts;
    for (size_t t = 0; t < cfg.tokens_per_context; ++t) {
      if (rng.uniform01() < cfg.noise_rate) {
        tokens.push_back(pool[rng.uniform_below(pool.size())]);
      } else {
        const std::string& tok = src.salient[rng.uniform_below(src.salient.size())];
        tokens.push_back(tok);
        ++salient_counts[tok];
      }
    }

    // Question: the passage's three most salient terms (count desc, then
    // lexicographic); an all-noise passage falls back to the source terms.
    std::vector<std::pair<std::string, size_t>> ranked(salient_counts.begin(),
                                                       salient_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::string question;
    for (size_t q = 0; q < std::min<size_t>(3, ranked.size()); ++q) {
      if (!question.empty()) question.push_back(' ');
      question += ranked[q].first;
    }
    if (question.empty()) question = src.salient[0] + " " + src.salient[1];

    const std::string qid = "q" + zero_pad(i, 5);
    corpus.register_tag(qid, question);

    Example ex;
    ex.id = "p" + zero_pad(i, 5);
    ex.gold = {qid};
    for (size_t t = 0; t < tokens.size(); ++t) {
      if (t) ex.text.push_back(' ');
      ex.text += tokens[t];
    }
    examples.push_back(std::move(ex));
  }
  assign_splits(corpus, std::move(examples));
  if (cfg.n_contexts > 0) tagforge::validate(corpus);

  if (sidecar)
    *sidecar = nlohmann::json{{"type", "qa_proxy"}, {"seed", cfg.seed},
                              {"noise_rate", cfg.noise_rate}};
  return corpus;
}

}  // namespace tagforge
