// Command-line surface: synth, pretrain, train, eval, retrieve, gradcheck,
// report. Every artifact-producing run writes exactly one manifest next to
// its primary output; all randomness flows from --seed.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tagforge/biencoder.hpp"
#include "tagforge/bm25.hpp"
#include "tagforge/checkpoint.hpp"
#include "tagforge/classifier.hpp"
#include "tagforge/corpus.hpp"
#include "tagforge/hash.hpp"
#include "tagforge/index.hpp"
#include "tagforge/manifest.hpp"
#include "tagforge/metrics.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/synth.hpp"
#include "tagforge/textproc.hpp"

namespace fs = std::filesystem;
using namespace tagforge;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void add_corpus_inputs(RunManifest& manifest, const fs::path& dir) {
  for (const char* name : {"tags.jsonl", "train.jsonl", "validation.jsonl", "test.jsonl"})
    if (fs::exists(dir / name)) add_input(manifest, dir / name);
}

std::string vocab_sibling_name(const fs::path& model_path) {
  return model_path.filename().string() + ".vocab.jsonl";
}

Vocabulary load_model_vocab(const fs::path& model_path, const std::string& vocab_file,
                            uint64_t expected_hash) {
  const fs::path vocab_path = model_path.parent_path() / vocab_file;
  Vocabulary vocab = Vocabulary::load_jsonl(vocab_path);
  if (vocab.content_hash() != expected_hash)
    throw std::runtime_error("vocabulary " + vocab_path.string() +
                             " does not match the checkpoint (content hash mismatch)");
  return vocab;
}

std::vector<size_t> parse_ks(const std::string& spec) {
  std::vector<size_t> ks;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    ks.push_back(static_cast<size_t>(std::stoul(item)));
  }
  if (ks.empty()) throw std::runtime_error("--k: no K values given");
  return ks;
}

TagIndex obtain_index(const BiEncoder& model, const Vocabulary& vocab, const Corpus& corpus,
                      const fs::path& model_path, const std::string& index_path, bool verbose) {
  const uint64_t model_hash = fnv1a64_file(model_path);
  if (!index_path.empty() && fs::exists(index_path)) {
    TagIndex index = load_index(index_path);
    if (index.checkpoint_hash != model_hash)
      throw std::runtime_error(
          "stale index " + index_path + ": it was built from a different checkpoint than " +
          model_path.string() + "; delete it or pass a fresh --index path to rebuild");
    if (verbose) std::cerr << "loaded index " << index_path << "\n";
    return index;
  }
  TagIndex index = build_index(model, vocab, corpus.tags, model_hash);
  if (!index_path.empty()) {
    save_index(index_path, index);
    if (verbose) std::cerr << "wrote index " << index_path << "\n";
  }
  return index;
}

nlohmann::json train_config_json(const TrainConfig& cfg, const EncoderDims& dims,
                                 Pooling pooling, const PackConfig& pack, bool single_label,
                                 size_t min_freq) {
  return nlohmann::json{{"batch_contexts", cfg.batch_contexts},
                        {"ceaa", cfg.ceaa},
                        {"ceaa_negatives", cfg.ceaa_negatives},
                        {"ceaa_full_matrix", cfg.ceaa_full_matrix},
                        {"learning_rate", cfg.learning_rate},
                        {"epochs", cfg.epochs},
                        {"seed", cfg.seed},
                        {"adam_beta1", cfg.adam_beta1},
                        {"adam_beta2", cfg.adam_beta2},
                        {"adam_eps", cfg.adam_eps},
                        {"norm", cfg.norm == LossNorm::MeanUnmasked ? "mean_unmasked" : "row_count"},
                        {"dim", dims.dim},
                        {"pooling", pooling == Pooling::MeanTokens ? "mean" : "cls"},
                        {"max_len", pack.max_len},
                        {"context_max", pack.context_max},
                        {"single_label", single_label},
                        {"min_freq", min_freq}};
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (size_t e = 0; e < losses.size(); ++e) out << (e + 1) << "," << losses[e] << "\n";
}

// Classifier-baseline branch of the train command.
int run_classifier_training(const std::string& data_dir, const std::string& out_path,
                            const TrainConfig& cfg, size_t dim, const std::string& pooling_name,
                            size_t max_len, size_t context_max, size_t min_freq,
                            bool single_label) {
  Timer timer;
  Corpus corpus = load_jsonl(data_dir);
  if (single_label) corpus = to_single_label(corpus, cfg.seed);
  const Vocabulary vocab = Vocabulary::build(corpus, min_freq);
  const Pooling pooling = pooling_name == "cls" ? Pooling::ClsSlot : Pooling::MeanTokens;
  const PackConfig pack{max_len,
                        context_max == 0 ? std::max<size_t>(2, max_len - 22) : context_max};

  ClassifierConfig ccfg;
  ccfg.batch_size = cfg.batch_contexts;
  ccfg.learning_rate = cfg.learning_rate;
  ccfg.epochs = cfg.epochs;
  ccfg.seed = cfg.seed;
  ClassifierTrainResult trace;
  const EncoderParams init =
      init_encoder(derive_seed(cfg.seed, 0xC1A55ULL), EncoderDims{vocab.size(), dim}, pooling);
  ClassifierModel model = classifier_train(init, corpus, vocab, ccfg, pack, &trace);
  model.vocab_file = vocab_sibling_name(out_path);

  TrainMeta meta;
  meta.config_echo = nlohmann::json{{"system", "classifier"},
                                    {"batch", ccfg.batch_size},
                                    {"learning_rate", ccfg.learning_rate},
                                    {"epochs", ccfg.epochs},
                                    {"seed", ccfg.seed},
                                    {"dim", dim},
                                    {"single_label", single_label},
                                    {"min_freq", min_freq}}
                         .dump();
  meta.epochs = static_cast<uint64_t>(ccfg.epochs);
  meta.final_loss = trace.epoch_mean_loss.empty() ? 0.0 : trace.epoch_mean_loss.back();

  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  vocab.save_jsonl(out.parent_path() / model.vocab_file);
  save_checkpoint(out, model, meta);
  const fs::path loss_csv = out_path + ".loss.csv";
  write_loss_csv(loss_csv, trace.epoch_mean_loss);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = nlohmann::json::parse(meta.config_echo);
  manifest.seed = cfg.seed;
  add_corpus_inputs(manifest, data_dir);
  add_output(manifest, out);
  add_output(manifest, out.parent_path() / model.vocab_file);
  add_output(manifest, loss_csv);
  write_manifest(out_path + ".manifest.json", manifest);

  std::cout << "train (classifier): wrote " << out_path << " (final loss " << meta.final_loss
            << ", " << model.head.label_ids.size() << " labels) in " << timer.seconds() << " s\n";
  return 0;
}

// Shared implementation behind `train` and `pretrain`.
int run_training_command(const std::string& command, const std::string& data_dir,
                         const std::string& vocab_data_dir, const std::string& init_path,
                         const std::string& out_path, TrainConfig cfg, size_t dim,
                         const std::string& pooling_name, size_t max_len, size_t context_max,
                         size_t min_freq, double score_scale, bool single_label, bool verbose) {
  Timer timer;
  Corpus corpus = load_jsonl(data_dir);
  if (single_label) corpus = to_single_label(corpus, cfg.seed);

  BiEncoder model;
  std::optional<Vocabulary> vocab;
  if (!init_path.empty()) {
    model = load_biencoder(init_path);
    vocab = load_model_vocab(init_path, model.vocab_file, model.vocab_hash);
    if (verbose) std::cerr << "initialized from " << init_path << "\n";
  } else {
    const Corpus* vocab_source = &corpus;
    std::optional<Corpus> other;
    if (!vocab_data_dir.empty()) {
      other = load_jsonl(vocab_data_dir);
      vocab_source = &*other;
    }
    vocab = Vocabulary::build(*vocab_source, min_freq);
    const Pooling pooling = pooling_name == "cls" ? Pooling::ClsSlot : Pooling::MeanTokens;
    const PackConfig pack{max_len, context_max == 0 ? std::max<size_t>(2, max_len - 22)
                                                    : context_max};
    model = make_biencoder(cfg.seed, EncoderDims{vocab->size(), dim}, *vocab, pooling, pack);
    if (score_scale > 0.0) model.score_scale = score_scale;
  }
  model.vocab_file = vocab_sibling_name(out_path);

  TrainResult result;
  if (command == "pretrain")
    result = pretrain_qa(model, corpus, *vocab, cfg);
  else
    result = train(model, corpus, *vocab, cfg);

  TrainMeta meta;
  meta.config_echo = train_config_json(cfg, model.context_tower.dims, model.context_tower.pooling,
                                       model.pack, single_label, min_freq)
                         .dump();
  meta.epochs = static_cast<uint64_t>(cfg.epochs);
  meta.final_loss = result.epoch_mean_loss.empty() ? 0.0 : result.epoch_mean_loss.back();

  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  vocab->save_jsonl(out.parent_path() / model.vocab_file);
  save_checkpoint(out, model, meta);
  const fs::path loss_csv = out_path + ".loss.csv";
  write_loss_csv(loss_csv, result.epoch_mean_loss);

  RunManifest manifest;
  manifest.command = command;
  manifest.config = nlohmann::json::parse(meta.config_echo);
  manifest.config["data"] = fs::path(data_dir).filename().string();
  manifest.seed = cfg.seed;
  add_corpus_inputs(manifest, data_dir);
  if (!init_path.empty()) add_input(manifest, init_path);
  add_output(manifest, out);
  add_output(manifest, out.parent_path() / model.vocab_file);
  add_output(manifest, loss_csv);
  write_manifest(out_path + ".manifest.json", manifest);

  std::cout << command << ": wrote " << out_path << " (";
  for (size_t e = 0; e < result.epoch_mean_loss.size(); ++e)
    std::cout << (e ? ", " : "") << "epoch " << (e + 1) << " loss "
              << result.epoch_mean_loss[e];
  std::cout << ") in " << timer.seconds() << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagforge: dense-retrieval auto-tagging on synthetic corpora"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthConfig synth_cfg;
  std::string synth_out;
  bool synth_qa = false;
  bool synth_verbose = false;
  synth_cmd->add_option("--tags", synth_cfg.n_tags, "number of tags");
  synth_cmd->add_option("--contexts", synth_cfg.n_contexts, "number of contexts");
  synth_cmd->add_option("--vocab-size", synth_cfg.vocab_size, "word pool size");
  synth_cmd->add_option("--mean-labels", synth_cfg.mean_labels, "mean gold tags per context");
  synth_cmd->add_option("--zipf", synth_cfg.zipf_exponent, "tag frequency skew exponent");
  synth_cmd->add_option("--tokens", synth_cfg.tokens_per_context, "tokens per context");
  synth_cmd->add_option("--noise", synth_cfg.noise_rate, "off-topic token probability");
  synth_cmd->add_option("--salient", synth_cfg.salient_per_tag, "salient terms per tag");
  synth_cmd->add_option("--name-leak", synth_cfg.name_leak,
                        "probability a salient draw picks a tag-name term");
  synth_cmd->add_option("--label-cluster", synth_cfg.label_cluster,
                        "probability a secondary gold tag stays in the primary's chapter");
  synth_cmd->add_option("--zero-shot", synth_cfg.zero_shot_fraction,
                        "fraction of tags withheld from train gold sets");
  synth_cmd->add_option("--seed", synth_cfg.seed, "generation seed");
  synth_cmd->add_flag("--qa", synth_qa, "generate passage->question pairs instead of tags");
  synth_cmd->add_flag("--verbose", synth_verbose, "verbose progress");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->set_config("--config");

  // ---- train / pretrain ----
  struct TrainArgs {
    std::string data, vocab_data, init, out;
    TrainConfig cfg;
    std::string system = "biencoder";
    size_t dim = 32;
    std::string ceaa = "off";
    std::string pooling = "mean";
    size_t max_len = 64;
    size_t context_max = 0;  // 0 = max_len - 22
    size_t min_freq = 1;
    double score_scale = 0.0;  // 0 = 1/sqrt(dim)
    bool single_label = false;
    bool full_matrix = false;
    bool eq2_norm = false;
    bool verbose = false;
  };
  auto add_train_options = [](CLI::App* cmd, TrainArgs& args, bool is_pretrain) {
    cmd->add_option("--data", args.data, "corpus directory")->required();
    cmd->add_option("--out", args.out, "checkpoint output path")->required();
    cmd->add_option("--init", args.init, "initialize from an existing checkpoint");
    if (!is_pretrain)
      cmd->add_option("--system", args.system, "biencoder|classifier")
          ->check(CLI::IsMember({"biencoder", "classifier"}));
    if (is_pretrain)
      cmd->add_option("--vocab-data", args.vocab_data,
                      "build the vocabulary from this corpus instead of --data");
    cmd->add_option("--dim", args.dim, "embedding width");
    cmd->add_option("--epochs", args.cfg.epochs, "training epochs");
    cmd->add_option("--lr", args.cfg.learning_rate, "Adam learning rate");
    cmd->add_option("--batch", args.cfg.batch_contexts, "contexts per batch");
    cmd->add_option("--negatives", args.cfg.ceaa_negatives, "CEAA negatives per context");
    cmd->add_option("--ceaa", args.ceaa, "cross-encoding augmentation: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_flag("--ceaa-full-matrix", args.full_matrix,
                  "unmask CEAA cross terms with y=0 labels");
    cmd->add_flag("--single-label", args.single_label,
                  "reduce train examples to one sampled gold tag");
    cmd->add_option("--min-freq", args.min_freq, "vocabulary frequency threshold");
    cmd->add_option("--max-len", args.max_len, "packed input budget (512 for paper format)");
    cmd->add_option("--context-max", args.context_max,
                    "context budget in concatenated inputs (default max_len - 22)");
    cmd->add_option("--pooling", args.pooling, "encoder pooling: mean|cls")
        ->check(CLI::IsMember({"mean", "cls"}));
    cmd->add_option("--score-scale", args.score_scale,
                    "dot-product scale (0 = default 1/sqrt(dim))");
    cmd->add_flag("--eq2-norm", args.eq2_norm, "normalize the loss by row count");
    cmd->add_option("--seed", args.cfg.seed, "training seed");
    cmd->add_flag("--verbose", args.verbose, "verbose progress");
    cmd->set_config("--config");
  };
  auto* train_cmd = app.add_subcommand("train", "train the bi-encoder tagger");
  TrainArgs train_args;
  add_train_options(train_cmd, train_args, false);
  auto* pretrain_cmd =
      app.add_subcommand("pretrain", "pretrain on a question-answering proxy corpus");
  TrainArgs pretrain_args;
  add_train_options(pretrain_cmd, pretrain_args, true);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a system on a corpus split");
  std::string eval_data, eval_model, eval_split = "test", eval_ks = "1,3,5";
  std::string eval_protocol = "standard", eval_system = "biencoder", eval_index, eval_out;
  size_t eval_bucket_threshold = 5;
  uint64_t eval_seed = 7;
  bool eval_verbose = false;
  eval_cmd->add_option("--data", eval_data, "corpus directory")->required();
  eval_cmd->add_option("--model", eval_model, "checkpoint (biencoder or classifier systems)");
  eval_cmd->add_option("--split", eval_split, "split to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  eval_cmd->add_option("--k", eval_ks, "comma-separated K values");
  eval_cmd->add_option("--protocol", eval_protocol, "standard|single-to-multi|buckets")
      ->check(CLI::IsMember({"standard", "single-to-multi", "buckets"}));
  eval_cmd->add_option("--bucket-threshold", eval_bucket_threshold,
                       "frequency threshold for the buckets protocol");
  eval_cmd->add_option("--system", eval_system, "biencoder|bm25|classifier")
      ->check(CLI::IsMember({"biencoder", "bm25", "classifier"}));
  eval_cmd->add_option("--index", eval_index, "dense index path (loaded if present, else written)");
  eval_cmd->add_option("--seed", eval_seed, "seed echoed into the manifest");
  eval_cmd->add_flag("--verbose", eval_verbose, "verbose progress");
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();
  eval_cmd->set_config("--config");

  // ---- retrieve ----
  auto* retrieve_cmd = app.add_subcommand("retrieve", "ad-hoc top-K query");
  std::string retrieve_model, retrieve_query, retrieve_index, retrieve_out;
  size_t retrieve_k = 5;
  bool retrieve_verbose = false;
  std::string retrieve_data;
  retrieve_cmd->add_option("--model", retrieve_model, "bi-encoder checkpoint")->required();
  retrieve_cmd->add_option("--query", retrieve_query, "query text")->required();
  retrieve_cmd->add_option("--k", retrieve_k, "number of results");
  retrieve_cmd->add_option("--index", retrieve_index, "dense index path (loaded if present)");
  retrieve_cmd->add_option("--data", retrieve_data, "corpus directory (to build the index)");
  retrieve_cmd->add_option("--out", retrieve_out, "optional result JSON path");
  retrieve_cmd->add_flag("--verbose", retrieve_verbose, "verbose progress");
  retrieve_cmd->set_config("--config");

  // ---- gradcheck ----
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  uint64_t gc_seed = 7;
  size_t gc_seeds = 10, gc_coords = 100;
  double gc_eps = 1e-5;
  std::string gc_out;
  gradcheck_cmd->add_option("--seed", gc_seed, "base seed");
  gradcheck_cmd->add_option("--seeds", gc_seeds, "number of seeded repetitions");
  gradcheck_cmd->add_option("--coords", gc_coords, "coordinates per repetition");
  gradcheck_cmd->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck_cmd->add_option("--out", gc_out, "optional result JSON path");
  gradcheck_cmd->set_config("--config");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "merge report JSONs into a K-sweep CSV");
  std::vector<std::string> report_in;
  std::string report_out;
  report_cmd->add_option("--in", report_in, "report JSON files")->required()->expected(-1);
  report_cmd->add_option("--out", report_out, "CSV output path")->required();
  report_cmd->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (synth_cmd->parsed()) {
      Timer timer;
      nlohmann::json sidecar;
      const Corpus corpus =
          synth_qa ? generate_qa_proxy(synth_cfg, &sidecar) : generate(synth_cfg, &sidecar);
      const fs::path out(synth_out);
      fs::create_directories(out);
      save_jsonl(corpus, out);
      {
        std::ofstream side(out / "terms.json", std::ios::binary);
        side << sidecar.dump(2) << '\n';
      }
      RunManifest manifest;
      manifest.command = "synth";
      manifest.config = nlohmann::json{{"tags", synth_cfg.n_tags},
                                       {"contexts", synth_cfg.n_contexts},
                                       {"vocab_size", synth_cfg.vocab_size},
                                       {"mean_labels", synth_cfg.mean_labels},
                                       {"zipf", synth_cfg.zipf_exponent},
                                       {"tokens", synth_cfg.tokens_per_context},
                                       {"noise", synth_cfg.noise_rate},
                                       {"salient", synth_cfg.salient_per_tag},
                                       {"name_leak", synth_cfg.name_leak},
                                       {"label_cluster", synth_cfg.label_cluster},
                                       {"zero_shot", synth_cfg.zero_shot_fraction},
                                       {"qa", synth_qa}};
      manifest.seed = synth_cfg.seed;
      add_corpus_inputs(manifest, out);  // generated corpus doubles as the artifact
      for (auto& [k, v] : manifest.inputs) manifest.outputs[k] = v;
      manifest.inputs.clear();
      add_output(manifest, out / "terms.json");
      write_manifest(out / "manifest.json", manifest);
      size_t n_examples = 0;
      for (const auto& [name, exs] : corpus.splits) n_examples += exs.size();
      std::cout << "synth: wrote " << corpus.tags.size() << " tags, " << n_examples
                << " examples to " << synth_out << " in " << timer.seconds() << " s\n";
      return 0;
    }

    if (train_cmd->parsed() || pretrain_cmd->parsed()) {
      TrainArgs& a = train_cmd->parsed() ? train_args : pretrain_args;
      a.cfg.ceaa = a.ceaa == "on";
      a.cfg.ceaa_full_matrix = a.full_matrix;
      a.cfg.norm = a.eq2_norm ? LossNorm::RowCount : LossNorm::MeanUnmasked;
      if (a.system == "classifier") {
        if (a.cfg.ceaa) throw std::runtime_error("--ceaa does not apply to --system classifier");
        if (!a.init.empty())
          throw std::runtime_error("--init does not apply to --system classifier");
        return run_classifier_training(a.data, a.out, a.cfg, a.dim, a.pooling, a.max_len,
                                       a.context_max, a.min_freq, a.single_label);
      }
      return run_training_command(train_cmd->parsed() ? "train" : "pretrain", a.data,
                                  a.vocab_data, a.init, a.out, a.cfg, a.dim, a.pooling, a.max_len,
                                  a.context_max, a.min_freq, a.score_scale, a.single_label,
                                  a.verbose);
    }

    if (eval_cmd->parsed()) {
      Timer timer;
      const Corpus corpus = load_jsonl(eval_data);
      const auto ks = parse_ks(eval_ks);
      const size_t max_k =
          std::min(*std::max_element(ks.begin(), ks.end()), corpus.tags.size());

      Ranker ranker;
      if (eval_system == "bm25") {
        auto index = std::make_shared<Bm25Index>(build_bm25(corpus.tags));
        ranker = [index, max_k](const std::string& text) {
          std::vector<std::string> ids;
          for (auto& [id, s] : bm25_rank(*index, text, max_k)) ids.push_back(id);
          return ids;
        };
      } else if (eval_system == "classifier") {
        if (eval_model.empty()) throw std::runtime_error("--model required for --system classifier");
        auto model = std::make_shared<ClassifierModel>(load_classifier(eval_model));
        auto vocab = std::make_shared<Vocabulary>(
            load_model_vocab(eval_model, model->vocab_file, model->vocab_hash));
        ranker = [model, vocab, max_k](const std::string& text) {
          std::vector<std::string> ids;
          for (auto& [id, s] : classifier_rank(*model, *vocab, text, max_k)) ids.push_back(id);
          return ids;
        };
      } else {
        if (eval_model.empty()) throw std::runtime_error("--model required for --system biencoder");
        auto model = std::make_shared<BiEncoder>(load_biencoder(eval_model));
        auto vocab = std::make_shared<Vocabulary>(
            load_model_vocab(eval_model, model->vocab_file, model->vocab_hash));
        auto index = std::make_shared<TagIndex>(
            obtain_index(*model, *vocab, corpus, eval_model, eval_index, eval_verbose));
        ranker = [model, vocab, index, max_k](const std::string& text) {
          const Embedding q = encode(model->context_tower, pack_single(*vocab, text, model->pack));
          std::vector<std::string> ids;
          for (auto& [id, s] : retrieve_topk(*index, q, max_k, text).ranked) ids.push_back(id);
          return ids;
        };
      }

      FrequencyBuckets buckets;
      const FrequencyBuckets* buckets_ptr = nullptr;
      if (eval_protocol == "buckets") {
        buckets = bucket_tags(corpus, eval_bucket_threshold);
        buckets_ptr = &buckets;
      } else if (eval_protocol == "single-to-multi") {
        // Occurrence counts reflect the single-labeled training view (the
        // train-side reduction seeded with --seed), while the evaluation
        // itself stays multi-label.
        buckets = bucket_tags(to_single_label(corpus, eval_seed), eval_bucket_threshold);
        buckets_ptr = &buckets;
      }
      MetricReport report = evaluate(ranker, corpus, eval_split, ks, buckets_ptr);
      report.system = eval_system;
      report.protocol = eval_protocol;

      const fs::path out(eval_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      {
        std::ofstream f(out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + eval_out);
        f << report_json(report).dump(2) << '\n';
      }
      RunManifest manifest;
      manifest.command = "eval";
      manifest.config = nlohmann::json{{"split", eval_split},
                                       {"k", eval_ks},
                                       {"protocol", eval_protocol},
                                       {"system", eval_system},
                                       {"bucket_threshold", eval_bucket_threshold}};
      manifest.seed = eval_seed;
      add_corpus_inputs(manifest, eval_data);
      if (!eval_model.empty()) add_input(manifest, eval_model);
      add_output(manifest, out);
      if (!eval_index.empty() && fs::exists(eval_index)) add_output(manifest, eval_index);
      write_manifest(eval_out + ".manifest.json", manifest);

      std::cout << "eval: wrote " << eval_out << " (n=" << report.overall.n << ") in "
                << timer.seconds() << " s\n";
      for (size_t k : report.ks)
        std::cout << "  R@" << k << "=" << report.overall.recall.at(k) << " RP@" << k << "="
                  << report.overall.rp.at(k) << " nDCG@" << k << "=" << report.overall.ndcg.at(k)
                  << "\n";
      return 0;
    }

    if (retrieve_cmd->parsed()) {
      const BiEncoder model = load_biencoder(retrieve_model);
      const Vocabulary vocab =
          load_model_vocab(retrieve_model, model.vocab_file, model.vocab_hash);
      TagIndex index;
      if (!retrieve_index.empty() && fs::exists(retrieve_index)) {
        index = load_index(retrieve_index);
        const uint64_t model_hash = fnv1a64_file(retrieve_model);
        if (index.checkpoint_hash != model_hash)
          throw std::runtime_error("stale index " + retrieve_index +
                                   ": rebuilt checkpoint detected; delete the index or pass a "
                                   "fresh --index path");
      } else if (!retrieve_data.empty()) {
        const Corpus corpus = load_jsonl(retrieve_data);
        index = obtain_index(model, vocab, corpus, retrieve_model, retrieve_index,
                             retrieve_verbose);
      } else {
        throw std::runtime_error("retrieve needs --index (prebuilt) or --data (to build one)");
      }
      const Embedding q =
          encode(model.context_tower, pack_single(vocab, retrieve_query, model.pack));
      const RetrievalResult result = retrieve_topk(index, q, retrieve_k, retrieve_query);
      nlohmann::json rows = nlohmann::json::array();
      std::map<std::string, std::string> text_of;
      for (size_t t = 0; t < index.ids.size(); ++t) text_of[index.ids[t]] = index.texts[t];
      for (const auto& [id, s] : result.ranked) {
        const double prob = 1.0 / (1.0 + std::exp(-s));
        std::cout << id << "\t" << text_of[id] << "\t" << prob << "\n";
        rows.push_back({{"tag", id}, {"text", text_of[id]}, {"probability", prob}});
      }
      if (!retrieve_out.empty()) {
        std::ofstream f(retrieve_out, std::ios::binary);
        f << nlohmann::json{{"query", retrieve_query}, {"results", rows}}.dump(2) << '\n';
        RunManifest manifest;
        manifest.command = "retrieve";
        manifest.config = nlohmann::json{{"query", retrieve_query}, {"k", retrieve_k}};
        add_input(manifest, retrieve_model);
        add_output(manifest, retrieve_out);
        write_manifest(retrieve_out + ".manifest.json", manifest);
      }
      return 0;
    }

    if (gradcheck_cmd->parsed()) {
      Timer timer;
      double worst = 0.0;
      for (size_t s = 0; s < gc_seeds; ++s)
        worst = std::max(worst, grad_check(gc_seed + s, gc_eps, gc_coords));
      const bool pass = worst < 1e-6;
      std::cout << "gradcheck: max relative error " << worst << " over " << gc_seeds << " x "
                << gc_coords << " coordinates (eps=" << gc_eps << ", " << timer.seconds()
                << " s): " << (pass ? "PASS" : "FAIL") << "\n";
      if (!gc_out.empty()) {
        std::ofstream f(gc_out, std::ios::binary);
        f << nlohmann::json{{"max_relative_error", worst},
                            {"eps", gc_eps},
                            {"seeds", gc_seeds},
                            {"coords", gc_coords},
                            {"pass", pass}}
                 .dump(2)
          << '\n';
        RunManifest manifest;
        manifest.command = "gradcheck";
        manifest.config = nlohmann::json{{"eps", gc_eps}, {"seeds", gc_seeds}, {"coords", gc_coords}};
        manifest.seed = gc_seed;
        add_output(manifest, gc_out);
        write_manifest(gc_out + ".manifest.json", manifest);
      }
      return pass ? 0 : 1;
    }

    if (report_cmd->parsed()) {
      std::vector<MetricReport> reports;
      for (const auto& file : report_in) {
        std::ifstream f(file);
        if (!f) throw std::runtime_error("cannot open " + file);
        reports.push_back(report_from_json(nlohmann::json::parse(f)));
      }
      std::ofstream out(report_out, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + report_out);
      out << report_csv(reports);
      out.close();
      RunManifest manifest;
      manifest.command = "report";
      for (const auto& file : report_in) add_input(manifest, file);
      add_output(manifest, report_out);
      write_manifest(report_out + ".manifest.json", manifest);
      std::cout << "report: wrote " << report_out << " from " << report_in.size()
                << " report(s)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
