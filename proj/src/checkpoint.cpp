#include "tagforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tagforge/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tagforge {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'G', 'F'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void raw(const void* p, size_t n) {
    const auto* c = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<uint8_t> data) : buf_(std::move(data)) {}
  uint32_t u32() { return get<uint32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const uint64_t n = u64();
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }

 private:
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void need(size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::vector<uint8_t> buf_;
  size_t pos_ = 0;
};

void write_encoder(Writer& w, const EncoderParams& p) {
  w.u32(static_cast<uint32_t>(p.pooling));
  w.u64(p.dims.vocab);
  w.u64(p.dims.dim);
  w.doubles(p.tok_emb);
  w.doubles(p.w_query);
  w.doubles(p.w_key);
  w.doubles(p.w_value);
  w.doubles(p.w_out);
  w.doubles(p.b_out);
}

EncoderParams read_encoder(Reader& r) {
  EncoderParams p;
  p.pooling = static_cast<Pooling>(r.u32());
  p.dims.vocab = r.u64();
  p.dims.dim = r.u64();
  p.tok_emb = r.doubles();
  p.w_query = r.doubles();
  p.w_key = r.doubles();
  p.w_value = r.doubles();
  p.w_out = r.doubles();
  p.b_out = r.doubles();
  const size_t v = p.dims.vocab, d = p.dims.dim;
  if (p.tok_emb.size() != v * d || p.w_query.size() != d * d || p.w_key.size() != d * d ||
      p.w_value.size() != d * d || p.w_out.size() != d * d || p.b_out.size() != d)
    throw std::runtime_error("checkpoint: encoder section shape mismatch");
  return p;
}

void write_header(Writer& w, CheckpointKind kind, const std::string& vocab_file,
                  uint64_t vocab_hash) {
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(kind));
  w.str(vocab_file);
  w.u64(vocab_hash);
}

CheckpointKind read_header(Reader& r, std::string& vocab_file, uint64_t& vocab_hash) {
  char magic[4];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic, not a TAGF file");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  const uint32_t kind = r.u32();
  vocab_file = r.str();
  vocab_hash = r.u64();
  if (kind != static_cast<uint32_t>(CheckpointKind::BiEncoder) &&
      kind != static_cast<uint32_t>(CheckpointKind::Classifier))
    throw std::runtime_error("checkpoint: unknown kind " + std::to_string(kind));
  return static_cast<CheckpointKind>(kind);
}

void write_meta(Writer& w, const TrainMeta& meta) {
  w.str(meta.config_echo);
  w.u64(meta.epochs);
  w.f64(meta.final_loss);
}

TrainMeta read_meta(Reader& r) {
  TrainMeta meta;
  meta.config_echo = r.str();
  meta.epochs = r.u64();
  meta.final_loss = r.f64();
  return meta;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
}

}  // namespace

std::vector<uint8_t> serialize(const BiEncoder& model, const TrainMeta& meta) {
  Writer w;
  write_header(w, CheckpointKind::BiEncoder, model.vocab_file, model.vocab_hash);
  write_encoder(w, model.context_tower);
  write_encoder(w, model.tag_tower);
  w.f64(model.score_scale);
  w.u64(model.pack.max_len);
  w.u64(model.pack.context_max);
  write_meta(w, meta);
  return w.take();
}

std::vector<uint8_t> serialize(const ClassifierModel& model, const TrainMeta& meta) {
  Writer w;
  write_header(w, CheckpointKind::Classifier, model.vocab_file, model.vocab_hash);
  write_encoder(w, model.encoder);
  w.u32(model.multi_label ? 1 : 0);
  w.u64(model.pack.max_len);
  w.u64(model.pack.context_max);
  w.u64(model.head.label_ids.size());
  for (const auto& id : model.head.label_ids) w.str(id);
  w.doubles(model.head.weight);
  w.doubles(model.head.bias);
  write_meta(w, meta);
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const BiEncoder& model,
                     const TrainMeta& meta) {
  write_file(path, serialize(model, meta));
}

void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model,
                     const TrainMeta& meta) {
  write_file(path, serialize(model, meta));
}

CheckpointKind peek_kind(const std::filesystem::path& path) {
  Reader r(read_file(path));
  std::string vocab_file;
  uint64_t vocab_hash = 0;
  return read_header(r, vocab_file, vocab_hash);
}

BiEncoder load_biencoder(const std::filesystem::path& path, TrainMeta* meta) {
  Reader r(read_file(path));
  BiEncoder model;
  const CheckpointKind kind = read_header(r, model.vocab_file, model.vocab_hash);
  if (kind != CheckpointKind::BiEncoder)
    throw std::runtime_error("checkpoint " + path.string() + " is not a bi-encoder");
  model.context_tower = read_encoder(r);
  model.tag_tower = read_encoder(r);
  model.score_scale = r.f64();
  model.pack.max_len = r.u64();
  model.pack.context_max = r.u64();
  const TrainMeta m = read_meta(r);
  if (meta) *meta = m;
  return model;
}

ClassifierModel load_classifier(const std::filesystem::path& path, TrainMeta* meta) {
  Reader r(read_file(path));
  ClassifierModel model;
  const CheckpointKind kind = read_header(r, model.vocab_file, model.vocab_hash);
  if (kind != CheckpointKind::Classifier)
    throw std::runtime_error("checkpoint " + path.string() + " is not a classifier");
  model.encoder = read_encoder(r);
  model.multi_label = r.u32() != 0;
  model.pack.max_len = r.u64();
  model.pack.context_max = r.u64();
  const uint64_t n_labels = r.u64();
  model.head.label_ids.reserve(n_labels);
  for (uint64_t i = 0; i < n_labels; ++i) model.head.label_ids.push_back(r.str());
  model.head.weight = r.doubles();
  model.head.bias = r.doubles();
  if (model.head.weight.size() != n_labels * model.encoder.dims.dim ||
      model.head.bias.size() != n_labels)
    throw std::runtime_error("checkpoint: classifier head shape mismatch");
  const TrainMeta m = read_meta(r);
  if (meta) *meta = m;
  return model;
}

uint64_t model_content_hash(const BiEncoder& model, const TrainMeta& meta) {
  const auto bytes = serialize(model, meta);
  return fnv1a64_bytes(bytes.data(), bytes.size());
}

}  // namespace tagforge
