#include "gcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gcl/error.hpp"
#include "gcl/hash.hpp"

namespace gcl {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void block(std::span<const double> values) {
    u64(values.size());
    raw(values.data(), values.size() * sizeof(double));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  const std::vector<std::uint8_t>& bytes() const { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void raw(void* p, std::size_t n) {
    if (n > size_ - pos_) throw InputError("checkpoint: truncated file");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::vector<double> block() {
    const std::uint64_t n = u64();
    if (n > (size_ - pos_) / sizeof(double)) throw InputError("checkpoint: truncated block");
    std::vector<double> values(n);
    raw(values.data(), n * sizeof(double));
    return values;
  }
  void fill(std::span<double> dst) { raw(dst.data(), dst.size() * sizeof(double)); }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const ModelConfig& c = ckpt.params.config;
  for (std::uint64_t v : {c.layers, c.d_model, c.heads, c.vocab, c.max_seq_len,
                          c.ffn_mult, std::size_t{c.tie_output}}) {
    w.u64(v);
  }
  w.u64(ckpt.params.seed);
  w.u64(ckpt.step);

  const auto tensors = ckpt.params.tensors();
  std::uint64_t n = 0;
  for (const Tensor* t : tensors) n += t->size();
  w.u64(n);
  for (const Tensor* t : tensors) {
    w.raw(t->data().data(), t->size() * sizeof(double));
  }

  w.u8(ckpt.head.has_value());
  if (ckpt.head) {
    const PoolingHead& h = *ckpt.head;
    w.u64(h.query.size());
    w.u64(h.d_proj());
    w.raw(h.query.data().data(), h.query.size() * sizeof(double));
    w.raw(h.projection.data().data(), h.projection.size() * sizeof(double));
    w.u64(h.owner);
  }

  w.u8(ckpt.optimizer.has_value());
  if (ckpt.optimizer) {
    const OptimizerState& s = *ckpt.optimizer;
    w.u64(s.step);
    w.f64(s.hyper.beta1);
    w.f64(s.hyper.beta2);
    w.f64(s.hyper.eps);
    w.f64(s.hyper.weight_decay);
    w.u64(s.m.size());
    for (const auto& b : s.m) w.block(b);
    for (const auto& b : s.v) w.block(b);
  }

  w.u64(fnv1a64(std::as_bytes(std::span(w.bytes()))));
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8) throw InputError("checkpoint: file too short");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (fnv1a64(std::as_bytes(std::span(bytes.data(), body))) != stored) {
    throw InputError("checkpoint: checksum mismatch");
  }

  Reader r(bytes.data(), body);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InputError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }

  ModelConfig c;
  c.layers = r.u64();
  c.d_model = r.u64();
  c.heads = r.u64();
  c.vocab = r.u64();
  c.max_seq_len = r.u64();
  c.ffn_mult = r.u64();
  c.tie_output = r.u64() != 0;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }

  Checkpoint ckpt;
  const std::uint64_t seed = r.u64();
  ckpt.params = init_model(c, seed);
  ckpt.step = r.u64();
  const std::uint64_t n = r.u64();
  if (n != capacity(ckpt.params)) {
    throw InputError("checkpoint: parameter count " + std::to_string(n) +
                     " does not match config capacity " +
                     std::to_string(capacity(ckpt.params)));
  }
  for (Tensor* t : ckpt.params.tensors()) r.fill(t->data());

  if (r.u8() != 0) {
    const std::uint64_t d = r.u64();
    const std::uint64_t dp = r.u64();
    if (d != c.d_model || dp == 0 || dp > (1u << 20)) {
      throw InputError("checkpoint: head shape does not match model");
    }
    PoolingHead h = PoolingHead::init(d, dp, 0, 0);
    r.fill(h.query.data());
    r.fill(h.projection.data());
    h.owner = r.u64();
    ckpt.head = std::move(h);
  }

  if (r.u8() != 0) {
    OptimizerState s;
    s.step = r.u64();
    s.hyper.beta1 = r.f64();
    s.hyper.beta2 = r.f64();
    s.hyper.eps = r.f64();
    s.hyper.weight_decay = r.f64();
    const std::uint64_t blocks = r.u64();
    if (blocks > 4096) throw InputError("checkpoint: implausible optimizer block count");
    for (std::uint64_t k = 0; k < blocks; ++k) s.m.push_back(r.block());
    for (std::uint64_t k = 0; k < blocks; ++k) s.v.push_back(r.block());
    ckpt.optimizer = std::move(s);
  }
  if (!r.done()) throw InputError("checkpoint: trailing bytes before checksum");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace gcl
