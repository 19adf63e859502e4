#include "dcpr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "dcpr/error.hpp"

namespace dcpr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return take<std::uint8_t>(); }
  std::uint16_t u16() { return take<std::uint16_t>(); }
  std::uint32_t u32() { return take<std::uint32_t>(); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n) {
    if (n > (data_.size() - pos_) / sizeof(float)) need(data_.size() - pos_ + 1);
    out.resize(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::size_t pos() const { return pos_; }

 private:
  template <typename T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw CheckpointError(Kind::kTruncated, "checkpoint is truncated");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

NamedTensor tensor_of(std::string name, const Matrix& m) {
  NamedTensor t{std::move(name), {static_cast<std::uint32_t>(m.rows()),
                                  static_cast<std::uint32_t>(m.cols())}, {}};
  t.values.reserve(m.size());
  for (double v : m.values()) t.values.push_back(static_cast<float>(v));
  return t;
}

NamedTensor scalar_of(std::string name, double v) {
  return {std::move(name), {}, {static_cast<float>(v)}};
}

Matrix matrix_of(const NamedTensor& t) {
  if (t.dims.size() != 2) {
    throw CheckpointError(Kind::kFormat, "tensor '" + t.name + "' is not a matrix");
  }
  Matrix m(t.dims[0], t.dims[1]);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = t.values[i];
  return m;
}

double scalar_value(const NamedTensor& t) {
  if (t.values.size() != 1) {
    throw CheckpointError(Kind::kFormat, "tensor '" + t.name + "' is not a scalar");
  }
  return t.values[0];
}

void expect_kind(const Checkpoint& c, ModelKind k) {
  if (c.kind != k) {
    throw CheckpointError(Kind::kKind, "expected a " + to_string(k) + " checkpoint, found " +
                                           to_string(c.kind));
  }
}

void add_global(std::vector<NamedTensor>& out, const GlobalModel& m, const std::string& prefix) {
  out.push_back(tensor_of(prefix + "category_emb", m.category_emb));
  out.push_back(tensor_of(prefix + "w_q", m.w_q));
  out.push_back(tensor_of(prefix + "w_k", m.w_k));
  out.push_back(tensor_of(prefix + "w_v", m.w_v));
  out.push_back(scalar_of(prefix + "lambda", m.lambda));
}

GlobalModel read_global(const Checkpoint& c, const std::string& prefix) {
  GlobalModel m;
  m.category_emb = matrix_of(c.tensor(prefix + "category_emb"));
  m.w_q = matrix_of(c.tensor(prefix + "w_q"));
  m.w_k = matrix_of(c.tensor(prefix + "w_k"));
  m.w_v = matrix_of(c.tensor(prefix + "w_v"));
  m.lambda = scalar_value(c.tensor(prefix + "lambda"));
  const std::size_t d = m.w_q.rows();
  for (const Matrix* w : {&m.w_q, &m.w_k, &m.w_v}) {
    if (w->rows() != d || w->cols() != d) throw CheckpointError(Kind::kFormat, "attention weights are not d x d");
  }
  if (m.category_emb.cols() != d) throw CheckpointError(Kind::kFormat, "category embedding width mismatch");
  return m;
}

class Sha256Stream {
 public:
  Sha256Stream() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("SHA-256 initialisation failed");
    }
  }
  ~Sha256Stream() { EVP_MD_CTX_free(ctx_); }
  Sha256Stream(const Sha256Stream&) = delete;
  Sha256Stream& operator=(const Sha256Stream&) = delete;

  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, p, n) != 1) throw Error("SHA-256 update failed");
  }
  void update(const Matrix& m) {
    const std::uint64_t shape[2] = {m.rows(), m.cols()};
    update(shape, sizeof shape);
    update(m.values().data(), m.size() * sizeof(double));
  }
  void update(double v) { update(&v, sizeof v); }
  Digest finish() {
    Digest d{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, d.data(), &len) != 1 || len != d.size()) {
      throw Error("SHA-256 finalisation failed");
    }
    return d;
  }

 private:
  EVP_MD_CTX* ctx_;
};

void hash_global(Sha256Stream& h, const GlobalModel& m) {
  h.update(m.category_emb);
  h.update(m.w_q);
  h.update(m.w_k);
  h.update(m.w_v);
  h.update(m.lambda);
}

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kGlobal: return "global";
    case ModelKind::kRegion: return "region";
    case ModelKind::kPatch: return "patch";
  }
  return "unknown";
}

Digest sha256(std::span<const std::uint8_t> bytes) {
  Sha256Stream h;
  h.update(bytes.data(), bytes.size());
  return h.finish();
}

std::string hex(const Digest& d) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : d) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 15]);
  }
  return s;
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw CheckpointError(Kind::kFormat, "checkpoint has no tensor '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes("DCPR");
  w.u16(c.version);
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u32(static_cast<std::uint32_t>(c.config.size()));
  w.bytes(c.config);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.name.size() > 0xffff) throw InvalidArgument("tensor name too long");
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.values.size()) {
      throw InvalidArgument("tensor '" + t.name + "' dims do not match its value count");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.values) w.f32(v);
  }
  auto& buf = w.buffer();
  const Digest d = sha256(buf);
  buf.insert(buf.end(), d.begin(), d.end());
  return std::move(buf);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw CheckpointError(Kind::kTruncated, "checkpoint is truncated");
  if (std::memcmp(bytes.data(), "DCPR", 4) != 0) {
    throw CheckpointError(Kind::kBadMagic, "not a DCPR checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.str(4);
  Checkpoint c;
  c.version = r.u16();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersion, "unsupported checkpoint version " +
                                              std::to_string(c.version) + " (expected " +
                                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto kind = r.u8();
  if (kind > 2) throw CheckpointError(Kind::kFormat, "unknown model kind " + std::to_string(kind));
  c.kind = static_cast<ModelKind>(kind);
  c.config = r.str(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    r.floats(t.values, n);
    c.tensors.push_back(std::move(t));
  }
  const std::size_t body = r.pos();
  if (bytes.size() < body + 32) throw CheckpointError(Kind::kTruncated, "checkpoint hash is truncated");
  if (bytes.size() > body + 32) throw CheckpointError(Kind::kFormat, "trailing bytes after checkpoint hash");
  const Digest expected = sha256(bytes.first(body));
  if (std::memcmp(expected.data(), bytes.data() + body, 32) != 0) {
    throw CheckpointError(Kind::kHash, "checkpoint content hash mismatch");
  }
  return c;
}

Checkpoint to_checkpoint(const GlobalModel& m, const std::string& config) {
  Checkpoint c;
  c.kind = ModelKind::kGlobal;
  c.config = config;
  add_global(c.tensors, m, "");
  return c;
}

Checkpoint to_checkpoint(const RegionModel& m, const std::string& config) {
  Checkpoint c;
  c.kind = ModelKind::kRegion;
  c.config = config;
  add_global(c.tensors, m.base, "base.");
  c.tensors.push_back(tensor_of("poi_emb", m.poi_emb));
  c.tensors.push_back(tensor_of("unit_spatial", m.unit_spatial));
  c.tensors.push_back(tensor_of("unit_temporal", m.unit_temporal));
  c.tensors.push_back(scalar_of("gamma_cat", m.gamma_cat));
  c.tensors.push_back({"clip", {2}, {static_cast<float>(m.clip.max_km),
                                     static_cast<float>(m.clip.max_hours)}});
  NamedTensor ids{"poi_ids", {static_cast<std::uint32_t>(m.poi_ids.size())}, {}};
  NamedTensor cats{"poi_category", {static_cast<std::uint32_t>(m.poi_ids.size())}, {}};
  for (std::size_t i = 0; i < m.poi_ids.size(); ++i) {
    // Ids travel as f32; they must be exactly representable.
    if (m.poi_ids[i] < 0 || m.poi_ids[i] > (1 << 24)) {
      throw InvalidArgument("POI id " + std::to_string(m.poi_ids[i]) +
                            " is not representable in a checkpoint");
    }
    ids.values.push_back(static_cast<float>(m.poi_ids[i]));
    cats.values.push_back(static_cast<float>(m.poi_category[i]));
  }
  c.tensors.push_back(std::move(ids));
  c.tensors.push_back(std::move(cats));
  return c;
}

Checkpoint to_checkpoint(const PatchModel& m, const std::string& config) {
  Checkpoint c;
  c.kind = ModelKind::kPatch;
  c.config = config;
  for (std::size_t l = 0; l < 4; ++l) {
    c.tensors.push_back(tensor_of("weight" + std::to_string(l), m.weight[l]));
    c.tensors.push_back(tensor_of("bias" + std::to_string(l), m.bias[l]));
  }
  return c;
}

GlobalModel global_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, ModelKind::kGlobal);
  return read_global(c, "");
}

RegionModel region_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, ModelKind::kRegion);
  RegionModel m;
  m.base = read_global(c, "base.");
  m.poi_emb = matrix_of(c.tensor("poi_emb"));
  m.unit_spatial = matrix_of(c.tensor("unit_spatial"));
  m.unit_temporal = matrix_of(c.tensor("unit_temporal"));
  m.gamma_cat = scalar_value(c.tensor("gamma_cat"));
  const auto& clip = c.tensor("clip");
  if (clip.values.size() != 2) throw CheckpointError(Kind::kFormat, "clip tensor must hold 2 values");
  m.clip = {clip.values[0], clip.values[1]};
  const auto& ids = c.tensor("poi_ids");
  const auto& cats = c.tensor("poi_category");
  if (ids.values.size() != cats.values.size() || ids.values.size() != m.poi_emb.rows()) {
    throw CheckpointError(Kind::kFormat, "region POI tables disagree in length");
  }
  for (std::size_t i = 0; i < ids.values.size(); ++i) {
    m.poi_ids.push_back(static_cast<std::int64_t>(ids.values[i]));
    m.poi_category.push_back(static_cast<std::size_t>(cats.values[i]));
  }
  if (m.poi_emb.cols() != m.dim() || m.unit_spatial.cols() != m.dim() ||
      m.unit_temporal.cols() != m.dim()) {
    throw CheckpointError(Kind::kFormat, "region tensor widths disagree with the base model");
  }
  return m;
}

PatchModel patch_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, ModelKind::kPatch);
  PatchModel p;
  for (std::size_t l = 0; l < 4; ++l) {
    p.weight[l] = matrix_of(c.tensor("weight" + std::to_string(l)));
    p.bias[l] = matrix_of(c.tensor("bias" + std::to_string(l)));
  }
  return p;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::kIo, "write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_bytes(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

GlobalModel load_global(const std::filesystem::path& path) {
  return global_from_checkpoint(load_checkpoint(path));
}
RegionModel load_region(const std::filesystem::path& path) {
  return region_from_checkpoint(load_checkpoint(path));
}
PatchModel load_patch(const std::filesystem::path& path) {
  return patch_from_checkpoint(load_checkpoint(path));
}

Digest parameter_hash(const GlobalModel& m) {
  Sha256Stream h;
  hash_global(h, m);
  return h.finish();
}

Digest parameter_hash(const RegionModel& m) {
  Sha256Stream h;
  hash_global(h, m.base);
  h.update(m.poi_emb);
  h.update(m.unit_spatial);
  h.update(m.unit_temporal);
  h.update(m.gamma_cat);
  return h.finish();
}

Digest parameter_hash(const PatchModel& m) {
  Sha256Stream h;
  for (std::size_t l = 0; l < 4; ++l) {
    h.update(m.weight[l]);
    h.update(m.bias[l]);
  }
  return h.finish();
}

namespace {

// Kept out of line: GCC 11 at -O3 drops adjacent inlined double->float->double
// stores on RegionModel scalars.
[[gnu::noinline]] double to_f32(double v) { return static_cast<float>(v); }

}  // namespace

void round_to_float(GlobalModel& m) {
  round_to_float(m.category_emb);
  round_to_float(m.w_q);
  round_to_float(m.w_k);
  round_to_float(m.w_v);
  m.lambda = to_f32(m.lambda);
}

void round_to_float(RegionModel& m) {
  round_to_float(m.base);
  round_to_float(m.poi_emb);
  round_to_float(m.unit_spatial);
  round_to_float(m.unit_temporal);
  m.gamma_cat = to_f32(m.gamma_cat);
  m.clip.max_km = to_f32(m.clip.max_km);
  m.clip.max_hours = to_f32(m.clip.max_hours);
}

void round_to_float(PatchModel& m) {
  for (std::size_t l = 0; l < 4; ++l) {
    round_to_float(m.weight[l]);
    round_to_float(m.bias[l]);
  }
}

}  // namespace dcpr
