#include "dpwavelet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace dpw::checkpoint {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'W', 'V'};
constexpr uint32_t kVersion = 1;

}  // namespace

uint32_t crc32(const uint8_t* data, size_t size) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t c = 0xffffffffu;
  for (size_t i = 0; i < size; ++i)
    c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

uint64_t fnv1a64(const uint8_t* data, size_t size) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(const std::vector<uint8_t>& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                (unsigned long long)fnv1a64(bytes.data(), bytes.size()));
  return buf;
}

void ByteWriter::u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(uint8_t(v >> (8 * i)));
}
void ByteWriter::u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(uint8_t(v >> (8 * i)));
}
void ByteWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}
void ByteWriter::str(const std::string& s) {
  u32(uint32_t(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}
void ByteWriter::raw(const uint8_t* data, size_t size) {
  bytes_.insert(bytes_.end(), data, data + size);
}

uint32_t ByteReader::u32() {
  if (pos_ + 4 > bytes_.size()) throw IoError("checkpoint: truncated payload");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(bytes_[pos_++]) << (8 * i);
  return v;
}
uint64_t ByteReader::u64() {
  if (pos_ + 8 > bytes_.size()) throw IoError("checkpoint: truncated payload");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(bytes_[pos_++]) << (8 * i);
  return v;
}
double ByteReader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
std::string ByteReader::str() {
  const uint32_t n = u32();
  if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated string");
  std::string s(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
  pos_ += n;
  return s;
}
void ByteReader::raw(uint8_t* out, size_t size) {
  if (pos_ + size > bytes_.size()) throw IoError("checkpoint: truncated raw");
  std::memcpy(out, bytes_.data() + pos_, size);
  pos_ += size;
}

void save(const std::string& path, const CheckpointContainer& container) {
  ByteWriter w;
  w.raw(reinterpret_cast<const uint8_t*>(kMagic), 4);
  w.u32(kVersion);
  w.u32(uint32_t(container.sections.size()));
  for (const auto& [name, payload] : container.sections) {
    w.str(name);
    w.u64(payload.size());
    w.u32(crc32(payload.data(), payload.size()));
    w.raw(payload.data(), payload.size());
  }
  const std::vector<uint8_t> bytes = w.bytes();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path + ": " + ec.message());
}

CheckpointContainer load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("not a DPWV checkpoint: " + path);
  std::vector<uint8_t> rest(bytes.begin() + 4, bytes.end());
  ByteReader r(rest);
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  " in " + path);
  const uint32_t n = r.u32();
  CheckpointContainer container;
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    const uint64_t size = r.u64();
    const uint32_t want_crc = r.u32();
    std::vector<uint8_t> payload(size);
    r.raw(payload.data(), size);
    if (crc32(payload.data(), payload.size()) != want_crc)
      throw IoError("checkpoint section '" + name + "' failed checksum in " +
                    path);
    container.sections[name] = std::move(payload);
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes in " + path);
  return container;
}

std::vector<uint8_t> serialize_codebooks(const tokenizer::CodebookSet& set) {
  ByteWriter w;
  w.i32(set.depth);
  w.i32(set.channels);
  w.i32(set.image_h);
  w.i32(set.image_w);
  w.u64(set.seed);
  auto put_book = [&](const tokenizer::Codebook& cb) {
    w.i32(cb.patch);
    w.i32(cb.offset);
    w.i32(int32_t(cb.centroids.rows()));
    w.i32(int32_t(cb.centroids.cols()));
    for (Eigen::Index c = 0; c < cb.centroids.cols(); ++c)
      for (Eigen::Index r = 0; r < cb.centroids.rows(); ++r)
        w.f64(cb.centroids(r, c));
  };
  put_book(set.approx);
  for (const auto& scale : set.details)
    for (const auto& cb : scale) put_book(cb);
  return w.take();
}

tokenizer::CodebookSet parse_codebooks(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  tokenizer::CodebookSet set;
  set.depth = r.i32();
  set.channels = r.i32();
  set.image_h = r.i32();
  set.image_w = r.i32();
  set.seed = r.u64();
  auto get_book = [&]() {
    tokenizer::Codebook cb;
    cb.patch = r.i32();
    cb.offset = r.i32();
    const int rows = r.i32(), cols = r.i32();
    cb.centroids.resize(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int row = 0; row < rows; ++row) cb.centroids(row, c) = r.f64();
    return cb;
  };
  set.approx = get_book();
  set.details.resize(set.depth);
  for (int j = 0; j < set.depth; ++j)
    for (int b = 0; b < 3; ++b) set.details[j][b] = get_book();
  if (!r.done()) throw IoError("codebooks: trailing bytes");
  return set;
}

namespace {

std::vector<uint8_t> config_bytes(const armodel::ModelConfig& c) {
  ByteWriter w;
  w.i32(c.vocab_size);
  w.i32(c.approx_vocab);
  w.i32(c.cond_vocab);
  w.i32(c.max_seq_len);
  w.i32(c.embed_dim);
  w.i32(c.n_layers);
  w.i32(c.n_heads);
  w.i32(c.mlp_width);
  w.i32(c.coarse_prefix_len);
  w.u64(c.seed);
  return w.take();
}

}  // namespace

std::vector<uint8_t> serialize_params(const armodel::ModelParams& params) {
  ByteWriter w;
  const std::vector<uint8_t> cfg = config_bytes(params.cfg);
  w.u64(fnv1a64(cfg.data(), cfg.size()));
  w.raw(cfg.data(), cfg.size());
  w.u32(uint32_t(params.segments.size()));
  for (size_t i = 0; i < params.segments.size(); ++i) {
    w.str(params.segments[i].name);
    w.i32(params.segments[i].offset);
    w.i32(params.segments[i].size);
    w.u32(params.trainable[i] ? 1 : 0);
  }
  w.u64(uint64_t(params.theta.size()));
  for (Eigen::Index i = 0; i < params.theta.size(); ++i) w.f64(params.theta(i));
  return w.take();
}

armodel::ModelParams parse_params(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  const uint64_t want_hash = r.u64();
  armodel::ModelParams p;
  p.cfg.vocab_size = r.i32();
  p.cfg.approx_vocab = r.i32();
  p.cfg.cond_vocab = r.i32();
  p.cfg.max_seq_len = r.i32();
  p.cfg.embed_dim = r.i32();
  p.cfg.n_layers = r.i32();
  p.cfg.n_heads = r.i32();
  p.cfg.mlp_width = r.i32();
  p.cfg.coarse_prefix_len = r.i32();
  p.cfg.seed = r.u64();
  const std::vector<uint8_t> cfg = config_bytes(p.cfg);
  if (fnv1a64(cfg.data(), cfg.size()) != want_hash)
    throw IoError("params: config hash mismatch");
  const uint32_t nseg = r.u32();
  for (uint32_t i = 0; i < nseg; ++i) {
    armodel::Segment s;
    s.name = r.str();
    s.offset = r.i32();
    s.size = r.i32();
    p.segments.push_back(s);
    p.trainable.push_back(char(r.u32() != 0));
  }
  const uint64_t n = r.u64();
  p.theta.resize(Eigen::Index(n));
  for (uint64_t i = 0; i < n; ++i) p.theta(Eigen::Index(i)) = r.f64();
  if (!r.done()) throw IoError("params: trailing bytes");
  return p;
}

}  // namespace checkpoint
