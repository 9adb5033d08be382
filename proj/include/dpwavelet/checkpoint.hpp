#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpwavelet/armodel.hpp"
#include "dpwavelet/tokenizer.hpp"
#include "dpwavelet/types.hpp"

namespace dpw::checkpoint {

// Versioned container: "DPWV" magic, format version, named sections with
// per-section CRC32. Writes are atomic (temp + rename).
struct CheckpointContainer {
  std::map<std::string, std::vector<uint8_t>> sections;
};

void save(const std::string& path, const CheckpointContainer& container);
CheckpointContainer load(const std::string& path);

uint32_t crc32(const uint8_t* data, size_t size);
uint64_t fnv1a64(const uint8_t* data, size_t size);
std::string hash_hex(const std::vector<uint8_t>& bytes);

// Little-endian primitive packing used by all section payloads.
class ByteWriter {
 public:
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i32(int32_t v) { u32(uint32_t(v)); }
  void f64(double v);
  void str(const std::string& s);
  void raw(const uint8_t* data, size_t size);
  std::vector<uint8_t> take() { return std::move(bytes_); }
  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}
  uint32_t u32();
  uint64_t u64();
  int32_t i32() { return int32_t(u32()); }
  double f64();
  std::string str();
  void raw(uint8_t* out, size_t size);
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

std::vector<uint8_t> serialize_codebooks(const tokenizer::CodebookSet& set);
tokenizer::CodebookSet parse_codebooks(const std::vector<uint8_t>& bytes);

// Params carry their segment manifest and a hash of the model config so a
// mismatched load fails loudly.
std::vector<uint8_t> serialize_params(const armodel::ModelParams& params);
armodel::ModelParams parse_params(const std::vector<uint8_t>& bytes);

}  // namespace dpw::checkpoint
