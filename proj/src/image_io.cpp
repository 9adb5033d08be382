#include "dpwavelet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dpw::imageio {

namespace {

// Atomic write: temp file in the same directory, then rename.
class AtomicFile {
 public:
  explicit AtomicFile(const std::string& path)
      : path_(path), tmp_(path + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open for write: " + tmp_);
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + tmp_);
    out_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw IoError("rename failed: " + path_ + ": " + ec.message());
    committed_ = true;
  }
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

 private:
  std::string path_, tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw IoError("pnm: truncated header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("pnm: malformed header");
  return value;
}

}  // namespace

void write_image(const std::string& path, const ImageTensor& image) {
  const int nc = image.num_channels();
  if (nc != 1 && nc != 3)
    throw IoError("write_image: only 1 (PGM) or 3 (PPM) channels supported");
  AtomicFile file(path);
  auto& out = file.stream();
  out << (nc == 1 ? "P5\n" : "P6\n")
      << image.width() << " " << image.height() << "\n255\n";
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      for (int ch = 0; ch < nc; ++ch) {
        const double v = std::clamp(image.channels[ch](r, c), 0.0, 1.0);
        out.put(char(uint8_t(std::lround(v * 255.0))));
      }
    }
  }
  file.commit();
}

ImageTensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw IoError("not a binary PGM/PPM file: " + path);
  const int nc = magic[1] == '5' ? 1 : 3;
  const int w = read_pnm_token(in);
  const int h = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (maxval != 255) throw IoError("pnm: only 8-bit images supported: " + path);
  ImageTensor image(h, w, nc);
  std::vector<char> buf(size_t(w) * h * nc);
  in.read(buf.data(), std::streamsize(buf.size()));
  if (!in) throw IoError("pnm: truncated pixel data: " + path);
  size_t i = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < nc; ++ch)
        image.channels[ch](r, c) = double(uint8_t(buf[i++])) / 255.0;
  return image;
}

}  // namespace dpw::imageio
