#pragma once

// Internal binary checkpoint helpers shared by the encoder and LSTM
// checkpoint writers. Not installed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "nfp/tensor.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace nfp::detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_header(std::ostream& out, const char magic[4],
                         const std::string& meta_json) {
  out.write(magic, 4);
  write_u64(out, meta_json.size());
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

inline std::ifstream open_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  return in;
}

inline std::string read_magic(std::istream& in, const std::filesystem::path& path) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4) {
    throw std::runtime_error("truncated checkpoint (no magic): " + path.string());
  }
  return std::string(magic, 4);
}

inline std::string read_meta(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != sizeof(len)) {
    throw std::runtime_error("truncated checkpoint (no metadata length): " +
                             path.string());
  }
  if (len > (1ULL << 31)) {
    throw std::runtime_error("corrupt checkpoint (absurd metadata length): " +
                             path.string());
  }
  std::string meta(len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) {
    throw std::runtime_error("truncated checkpoint (metadata cut short): " +
                             path.string());
  }
  return meta;
}

inline void read_tensor(std::istream& in, Tensor& t, const std::string& name,
                        const std::filesystem::path& path) {
  const std::streamsize bytes =
      static_cast<std::streamsize>(t.data.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(t.data.data()), bytes);
  if (in.gcount() != bytes) {
    throw std::runtime_error("truncated checkpoint: tensor '" + name + "' expects " +
                             std::to_string(t.data.size()) + " doubles (shape " +
                             t.shape_string() + "), file ended early: " +
                             path.string());
  }
}

inline void expect_eof(std::istream& in, const std::filesystem::path& path) {
  char extra;
  in.read(&extra, 1);
  if (!in.eof()) {
    throw std::runtime_error(
        "corrupt checkpoint: trailing bytes after the last tensor "
        "(stored shapes disagree with the declared config): " +
        path.string());
  }
}

}  // namespace nfp::detail
