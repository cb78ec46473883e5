#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "dinosd/tensor.hpp"

namespace dsd {

// "DSD1" tensor file: magic, u32 LE rank, rank x u32 LE dims, row-major
// f32 LE payload. Used for weights, depth maps and dataset tensors.

inline void write_dsd1(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("write_dsd1: cannot open " + path.string());
  f.write("DSD1", 4);
  std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&rank), 4);
  for (std::size_t d : t.shape()) {
    std::uint32_t dim = static_cast<std::uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&dim), 4);
  }
  std::vector<float> payload(t.size());
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(t.data()[i]);
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!f) throw FormatError("write_dsd1: short write to " + path.string());
}

inline Tensor read_dsd1(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_dsd1: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "DSD1", 4) != 0)
    throw FormatError("read_dsd1: " + path.string() + ": bad magic");
  std::uint32_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), 4);
  if (f.gcount() != 4 || rank > 8)
    throw FormatError("read_dsd1: " + path.string() + ": bad rank");
  Shape shape(rank);
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t dim = 0;
    f.read(reinterpret_cast<char*>(&dim), 4);
    if (f.gcount() != 4 || dim == 0)
      throw FormatError("read_dsd1: " + path.string() + ": truncated or invalid dims");
    shape[i] = dim;
    n *= dim;
  }
  std::vector<float> payload(n);
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != n * sizeof(float))
    throw FormatError("read_dsd1: " + path.string() + ": truncated payload");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(payload[i]);
  return Tensor(std::move(shape), std::move(data));
}

// Quantize through f32 so an in-memory tensor matches its disk round-trip.
inline Tensor through_f32(Tensor t) {
  for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

}  // namespace dsd
