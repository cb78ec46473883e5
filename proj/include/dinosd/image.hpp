#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dinosd/tensor.hpp"

namespace dsd {

// RGB image, channel-major [c][y][x], values in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), data(3 * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::size_t pixels() const { return height * width; }
};

inline Image clamp01(Image img) {
  for (auto& v : img.data) v = std::min(std::max(v, 0.0), 1.0);
  return img;
}

// Quantize to the 8-bit grid PPM storage uses; makes disk round-trips exact.
inline Image quantize8(Image img) {
  for (auto& v : img.data) {
    double q = std::round(std::min(std::max(v, 0.0), 1.0) * 255.0);
    v = q / 255.0;
  }
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("write_ppm: cannot open " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.pixels() * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = std::min(std::max(img.at(c, y, x), 0.0), 1.0);
        buf[(y * img.width + x) * 3 + c] = static_cast<unsigned char>(std::round(v * 255.0));
      }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("write_ppm: short write to " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_ppm: cannot open " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") throw FormatError("read_ppm: " + path.string() + ": bad magic '" + magic + "'");
  auto next_token = [&f, &path]() {
    // skip whitespace and '#' comment lines
    int c = f.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
      if (c == '#')
        while (c != EOF && c != '\n') c = f.get();
      c = f.get();
    }
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      c = f.get();
    }
    if (tok.empty()) throw FormatError("read_ppm: " + path.string() + ": truncated header");
    return tok;
  };
  std::size_t w = std::stoul(next_token());
  std::size_t h = std::stoul(next_token());
  std::size_t maxval = std::stoul(next_token());
  if (maxval != 255) throw FormatError("read_ppm: " + path.string() + ": only maxval 255 supported");
  std::vector<unsigned char> buf(w * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(f.gcount()) != buf.size())
    throw FormatError("read_ppm: " + path.string() + ": truncated pixel data");
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const std::vector<double>& gray,
                      std::size_t h, std::size_t w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("write_pgm: cannot open " + path.string());
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(h * w);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    double v = std::min(std::max(gray[i], 0.0), 1.0);
    buf[i] = static_cast<unsigned char>(std::round(v * 255.0));
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Tensor image_to_tensor(const Image& img) {
  return Tensor({3, img.height, img.width}, img.data);
}

inline Image tensor_to_image(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() != 3 || s[0] != 3) throw ShapeError("tensor_to_image: expected [3,H,W]");
  Image img(s[1], s[2]);
  img.data = t.data();
  return img;
}

}  // namespace dsd
