#pragma once

#include <nlohmann/json.hpp>
#include <random>

#include "dinosd/attention.hpp"
#include "dinosd/dsd1.hpp"
#include "dinosd/image.hpp"
#include "dinosd/preprocess.hpp"

namespace dsd {

struct SceneConfig {
  std::size_t view_height = 64;
  std::size_t view_width = 96;
  double overlap = 0.25;  // fraction of view columns shared with each neighbor
  double d_min = 0.1;
  double d_max = 80.0;
  std::size_t min_objects = 6;
  std::size_t max_objects = 12;
  std::size_t mask_row_spacing = 16;  // pseudo-LiDAR scanline pitch

  std::size_t overlap_cols() const {
    return static_cast<std::size_t>(std::llround(overlap * static_cast<double>(view_width)));
  }
  std::size_t step() const { return view_width - overlap_cols(); }
  std::size_t pano_width() const { return 6 * step(); }

  void validate() const {
    if (overlap < 0.1 || overlap > 0.4) throw ValueError("scene: overlap must be in [0.1, 0.4]");
    if (step() < 1 || pano_width() < view_width)
      throw ValueError("scene: view width incompatible with overlap");
  }
};

struct PanoramaScene {
  Image rgb;                  // H x pano_width, horizontally periodic
  std::vector<double> depth;  // H x pano_width, meters
  std::uint64_t seed = 0;

  double depth_at(std::size_t y, std::size_t x) const { return depth[y * rgb.width + x]; }
};

struct MultiViewBatch {
  std::array<Image, kViewCount> views;
  Tensor gt;     // [6,1,H,W] meters
  Tensor valid;  // [6,1,H,W] 0/1
  std::uint64_t seed = 0;
};

inline PanoramaScene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  std::size_t H = cfg.view_height, Wp = cfg.pano_width();
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PanoramaScene scene;
  scene.seed = seed;
  scene.rgb = Image(H, Wp);
  scene.depth.assign(H * Wp, 0.0);

  // smooth ground depth: near at the bottom, far at the top, plus a periodic
  // horizontal undulation built from integer-frequency sinusoids
  double near_d = 2.0 + 2.0 * unit(rng);
  double far_d = 40.0 + 25.0 * unit(rng);
  struct Wave {
    double amp, phase;
    int freq;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    w.amp = 2.0 + 4.0 * unit(rng);
    w.phase = 2.0 * M_PI * unit(rng);
    w.freq = 1 + static_cast<int>(unit(rng) * 4.0);
  }
  std::vector<Wave> tex(8);
  for (auto& w : tex) {
    w.amp = 0.02 + 0.05 * unit(rng);
    w.phase = 2.0 * M_PI * unit(rng);
    w.freq = 1 + static_cast<int>(unit(rng) * 20.0);
  }
  double base_r = 0.25 + 0.4 * unit(rng);
  double base_g = 0.25 + 0.4 * unit(rng);
  double base_b = 0.25 + 0.4 * unit(rng);

  for (std::size_t y = 0; y < H; ++y) {
    double v = static_cast<double>(y) / static_cast<double>(H - 1);  // 0 top, 1 bottom
    double ground = far_d + (near_d - far_d) * v;
    for (std::size_t x = 0; x < Wp; ++x) {
      double ang = 2.0 * M_PI * static_cast<double>(x) / static_cast<double>(Wp);
      double d = ground;
      for (const auto& w : waves) d += w.amp * std::sin(w.freq * ang + w.phase) * (1.0 - v);
      scene.depth[y * Wp + x] = d;
      double t = 0.0;
      for (const auto& w : tex)
        t += w.amp * std::sin(w.freq * ang + w.phase) * std::sin(3.1 * v * w.freq + w.phase);
      scene.rgb.at(0, y, x) = base_r + t;
      scene.rgb.at(1, y, x) = base_g + t;
      scene.rgb.at(2, y, x) = base_b - t;
    }
  }

  // flat-shaded boxes / ellipses at sampled depths (wrap-aware in x)
  std::uniform_int_distribution<std::size_t> nobj(cfg.min_objects, cfg.max_objects);
  std::size_t K = nobj(rng);
  for (std::size_t k = 0; k < K; ++k) {
    bool ellipse = unit(rng) < 0.5;
    double cx = unit(rng) * static_cast<double>(Wp);
    double cy = (0.25 + 0.6 * unit(rng)) * static_cast<double>(H);
    double rx = (0.02 + 0.08 * unit(rng)) * static_cast<double>(Wp);
    double ry = (0.06 + 0.20 * unit(rng)) * static_cast<double>(H);
    double od = 1.0 + 45.0 * unit(rng) * unit(rng);
    double cr = 0.1 + 0.8 * unit(rng), cg = 0.1 + 0.8 * unit(rng), cb = 0.1 + 0.8 * unit(rng);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < Wp; ++x) {
        double dx = std::abs(static_cast<double>(x) - cx);
        dx = std::min(dx, static_cast<double>(Wp) - dx);  // ring distance
        double dy = std::abs(static_cast<double>(y) - cy);
        bool inside = ellipse ? (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0
                              : (dx <= rx && dy <= ry);
        if (inside && od < scene.depth[y * Wp + x]) {
          scene.depth[y * Wp + x] = od;
          scene.rgb.at(0, y, x) = cr;
          scene.rgb.at(1, y, x) = cg;
          scene.rgb.at(2, y, x) = cb;
        }
      }
  }

  for (auto& d : scene.depth) {
    d = std::min(std::max(d, cfg.d_min), cfg.d_max);
    d = static_cast<double>(static_cast<float>(d));  // match DSD1 storage exactly
  }
  // aerial-perspective shading: brightness falls off with depth, giving the
  // images a monocular cue for absolute scale
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < Wp; ++x) {
      double shade = 0.15 + 0.85 * std::exp(-scene.depth[y * Wp + x] / 25.0);
      for (std::size_t c = 0; c < 3; ++c) scene.rgb.at(c, y, x) *= shade;
    }
  // canonical intensity distribution: store the panorama equalized so
  // test-time histogram equalization is near-neutral on clean inputs and
  // restorative under brightness/contrast corruption
  scene.rgb = equalize_hist(scene.rgb);
  scene.rgb = quantize8(std::move(scene.rgb));  // match PPM storage exactly
  return scene;
}

inline MultiViewBatch slice_views(const PanoramaScene& scene, const SceneConfig& cfg) {
  std::size_t H = cfg.view_height, Wv = cfg.view_width, Wp = cfg.pano_width();
  if (scene.rgb.width != Wp || scene.rgb.height != H)
    throw ShapeError("slice_views: panorama dims inconsistent with config");
  MultiViewBatch batch;
  batch.seed = scene.seed;
  std::vector<double> gt(kViewCount * H * Wv), valid(kViewCount * H * Wv, 0.0);
  for (std::size_t v = 0; v < kViewCount; ++v) {
    Image view(H, Wv);
    std::size_t start = v * cfg.step();
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < Wv; ++x) {
        std::size_t px = (start + x) % Wp;
        for (std::size_t c = 0; c < 3; ++c) view.at(c, y, x) = scene.rgb.at(c, y, px);
        gt[(v * H + y) * Wv + x] = scene.depth_at(y, px);
      }
    batch.views[v] = std::move(view);
    // jittered pseudo-LiDAR scanlines
    std::size_t jitter = mix_seed(scene.seed, v) % cfg.mask_row_spacing;
    for (std::size_t y = jitter; y < H; y += cfg.mask_row_spacing)
      for (std::size_t x = 0; x < Wv; ++x) valid[(v * H + y) * Wv + x] = 1.0;
  }
  batch.gt = Tensor({kViewCount, 1, H, Wv}, std::move(gt));
  batch.valid = Tensor({kViewCount, 1, H, Wv}, std::move(valid));
  return batch;
}

// [6,3,H,W] view-major image tensor for the model input.
inline Tensor batch_images_tensor(const std::array<Image, kViewCount>& views) {
  std::size_t H = views[0].height, W = views[0].width;
  std::vector<double> data(kViewCount * 3 * H * W);
  for (std::size_t v = 0; v < kViewCount; ++v) {
    if (views[v].height != H || views[v].width != W)
      throw ShapeError("batch_images_tensor: views disagree in size");
    std::copy(views[v].data.begin(), views[v].data.end(), data.begin() + v * 3 * H * W);
  }
  return Tensor({kViewCount, 3, H, W}, std::move(data));
}

// --- dataset directory layout -------------------------------------------------
//   index.json, scene_<id>/view_<k>.ppm, scene_<id>/depth.dsd1, scene_<id>/mask.dsd1

inline void write_dataset(const std::vector<MultiViewBatch>& batches,
                          const std::filesystem::path& dir, const SceneConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["format"] = "dinosd-dataset";
  index["version"] = 1;
  index["view_height"] = cfg.view_height;
  index["view_width"] = cfg.view_width;
  index["overlap"] = cfg.overlap;
  index["scenes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    std::string name = "scene_" + std::to_string(i);
    fs::create_directories(dir / name);
    nlohmann::json entry;
    entry["id"] = i;
    entry["dir"] = name;
    entry["seed"] = batches[i].seed;
    entry["images"] = nlohmann::json::array();
    for (std::size_t v = 0; v < kViewCount; ++v) {
      std::string img = "view_" + std::to_string(v) + ".ppm";
      write_ppm(dir / name / img, batches[i].views[v]);
      entry["images"].push_back(img);
    }
    write_dsd1(dir / name / "depth.dsd1", batches[i].gt);
    write_dsd1(dir / name / "mask.dsd1", batches[i].valid);
    index["scenes"].push_back(entry);
  }
  std::ofstream f(dir / "index.json");
  f << index.dump(2) << "\n";
  if (!f) throw FormatError("write_dataset: failed writing index.json in " + dir.string());
}

inline std::vector<MultiViewBatch> read_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "index.json");
  if (!f) throw FormatError("read_dataset: missing index.json in " + dir.string());
  nlohmann::json index;
  try {
    f >> index;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_dataset: malformed index.json in " + dir.string() + ": " + e.what());
  }
  if (!index.is_object() || index.value("format", "") != "dinosd-dataset")
    throw FormatError("read_dataset: " + dir.string() + ": not a dinosd dataset index");
  try {
    std::vector<MultiViewBatch> batches;
    for (const auto& entry : index.at("scenes")) {
      MultiViewBatch b;
      b.seed = entry.value("seed", 0ULL);
      std::filesystem::path sdir = dir / entry.at("dir").get<std::string>();
      const auto& images = entry.at("images");
      if (images.size() != kViewCount)
        throw FormatError("read_dataset: " + sdir.string() + ": expected 6 images, got " +
                          std::to_string(images.size()));
      for (std::size_t v = 0; v < kViewCount; ++v)
        b.views[v] = read_ppm(sdir / images[v].get<std::string>());
      b.gt = read_dsd1(sdir / "depth.dsd1");
      b.valid = read_dsd1(sdir / "mask.dsd1");
      batches.push_back(std::move(b));
    }
    return batches;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_dataset: invalid index in " + dir.string() + ": " + e.what());
  }
}

}  // namespace dsd
