#pragma once

#include <nlohmann/json.hpp>

#include "dinosd/dsd1.hpp"
#include "dinosd/model.hpp"

namespace dsd {

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {
      {"encoder",
       {{"patch", cfg.encoder.patch},
        {"channels", cfg.encoder.channels},
        {"blocks", cfg.encoder.blocks},
        {"heads", cfg.encoder.heads},
        {"mlp_ratio", cfg.encoder.mlp_ratio},
        {"height", cfg.encoder.height},
        {"width", cfg.encoder.width}}},
      {"decoder", {{"fusion_channels", cfg.decoder.fusion_channels}}},
      {"range", {{"d_min", cfg.range.d_min}, {"d_max", cfg.range.d_max}}},
      {"attention_residual", cfg.attention_residual},
      {"init_seed", cfg.init_seed},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    cfg.encoder.patch = e.value("patch", cfg.encoder.patch);
    cfg.encoder.channels = e.value("channels", cfg.encoder.channels);
    cfg.encoder.blocks = e.value("blocks", cfg.encoder.blocks);
    cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
    cfg.encoder.mlp_ratio = e.value("mlp_ratio", cfg.encoder.mlp_ratio);
    cfg.encoder.height = e.value("height", cfg.encoder.height);
    cfg.encoder.width = e.value("width", cfg.encoder.width);
  }
  if (j.contains("decoder"))
    cfg.decoder.fusion_channels = j["decoder"].value("fusion_channels", cfg.decoder.fusion_channels);
  if (j.contains("range")) {
    cfg.range.d_min = j["range"].value("d_min", cfg.range.d_min);
    cfg.range.d_max = j["range"].value("d_max", cfg.range.d_max);
  }
  cfg.attention_residual = j.value("attention_residual", cfg.attention_residual);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  return cfg;
}

inline std::string param_file_name(const std::string& name) {
  std::string out = name;
  for (auto& c : out)
    if (c == '.') c = '_';
  return out + ".dsd1";
}

// Checkpoint = directory of DSD1 tensors + manifest.json (schema v1).
inline void save_checkpoint(const std::filesystem::path& dir, const DinoSD& model) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "dinosd-checkpoint";
  manifest["version"] = 1;
  manifest["model"] = model_config_to_json(model.config());
  manifest["params"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    std::string file = param_file_name(p.name);
    write_dsd1(dir / file, p.tensor);
    manifest["params"].push_back({{"name", p.name},
                                  {"file", file},
                                  {"shape", p.tensor.shape()},
                                  {"group", p.group == ParamGroup::Encoder ? "encoder" : "decoder"}});
  }
  std::ofstream f(dir / "manifest.json");
  f << manifest.dump(2) << "\n";
  if (!f) throw FormatError("save_checkpoint: failed writing manifest in " + dir.string());
}

inline DinoSD load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw FormatError("load_checkpoint: missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_checkpoint: malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != "dinosd-checkpoint" ||
      manifest.value("version", 0) != 1)
    throw FormatError("load_checkpoint: " + dir.string() + ": not a v1 dinosd checkpoint");
  try {
    DinoSD model(model_config_from_json(manifest.at("model")));
    for (const auto& entry : manifest.at("params")) {
      std::string name = entry.at("name").get<std::string>();
      Tensor* dst = model.find_param(name);
      if (!dst) throw FormatError("load_checkpoint: unknown parameter '" + name + "'");
      Tensor t = read_dsd1(dir / entry.at("file").get<std::string>());
      if (t.shape() != dst->shape())
        throw FormatError("load_checkpoint: parameter '" + name + "' has shape " +
                          shape_str(t.shape()) + ", expected " + shape_str(dst->shape()));
      dst->data() = t.data();
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_checkpoint: invalid manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace dsd
