// dinosd: surround-view depth estimation toolkit CLI.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>

#include "dinosd/gradcheck_suite.hpp"
#include "dinosd/train.hpp"

namespace {

using namespace dsd;

std::vector<CorruptionSpec> load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open corruption manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed corruption manifest " + path.string() + ": " + e.what());
  }
  std::vector<CorruptionSpec> specs;
  for (const auto& entry : j) {
    CorruptionSpec s;
    s.kind = corruption_kind_from(entry.at("kind").get<std::string>());
    s.severity = entry.at("severity").get<int>();
    s.seed = entry.value("seed", 0ULL);
    specs.push_back(s);
  }
  return specs;
}

void print_report_row(std::ostream& os, const std::string& attention, bool denoise, bool equalize,
                      const MetricReport& r) {
  os << std::left << std::setw(10) << attention << std::setw(9) << (denoise ? "yes" : "no")
     << std::setw(10) << (equalize ? "yes" : "no") << std::right << std::fixed
     << std::setprecision(4) << std::setw(9) << r.abs_rel << std::setw(9) << r.sq_rel
     << std::setw(9) << r.rmse << std::setw(10) << r.log_rmse << std::setw(8) << r.a1
     << std::setw(8) << r.a2 << std::setw(8) << r.a3 << "\n";
}

int cmd_gen_data(const std::filesystem::path& out, std::size_t scenes, std::uint64_t seed,
                 SceneConfig cfg) {
  std::vector<MultiViewBatch> batches;
  for (std::size_t i = 0; i < scenes; ++i)
    batches.push_back(slice_views(gen_scene(mix_seed(seed, i), cfg), cfg));
  write_dataset(batches, out, cfg);
  std::cout << "wrote " << scenes << " scenes to " << out << "\n";
  return 0;
}

int cmd_gradcheck() {
  auto results = run_gradcheck_suite();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.name
              << " max rel err " << std::scientific << r.max_err << "\n";
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dinosd: robust surround-view depth estimation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic 6-view ring dataset");
  std::string gen_out = "dataset";
  std::size_t gen_scenes = 8;
  std::uint64_t gen_seed = 7;
  SceneConfig scene_cfg;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--seed", gen_seed, "base seed");
  gen->add_option("--height", scene_cfg.view_height, "view height");
  gen->add_option("--width", scene_cfg.view_width, "view width");
  gen->add_option("--overlap", scene_cfg.overlap, "adjacent-view column overlap fraction");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_out = "run", tr_config;
  std::string tr_attention;
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 0;
  double tr_enc_lr = 0, tr_dec_lr = 0;
  std::string tr_val_manifest;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory for checkpoints");
  tr->add_option("--config", tr_config, "TrainConfig JSON file");
  tr->add_option("--attention", tr_attention, "none|self|adjacent");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--epochs", tr_epochs, "epoch count");
  tr->add_option("--encoder-lr", tr_enc_lr, "encoder learning rate");
  tr->add_option("--decoder-lr", tr_dec_lr, "decoder learning rate");
  tr->add_option("--val-manifest", tr_val_manifest, "corruption manifest for validation");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_data, ev_ckpt, ev_manifest, ev_report;
  std::vector<std::string> ev_attention{"adjacent"};
  bool ev_denoise = false, ev_equalize = false, ev_sweep = false;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--manifest", ev_manifest, "corruption manifest JSON (omit for clean)");
  ev->add_option("--attention", ev_attention, "attention modes to evaluate (repeatable)");
  ev->add_flag("--denoise", ev_denoise, "wavelet denoise at test time");
  ev->add_flag("--equalize", ev_equalize, "histogram equalize at test time");
  ev->add_flag("--sweep-preprocess", ev_sweep, "evaluate all four denoise/equalize combinations");
  ev->add_option("--report", ev_report, "write JSON-lines report here");

  // corrupt
  auto* co = app.add_subcommand("corrupt", "apply one corruption to a PPM image");
  std::string co_in, co_out, co_kind = "gaussian_noise";
  int co_sev = 3;
  std::uint64_t co_seed = 0;
  co->add_option("--in", co_in, "input PPM")->required();
  co->add_option("--out", co_out, "output PPM")->required();
  co->add_option("--kind", co_kind, "corruption kind");
  co->add_option("--severity", co_sev, "severity 1..5");
  co->add_option("--seed", co_seed, "seed");

  // preprocess
  auto* pp = app.add_subcommand("preprocess", "test-time denoise/equalize of a PPM image");
  std::string pp_in, pp_out;
  PreprocessFlags pp_flags;
  pp->add_option("--in", pp_in, "input PPM")->required();
  pp->add_option("--out", pp_out, "output PPM")->required();
  pp->add_flag("--denoise", pp_flags.denoise, "wavelet denoise");
  pp->add_flag("--equalize", pp_flags.equalize, "histogram equalize");
  pp->add_flag("--equalize-first", pp_flags.equalize_first, "equalize before denoising");

  // infer
  auto* in = app.add_subcommand("infer", "predict depth for one dataset scene");
  std::string in_data, in_ckpt, in_out = "infer_out", in_attention = "adjacent";
  std::size_t in_scene = 0;
  in->add_option("--data", in_data, "dataset directory")->required();
  in->add_option("--checkpoint", in_ckpt, "checkpoint directory")->required();
  in->add_option("--scene", in_scene, "scene index");
  in->add_option("--attention", in_attention, "none|self|adjacent");
  in->add_option("--out", in_out, "output directory");

  // gradcheck
  app.add_subcommand("gradcheck", "finite-difference check of all registered ops");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_scenes, gen_seed, scene_cfg);

    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();

    if (tr->parsed()) {
      TrainConfig cfg;
      if (!tr_config.empty()) {
        std::ifstream f(tr_config);
        if (!f) throw FormatError("cannot open config " + tr_config);
        nlohmann::json j;
        f >> j;
        cfg = TrainConfig::from_json(j);
      }
      if (tr->count("--attention")) cfg.attention = attention_mode_from(tr_attention);
      if (tr->count("--seed")) cfg.seed = tr_seed;
      if (tr->count("--epochs")) cfg.epochs = tr_epochs;
      if (tr->count("--encoder-lr")) cfg.encoder_lr = tr_enc_lr;
      if (tr->count("--decoder-lr")) cfg.decoder_lr = tr_dec_lr;
      auto dataset = read_dataset(tr_data);
      if (!dataset.empty()) {
        cfg.model.encoder.height = dataset[0].views[0].height;
        cfg.model.encoder.width = dataset[0].views[0].width;
      }
      std::vector<CorruptionSpec> val_manifest;
      if (!tr_val_manifest.empty()) val_manifest = load_manifest(tr_val_manifest);
      TrainResult res = train(cfg, dataset, tr_out, val_manifest, &std::cout);
      std::cout << "best epoch " << res.best_epoch << " checkpoint " << res.best_checkpoint << "\n";
      return 0;
    }

    if (ev->parsed()) {
      auto dataset = read_dataset(ev_data);
      DinoSD model = load_checkpoint(ev_ckpt);
      std::vector<CorruptionSpec> manifest;
      if (!ev_manifest.empty()) manifest = load_manifest(ev_manifest);
      std::vector<std::pair<bool, bool>> combos;
      if (ev_sweep)
        combos = {{false, false}, {true, false}, {false, true}, {true, true}};
      else
        combos = {{ev_denoise, ev_equalize}};
      std::ofstream report;
      if (!ev_report.empty()) report.open(ev_report);
      std::cout << std::left << std::setw(10) << "attention" << std::setw(9) << "denoise"
                << std::setw(10) << "equalize" << std::right << std::setw(9) << "AbsRel"
                << std::setw(9) << "SqRel" << std::setw(9) << "RMSE" << std::setw(10) << "logRMSE"
                << std::setw(8) << "a1" << std::setw(8) << "a2" << std::setw(8) << "a3" << "\n";
      for (const auto& attn : ev_attention)
        for (auto [dn, eq] : combos) {
          PreprocessFlags flags;
          flags.denoise = dn;
          flags.equalize = eq;
          MetricReport r =
              evaluate_model(model, dataset, manifest, flags, attention_mode_from(attn));
          print_report_row(std::cout, attn, dn, eq, r);
          if (report.is_open()) {
            nlohmann::json row = r.to_json();
            row["attention"] = attn;
            row["denoise"] = dn;
            row["equalize"] = eq;
            report << row.dump() << "\n";
          }
        }
      return 0;
    }

    if (co->parsed()) {
      CorruptionSpec spec{corruption_kind_from(co_kind), co_sev, co_seed};
      write_ppm(co_out, corrupt(read_ppm(co_in), spec));
      return 0;
    }

    if (pp->parsed()) {
      write_ppm(pp_out, preprocess_test(read_ppm(pp_in), pp_flags));
      return 0;
    }

    if (in->parsed()) {
      auto dataset = read_dataset(in_data);
      if (in_scene >= dataset.size())
        throw ValueError("scene index " + std::to_string(in_scene) + " out of range");
      DinoSD model = load_checkpoint(in_ckpt);
      const auto& batch = dataset[in_scene];
      Tensor pred = model.forward(batch_images_tensor(batch.views), attention_mode_from(in_attention));
      std::filesystem::create_directories(in_out);
      const auto& range = model.config().range;
      std::size_t H = pred.shape()[2], W = pred.shape()[3];
      for (std::size_t v = 0; v < kViewCount; ++v) {
        Tensor view_depth({1, H, W}, std::vector<double>(
                                         pred.data().begin() + v * H * W,
                                         pred.data().begin() + (v + 1) * H * W));
        write_dsd1(std::filesystem::path(in_out) / ("depth_view_" + std::to_string(v) + ".dsd1"),
                   view_depth);
        Image vis(H, W);
        for (std::size_t i = 0; i < H * W; ++i) {
          double g = (view_depth.data()[i] - range.d_min) / (range.d_max - range.d_min);
          for (std::size_t c = 0; c < 3; ++c) vis.data[c * H * W + i] = g;
        }
        write_ppm(std::filesystem::path(in_out) / ("depth_view_" + std::to_string(v) + ".ppm"), vis);
      }
      std::cout << "wrote depth maps for scene " << in_scene << " to " << in_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
