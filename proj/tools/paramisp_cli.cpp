// Command-line front end; talks to the library only through paramisp.h.
#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "paramisp/paramisp.h"

namespace {

struct RuntimeFailure {
  pisp_status status;
};

void check(pisp_status s) {
  if (s != PISP_OK) {
    std::fprintf(stderr, "error (%s): %s\n", pisp_status_string(s), pisp_last_error());
    throw RuntimeFailure{s};
  }
}

using ModelPtr = std::unique_ptr<pisp_model, decltype(&pisp_model_free)>;

ModelPtr load(const std::string& path, pisp_direction expected) {
  pisp_model* m = nullptr;
  check(pisp_model_load(path.c_str(), expected, &m));
  return ModelPtr(m, pisp_model_free);
}

const char* opt_cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

std::vector<const char*> cstrs(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter-conditioned learned camera ISP"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate an oracle-camera dataset");
  pisp_synth_options so;
  pisp_synth_options_init(&so);
  std::string synth_out;
  bool iso_drift = false, highlights = false, noise = false;
  synth->add_option("--camera-seed", so.camera_seed, "Oracle camera seed")->default_val(0);
  synth->add_option("--n", so.n, "Number of pairs")->default_val(so.n);
  synth->add_option("--size", so.size, "Image side in pixels")->default_val(so.size);
  synth->add_option("--seed", so.seed, "Scene seed")->default_val(0);
  synth->add_option("--val-fraction", so.val_fraction, "Validation share")->default_val(so.val_fraction);
  synth->add_flag("--iso-drift", iso_drift, "ISO-dependent tone curve");
  synth->add_flag("--highlights", highlights, "Add clipped highlights");
  synth->add_flag("--noise", noise, "Add ISO-dependent RAW noise");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one stage");
  pisp_train_options to;
  pisp_train_options_init(&to);
  std::string stage = "finetune", direction = "inv", arch = "default", train_out, init, init_fwd, init_inv, metrics;
  std::vector<std::string> data;
  bool no_paramnet = false, no_equalization = false;
  train->add_option("--stage", stage, "pretrain | finetune | joint")
      ->check(CLI::IsMember({"pretrain", "finetune", "joint"}))
      ->default_val(stage);
  train->add_option("--data", data, "Dataset directories")->required();
  train->add_option("--direction", direction, "fwd | inv (not for joint)")
      ->check(CLI::IsMember({"fwd", "inv", "forward", "inverse"}))
      ->default_val(direction);
  train->add_option("--epochs", to.epochs, "Epochs")->default_val(to.epochs);
  train->add_option("--lr", to.lr, "Initial learning rate")->default_val(to.lr);
  train->add_option("--seed", to.seed, "Seed")->default_val(0);
  train->add_option("--patch-size", to.patch_size, "Patch side")->default_val(to.patch_size);
  train->add_option("--patches-per-camera", to.patches_per_camera, "Patches per camera per epoch")
      ->default_val(to.patches_per_camera);
  train->add_option("--batch-size", to.batch_size, "Patches per optimizer step")->default_val(to.batch_size);
  train->add_option("--max-steps", to.max_steps, "Stop after this many steps (0: none)")->default_val(0);
  train->add_option("--arch", arch, "default | compact | tiny (new models)")
      ->check(CLI::IsMember({"default", "compact", "tiny"}))
      ->default_val(arch);
  train->add_option("--init", init, "Starting checkpoint (pretrain/finetune)");
  train->add_option("--init-fwd", init_fwd, "Forward checkpoint (joint)");
  train->add_option("--init-inv", init_inv, "Inverse checkpoint (joint)");
  train->add_option("--metrics", metrics, "Append per-epoch CSV here");
  train->add_flag("--no-paramnet", no_paramnet, "Constant conditioning (ablation)");
  train->add_flag("--no-equalization", no_equalization, "Raw optical magnitudes (ablation)");
  train->add_option("--out", train_out, "Output checkpoint (joint: prefix for _fwd.pisp/_inv.pisp)")->required();

  // raw2rgb / rgb2raw
  std::string ckpt, input, meta, output;
  auto* raw2rgb = app.add_subcommand("raw2rgb", "Render a RAW file to sRGB");
  auto* rgb2raw = app.add_subcommand("rgb2raw", "Reconstruct RAW from an sRGB file");
  for (auto* sc : {raw2rgb, rgb2raw}) {
    sc->add_option("--ckpt", ckpt, "Checkpoint")->required();
    sc->add_option("--input", input, "Input image")->required();
    sc->add_option("--meta", meta, "Sidecar JSON (default: next to input)");
    sc->add_option("--output", output, "Output image")->required();
  }

  // hdr / transfer
  std::string inv_ckpt, fwd_ckpt, target_meta;
  std::vector<double> gains{0.1, 1.4, 2.7, 4.0};
  auto* hdr = app.add_subcommand("hdr", "HDR reconstruction from one sRGB image");
  auto* transfer = app.add_subcommand("transfer", "Render an sRGB image as another camera");
  for (auto* sc : {hdr, transfer}) {
    sc->add_option("--inv-ckpt", inv_ckpt, "Inverse checkpoint")->required();
    sc->add_option("--fwd-ckpt", fwd_ckpt, "Forward checkpoint")->required();
    sc->add_option("--input", input, "Input sRGB")->required();
    sc->add_option("--meta", meta, "Sidecar JSON (default: next to input)");
    sc->add_option("--output", output, "Output sRGB")->required();
  }
  hdr->add_option("--gains", gains, "Digital gains")->delimiter(',');
  transfer->add_option("--target-meta", target_meta, "Target camera sidecar (default: --meta)");

  // eval
  std::string pred, ref;
  auto* eval = app.add_subcommand("eval", "PSNR and SSIM between two sRGB files");
  eval->add_option("--pred", pred, "Prediction")->required();
  eval->add_option("--ref", ref, "Reference")->required();

  // gradcheck
  uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--seed", gc_seed, "Seed")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      so.iso_drift = iso_drift;
      so.highlights = highlights;
      so.noise = noise;
      check(pisp_synth(&so, synth_out.c_str()));
    } else if (train->parsed()) {
      const auto dirs = cstrs(data);
      to.data_dirs = dirs.data();
      to.n_data_dirs = dirs.size();
      to.metrics_csv = opt_cstr(metrics);
      auto fresh = [&](pisp_direction d) {
        pisp_model_options mo;
        pisp_model_options_init(&mo);
        mo.direction = d;
        mo.arch = arch == "compact" ? PISP_ARCH_COMPACT : arch == "tiny" ? PISP_ARCH_TINY : PISP_ARCH_DEFAULT;
        mo.seed = to.seed;
        mo.use_paramnet = !no_paramnet;
        mo.normalize_params = !no_equalization;
        mo.fit_dirs = dirs.data();
        mo.n_fit_dirs = dirs.size();
        pisp_model* m = nullptr;
        check(pisp_model_create(&mo, &m));
        return ModelPtr(m, pisp_model_free);
      };
      pisp_train_summary summary{};
      if (stage == "joint") {
        if (init_fwd.empty() || init_inv.empty()) {
          std::fprintf(stderr, "error: joint training needs --init-fwd and --init-inv\n");
          return 2;
        }
        to.stage = PISP_JOINT;
        ModelPtr f = load(init_fwd, PISP_FORWARD), i = load(init_inv, PISP_INVERSE);
        check(pisp_train(f.get(), i.get(), &to, &summary));
        check(pisp_model_save(f.get(), (train_out + "_fwd.pisp").c_str()));
        check(pisp_model_save(i.get(), (train_out + "_inv.pisp").c_str()));
      } else {
        to.stage = stage == "pretrain" ? PISP_PRETRAIN : PISP_FINETUNE;
        const pisp_direction d = direction[0] == 'f' ? PISP_FORWARD : PISP_INVERSE;
        ModelPtr m = init.empty() ? fresh(d) : load(init, d);
        check(pisp_train(d == PISP_FORWARD ? m.get() : nullptr, d == PISP_INVERSE ? m.get() : nullptr, &to,
                         &summary));
        check(pisp_model_save(m.get(), train_out.c_str()));
      }
      nlohmann::json j = {{"steps", summary.steps},
                          {"epochs", summary.epochs_run},
                          {"best_epoch", summary.best_epoch},
                          {"final_train_l1", summary.final_train_l1}};
      if (summary.best_epoch >= 0) {
        j["best_val_l1"] = summary.best_val_l1;
        j["final_val_psnr"] = summary.final_val_psnr;
      }
      std::printf("%s\n", j.dump().c_str());
    } else if (raw2rgb->parsed()) {
      ModelPtr m = load(ckpt, PISP_FORWARD);
      check(pisp_raw2rgb_file(m.get(), input.c_str(), opt_cstr(meta), output.c_str()));
    } else if (rgb2raw->parsed()) {
      ModelPtr m = load(ckpt, PISP_INVERSE);
      check(pisp_rgb2raw_file(m.get(), input.c_str(), opt_cstr(meta), output.c_str()));
    } else if (hdr->parsed()) {
      ModelPtr i = load(inv_ckpt, PISP_INVERSE), f = load(fwd_ckpt, PISP_FORWARD);
      check(pisp_hdr_file(i.get(), f.get(), input.c_str(), opt_cstr(meta), gains.data(), gains.size(),
                          output.c_str()));
    } else if (transfer->parsed()) {
      ModelPtr i = load(inv_ckpt, PISP_INVERSE), f = load(fwd_ckpt, PISP_FORWARD);
      check(pisp_transfer_file(i.get(), f.get(), input.c_str(), opt_cstr(meta), opt_cstr(target_meta),
                               output.c_str()));
    } else if (eval->parsed()) {
      double p = 0, s = 0;
      check(pisp_eval_files(pred.c_str(), ref.c_str(), &p, &s));
      std::printf("%s\n", nlohmann::json({{"psnr", p}, {"ssim", s}}).dump().c_str());
    } else if (gradcheck->parsed()) {
      std::vector<pisp_gradcheck_entry> entries(256);
      size_t n = 0;
      check(pisp_gradcheck(gc_seed, entries.data(), entries.size(), &n));
      entries.resize(std::min(n, entries.size()));
      nlohmann::ordered_json modules = nlohmann::ordered_json::object();
      double worst = 0;
      for (const auto& e : entries) {
        modules[e.name] = e.max_rel_error;
        worst = std::max(worst, e.max_rel_error);
      }
      const bool pass = worst < 1e-3;
      nlohmann::ordered_json j = {{"seed", gc_seed}, {"max_rel_error", worst}, {"pass", pass}, {"modules", modules}};
      std::printf("%s\n", j.dump().c_str());
      return pass ? 0 : 1;
    }
  } catch (const RuntimeFailure&) {
    return 1;
  }
  return 0;
}
