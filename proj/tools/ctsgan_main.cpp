#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/error.hpp"
#include "ctsgan/manifest.hpp"
#include "ctsgan/pipeline.hpp"

namespace {

using ctsgan::ExperimentManifest;
using nlohmann::json;

void log_line(const json& record) { std::cerr << record.dump() << '\n'; }

struct Common {
  std::string manifest;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("manifest", c.manifest, "Experiment manifest (JSON); built-in defaults when omitted");
  cmd->add_option("--out", c.out, "Override the output directory");
}

ExperimentManifest resolve(const Common& c) {
  auto m = c.manifest.empty() ? ExperimentManifest::defaults() : ctsgan::load_manifest(c.manifest);
  if (!c.out.empty()) m.output_dir = c.out;
  return m;
}

template <typename T>
void override_if(const CLI::Option* opt, T& target, const T& value) {
  if (opt->count() > 0) target = value;
}

// Mutable access to a section for scalar overrides. Missing sections are
// reported by the stage itself.
template <typename T>
T* section(std::optional<T>& s) {
  return s ? &*s : nullptr;
}

std::optional<ctsgan::NoduleSpec> parse_spec(const std::vector<std::int64_t>& center, double radius,
                                             double intensity) {
  if (center.empty()) {
    if (radius > 0.0) throw ctsgan::UsageError("--radius needs --center");
    return std::nullopt;
  }
  if (center.size() != 3) throw ctsgan::UsageError("--center takes three integers z y x");
  ctsgan::NoduleSpec spec;
  spec.center = {center[0], center[1], center[2]};
  spec.radius_vox = radius > 0.0 ? radius : 3.0;
  spec.intensity = static_cast<float>(intensity);
  return spec;
}

void ensure_nodule_models(const ExperimentManifest& m) {
  if (std::filesystem::exists(ctsgan::paths::injector(m) / "cgan.json") &&
      std::filesystem::exists(ctsgan::paths::eraser(m) / "cgan.json")) {
    return;
  }
  ctsgan::stage_nodulesim(m, log_line);
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Recurrent slice-sequence volumetric GAN on procedural lung phantoms"};
  app.require_subcommand(1);

  Common phantom_c, sgan_c, gen_c, metrics_c, nodule_c, inject_c, erase_c, detect_c, exp_c;

  auto* phantom = app.add_subcommand("phantom", "Write the phantom training and held-out corpus");
  add_common(phantom, phantom_c);
  std::int64_t phantom_count = 0, phantom_heldout = 0;
  std::uint64_t phantom_seed = 0;
  auto* o_pc = phantom->add_option("--count", phantom_count, "Training phantoms");
  auto* o_ph = phantom->add_option("--heldout", phantom_heldout, "Held-out phantoms");
  auto* o_ps = phantom->add_option("--seed", phantom_seed, "Manifest seed");

  auto* sgan = app.add_subcommand("train-sgan", "Train the volumetric GAN on the phantom corpus");
  add_common(sgan, sgan_c);
  std::int64_t sgan_steps = 0;
  std::string sgan_loss;
  double sgan_gamma = 0.0;
  std::uint64_t sgan_seed = 0;
  auto* o_ss = sgan->add_option("--steps", sgan_steps, "Training steps");
  auto* o_sl = sgan->add_option("--loss", sgan_loss, "js or wasserstein")->check(CLI::IsMember({"js", "wasserstein"}));
  auto* o_sg = sgan->add_option("--gp-gamma", sgan_gamma, "Gradient penalty weight");
  auto* o_sd = sgan->add_option("--seed", sgan_seed, "Manifest seed");

  auto* gen = app.add_subcommand("generate", "Sample volumes from the trained checkpoint");
  add_common(gen, gen_c);
  std::int64_t gen_count = 0;
  std::uint64_t gen_seed = 0;
  auto* o_gc = gen->add_option("--count", gen_count, "Number of volumes");
  auto* o_gs = gen->add_option("--seed", gen_seed, "Seed of the first volume");

  auto* metrics = app.add_subcommand("metrics", "Slice-wise FID and IS of generated volumes");
  add_common(metrics, metrics_c);

  auto* nodule = app.add_subcommand("train-nodule", "Train the nodule injector and eraser");
  add_common(nodule, nodule_c);
  std::int64_t nodule_steps = 0;
  auto* o_ns = nodule->add_option("--steps", nodule_steps, "Training steps per model");

  std::string edit_volume_path, edit_output;
  std::vector<std::int64_t> edit_center;
  double edit_radius = 0.0, edit_intensity = 0.62;
  auto add_edit = [&](CLI::App* cmd, Common& c) {
    add_common(cmd, c);
    cmd->add_option("--volume", edit_volume_path, "Volume base path (without .json/.raw)")->required();
    cmd->add_option("--output", edit_output, "Output base path");
    cmd->add_option("--center", edit_center, "Nodule center z y x")->expected(3);
    cmd->add_option("--radius", edit_radius, "Nodule radius in voxels");
    cmd->add_option("--intensity", edit_intensity, "Nodule intensity in (0, 1]");
  };
  auto* inject = app.add_subcommand("inject", "Insert nodules into a volume");
  add_edit(inject, inject_c);
  auto* erase = app.add_subcommand("erase", "Remove nodules from a volume");
  add_edit(erase, erase_c);

  auto* detect = app.add_subcommand("detect", "Three-regime nodule detection sweep");
  add_common(detect, detect_c);
  std::vector<double> detect_sizes;
  auto* o_dz = detect->add_option("--sizes", detect_sizes, "Nodule radii in voxels");

  auto* exp = app.add_subcommand("experiment", "Run every stage end to end");
  add_common(exp, exp_c);

  auto* mont = app.add_subcommand("montage", "Axial, coronal and sagittal tiles of a volume as PNG");
  std::string mont_volume, mont_output;
  std::int64_t mont_tiles = 6;
  mont->add_option("volume", mont_volume, "Volume base path")->required();
  mont->add_option("--output", mont_output, "PNG file")->required();
  mont->add_option("--tiles", mont_tiles, "Tiles per row");

  auto* defaults = app.add_subcommand("default-manifest", "Print the built-in manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*defaults) {
      std::cout << json(ExperimentManifest::defaults()).dump(2) << '\n';
    } else if (*phantom) {
      auto m = resolve(phantom_c);
      override_if(o_ps, m.seed, phantom_seed);
      if (auto* s = section(m.phantom)) {
        override_if(o_pc, s->count, phantom_count);
        override_if(o_ph, s->heldout, phantom_heldout);
      }
      ctsgan::stage_phantom(m, log_line);
    } else if (*sgan) {
      auto m = resolve(sgan_c);
      override_if(o_sd, m.seed, sgan_seed);
      if (auto* s = section(m.sgan_train)) {
        override_if(o_ss, s->steps, sgan_steps);
        if (o_sl->count() > 0) s->config.loss = ctsgan::loss_kind_from_string(sgan_loss);
        override_if(o_sg, s->config.gp_gamma, sgan_gamma);
      }
      ctsgan::stage_train_sgan(m, log_line);
    } else if (*gen) {
      auto m = resolve(gen_c);
      if (auto* s = section(m.generate)) {
        override_if(o_gc, s->count, gen_count);
        override_if(o_gs, s->seed, gen_seed);
      }
      for (const auto& p : ctsgan::stage_generate(m, log_line)) std::cout << p.string() << '\n';
    } else if (*metrics) {
      const auto m = resolve(metrics_c);
      const auto summary = ctsgan::stage_metrics(m, log_line);
      std::cout << ctsgan::render_metric_table(summary.rows);
      std::printf("generated adjacent-plane correlation: %.4f\n", summary.generated_plane_correlation);
    } else if (*nodule) {
      auto m = resolve(nodule_c);
      if (auto* s = section(m.nodulesim)) override_if(o_ns, s->steps, nodule_steps);
      const auto s = ctsgan::stage_nodulesim(m, log_line);
      std::printf("roundtrip MAE %.4f  outside-mask change %.4f  sphere gain %.4f\n", s.roundtrip_mae,
                  s.outside_change, s.sphere_gain);
    } else if (*inject || *erase) {
      const bool injecting = inject->parsed();
      const auto m = resolve(injecting ? inject_c : erase_c);
      ensure_nodule_models(m);
      const auto v = ctsgan::load_volume(edit_volume_path);
      const auto spec = parse_spec(edit_center, edit_radius, edit_intensity);
      const auto direction = injecting ? ctsgan::NoduleDirection::inject : ctsgan::NoduleDirection::erase;
      const auto out = ctsgan::edit_volume(m, direction, v, spec, log_line);
      const std::filesystem::path base =
          edit_output.empty() ? m.output_dir / (injecting ? "injected" : "erased") / v.id() : std::filesystem::path(edit_output);
      ctsgan::save_volume(out, base);
      std::cout << base.string() << '\n';
    } else if (*detect) {
      auto m = resolve(detect_c);
      if (auto* s = section(m.detect)) override_if(o_dz, s->sizes, detect_sizes);
      const auto reports = ctsgan::stage_detect(m, log_line);
      std::cout << ctsgan::render_regime_table(reports);
    } else if (*exp) {
      const auto m = resolve(exp_c);
      ctsgan::run_experiment(m, log_line);
      std::cout << "artifacts under " << m.output_dir.string() << '\n';
    } else if (*mont) {
      ctsgan::stage_montage(mont_volume, mont_output, mont_tiles);
      std::cout << mont_output << '\n';
    }
  } catch (const ctsgan::UsageError& e) {
    log_line({{"level", "error"}, {"kind", "usage"}, {"message", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    log_line({{"level", "error"}, {"kind", "runtime"}, {"message", e.what()}});
    return 1;
  }
  return 0;
}
