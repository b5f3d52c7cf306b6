#include "ctsgan/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctsgan/checkpoint.hpp"
#include "ctsgan/dataset_mix.hpp"
#include "ctsgan/error.hpp"
#include "ctsgan/montage.hpp"
#include "ctsgan/training.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (manifest seed, purpose).
Rng stage_rng(const ExperimentManifest& m, std::uint64_t purpose) { return Rng(splitmix64(m.seed ^ splitmix64(purpose))); }

enum Purpose : std::uint64_t {
  kSganTraining = 11,
  kMetrics = 12,
  kNodulePlans = 13,
  kNoduleTraining = 14,
  kDetectMix = 16,
  kEdit = 17,
};

void emit(const LogSink& log, json record) {
  if (log) log(record);
}

void write_json(const std::filesystem::path& file, const json& j) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("missing " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed " + file.string() + ": " + e.what());
  }
}

PhantomParams base_params(const ExperimentManifest& m) { return m.phantom ? m.phantom->params : PhantomParams{}; }

NoduleStage nodule_stage_or_default(const ExperimentManifest& m) { return m.nodulesim ? *m.nodulesim : NoduleStage{}; }

std::vector<Volume> load_volumes(const std::filesystem::path& dir, const std::vector<std::string>& ids) {
  std::vector<Volume> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_volume(dir / id));
  return out;
}

std::vector<Volume> volumes_of(const std::vector<Phantom>& phantoms) {
  std::vector<Volume> out;
  for (const auto& p : phantoms) out.push_back(p.volume);
  return out;
}

std::vector<NodulePhantom> nodule_phantoms(const ExperimentManifest& m, const NoduleStage& stage, PhantomStream stream,
                                           std::int64_t first, std::int64_t count, Rng& rng) {
  std::vector<NodulePhantom> out;
  for (std::int64_t i = first; i < first + count; ++i) {
    out.push_back(make_nodule_phantom(phantom_params(base_params(m), m.seed, stream, i), stage.counts, stage.radii,
                                      stage.cgan.voi_edge, rng));
  }
  return out;
}

double voi_mae(const Voi& a, const Voi& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.cube.size(); ++i) s += std::abs(static_cast<double>(a.cube[i]) - b.cube[i]);
  return s / static_cast<double>(a.cube.size());
}

std::string size_tag(double radius) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r%.2f", radius);
  return buf;
}

}  // namespace

namespace paths {
std::filesystem::path phantoms(const ExperimentManifest& m) { return m.output_dir / "phantoms"; }
std::filesystem::path sgan(const ExperimentManifest& m) { return m.output_dir / "sgan"; }
std::filesystem::path generated(const ExperimentManifest& m) { return m.output_dir / "generated"; }
std::filesystem::path metrics(const ExperimentManifest& m) { return m.output_dir / "metrics.json"; }
std::filesystem::path injector(const ExperimentManifest& m) { return m.output_dir / "injector"; }
std::filesystem::path eraser(const ExperimentManifest& m) { return m.output_dir / "eraser"; }
std::filesystem::path nodulesim_report(const ExperimentManifest& m) { return m.output_dir / "nodulesim.json"; }
std::filesystem::path detect(const ExperimentManifest& m) { return m.output_dir / "detect"; }
std::filesystem::path montages(const ExperimentManifest& m) { return m.output_dir / "montage"; }
}  // namespace paths

PhantomParams phantom_params(const PhantomParams& base, std::uint64_t manifest_seed, PhantomStream stream,
                             std::int64_t index) {
  PhantomParams p = base;
  p.seed = splitmix64(splitmix64(manifest_seed) ^ splitmix64(static_cast<std::uint64_t>(stream) << 40) ^
                      static_cast<std::uint64_t>(index));
  return p;
}

std::string phantom_id(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom-%04lld", static_cast<long long>(index));
  return buf;
}

std::string generated_id(std::uint64_t seed) { return "synthetic-" + std::to_string(seed); }

PhantomCorpus build_phantom_corpus(const ExperimentManifest& m) {
  const auto& stage = m.require_phantom();
  if (stage.count < 1 || stage.heldout < 0) throw ConfigError("phantom count must be positive");
  PhantomCorpus corpus;
  for (std::int64_t i = 0; i < stage.count + stage.heldout; ++i) {
    auto ph = generate_phantom(phantom_params(stage.params, m.seed, PhantomStream::corpus, i));
    ph.volume = ph.volume.with_id(phantom_id(i));
    (i < stage.count ? corpus.train : corpus.heldout).push_back(std::move(ph));
  }
  return corpus;
}

void to_json(json& j, const MetricsSummary& s) {
  j = {{"rows", s.rows},
       {"generated_plane_correlation", s.generated_plane_correlation},
       {"extractor_heldout_accuracy", s.extractor_heldout_accuracy}};
}

void from_json(const json& j, MetricsSummary& s) {
  s.rows = j.at("rows").get<std::vector<MetricReport>>();
  s.generated_plane_correlation = j.at("generated_plane_correlation").get<double>();
  s.extractor_heldout_accuracy = j.at("extractor_heldout_accuracy").get<double>();
}

void to_json(json& j, const NoduleSummary& s) {
  j = {{"pairs", s.pairs},
       {"probes", s.probes},
       {"roundtrip_mae", s.roundtrip_mae},
       {"outside_change", s.outside_change},
       {"sphere_gain", s.sphere_gain},
       {"clean_erase_change", s.clean_erase_change}};
}

void from_json(const json& j, NoduleSummary& s) {
  s.pairs = j.at("pairs").get<std::int64_t>();
  s.probes = j.at("probes").get<std::int64_t>();
  s.roundtrip_mae = j.at("roundtrip_mae").get<double>();
  s.outside_change = j.at("outside_change").get<double>();
  s.sphere_gain = j.at("sphere_gain").get<double>();
  s.clean_erase_change = j.at("clean_erase_change").get<double>();
}

void stage_phantom(const ExperimentManifest& m, const LogSink& log) {
  const auto corpus = build_phantom_corpus(m);
  const auto dir = paths::phantoms(m);
  json index = {{"train", json::array()}, {"heldout", json::array()}};
  for (const auto& p : corpus.train) {
    save_volume(p.volume, dir / p.volume.id());
    index["train"].push_back(p.volume.id());
  }
  for (const auto& p : corpus.heldout) {
    save_volume(p.volume, dir / p.volume.id());
    index["heldout"].push_back(p.volume.id());
  }
  write_json(dir / "index.json", index);
  emit(log, {{"stage", "phantom"}, {"train", corpus.train.size()}, {"heldout", corpus.heldout.size()}});
}

void stage_train_sgan(const ExperimentManifest& m, const LogSink& log) {
  const auto& stage = m.require_sgan_train();
  const auto index = read_json(paths::phantoms(m) / "index.json");
  const auto corpus = load_volumes(paths::phantoms(m), index.at("train").get<std::vector<std::string>>());
  ModelState model(stage.config);
  auto rng = stage_rng(m, kSganTraining);
  train_sgan(model, corpus, stage.steps, rng, [&](std::int64_t step, const LossReport& r, double wall_ms) {
    if (stage.log_every > 0 && (step % stage.log_every == 0 || step == stage.steps)) {
      emit(log, {{"step", step},
                 {"d_loss", r.d_loss},
                 {"g_loss", r.g_loss},
                 {"gp", r.gp},
                 {"loss_kind", to_string(r.loss_kind)},
                 {"wall_ms", wall_ms}});
    }
  });
  save_checkpoint(model, paths::sgan(m));
  emit(log, {{"stage", "train-sgan"}, {"steps", stage.steps}, {"checkpoint", paths::sgan(m).string()}});
}

std::vector<std::filesystem::path> stage_generate(const ExperimentManifest& m, const LogSink& log) {
  const auto& stage = m.require_generate();
  if (stage.count < 1) throw ConfigError("generate count must be positive");
  auto model = load_checkpoint(paths::sgan(m));
  std::vector<std::filesystem::path> out;
  for (std::int64_t i = 0; i < stage.count; ++i) {
    const auto seed = stage.seed + static_cast<std::uint64_t>(i);
    const auto v = generate_volume(*model, seed, model->config().depth);
    const auto base = paths::generated(m) / generated_id(seed);
    save_volume(v, base);
    out.push_back(base);
  }
  emit(log, {{"stage", "generate"}, {"count", stage.count}, {"seed", stage.seed}});
  return out;
}

MetricsSummary stage_metrics(const ExperimentManifest& m, const LogSink& log) {
  const auto& stage = m.require_metrics();
  const auto& gen = m.require_generate();
  const auto& sgan = m.require_sgan_train();
  const auto corpus = build_phantom_corpus(m);
  if (corpus.heldout.empty()) throw ConfigError("metrics need held-out phantoms");

  auto trained = train_feature_extractor(corpus.train, stage.extractor, stage.training);
  emit(log, {{"stage", "metrics"}, {"extractor_heldout_accuracy", trained.heldout_accuracy}});

  std::vector<Volume> generated;
  for (std::int64_t i = 0; i < gen.count; ++i) {
    generated.push_back(load_volume(paths::generated(m) / generated_id(gen.seed + static_cast<std::uint64_t>(i))));
  }
  ModelState untrained(sgan.config);
  std::vector<Volume> baseline;
  for (std::int64_t i = 0; i < gen.count; ++i) {
    baseline.push_back(generate_volume(untrained, gen.seed + static_cast<std::uint64_t>(i), sgan.config.depth));
  }
  const auto heldout = volumes_of(corpus.heldout);
  auto reference = volumes_of(corpus.train);
  if (reference.size() > heldout.size()) reference.erase(reference.begin() + static_cast<std::ptrdiff_t>(heldout.size()), reference.end());

  MetricsSummary summary;
  summary.extractor_heldout_accuracy = trained.heldout_accuracy;
  const auto row = [&](const std::string& label, const std::vector<Volume>& vols) {
    auto rng = stage_rng(m, kMetrics);
    const auto f = slicewise_fid(vols, heldout, trained.extractor, rng, stage.fid);
    const auto is = slicewise_inception_score(vols, trained.extractor);
    MetricReport r;
    r.label = label;
    r.fid_mean = f.mean;
    r.fid_std = f.std;
    r.is_mean = is.mean;
    r.is_std = is.std;
    summary.rows.push_back(r);
  };
  row("trained", generated);
  row("untrained", baseline);
  row("phantom-reference", reference);
  double corr = 0.0;
  for (const auto& v : generated) corr += mean_adjacent_plane_correlation(v);
  summary.generated_plane_correlation = corr / static_cast<double>(generated.size());
  write_json(paths::metrics(m), summary);
  return summary;
}

NoduleSummary stage_nodulesim(const ExperimentManifest& m, const LogSink& log) {
  const auto& stage = m.require_nodulesim();
  if (stage.train_phantoms < 1) throw ConfigError("nodule training needs phantoms");
  auto plan_rng = stage_rng(m, kNodulePlans);
  const auto train = nodule_phantoms(m, stage, PhantomStream::nodule_training, 0, stage.train_phantoms, plan_rng);
  const auto probe_count = std::max<std::int64_t>(4, stage.train_phantoms / 4);
  const auto probe =
      nodule_phantoms(m, stage, PhantomStream::nodule_training, stage.train_phantoms, probe_count, plan_rng);

  auto train_rng = stage_rng(m, kNoduleTraining);
  const auto cgan_log = [&](const char* name) {
    return [&log, name](const CganStepReport& r, double wall_ms) {
      if (r.step % 50 == 0) {
        emit(log, {{"stage", name}, {"step", r.step}, {"d_loss", r.d_loss}, {"g_adv", r.g_adv}, {"l1", r.l1},
                   {"gp", r.gp}, {"wall_ms", wall_ms}});
      }
    };
  };
  const auto inj_pairs = injector_pairs(train, stage.cgan.voi_edge);
  NoduleCgan injector(stage.cgan, NoduleDirection::inject, splitmix64(m.seed ^ 0x1171ULL));
  injector.train(inj_pairs, stage.steps, train_rng, cgan_log("injector"));
  const auto er_pairs = eraser_pairs(injector, train);
  NoduleCgan eraser(stage.cgan, NoduleDirection::erase, splitmix64(m.seed ^ 0xe7a5ULL));
  eraser.train(er_pairs, stage.steps, train_rng, cgan_log("eraser"));
  injector.save(paths::injector(m));
  eraser.save(paths::eraser(m));

  // Post-training measurements on phantoms the models never saw.
  NoduleSummary s;
  s.pairs = static_cast<std::int64_t>(inj_pairs.size());
  const auto E = stage.cgan.voi_edge;
  for (const auto& p : probe) {
    for (const auto& spec : p.nodules) {
      const auto clean = extract_voi(p.clean.volume, spec.center, E);
      const auto injected = injector.apply(clean, spec);
      const auto restored = eraser.apply(injected, spec);
      s.roundtrip_mae += voi_mae(restored, clean);
      const auto sphere = center_sphere(E, mask_radius(spec, E));
      double outside = 0.0;
      std::int64_t n_out = 0;
      for (std::size_t i = 0; i < sphere.size(); ++i) {
        if (sphere[i] == 0.0f) {
          outside += std::abs(static_cast<double>(injected.cube[i]) - clean.cube[i]);
          ++n_out;
        }
      }
      s.outside_change += outside / static_cast<double>(n_out);
      const auto after = paste_back(p.clean.volume, injected);
      s.sphere_gain += sphere_mean(after, spec) - sphere_mean(p.clean.volume, spec);
      const auto erased_clean = eraser.apply(clean, spec);
      double delta = 0.0;
      for (std::size_t i = 0; i < clean.cube.size(); ++i) delta += erased_clean.cube[i] - clean.cube[i];
      s.clean_erase_change += std::abs(delta / static_cast<double>(clean.cube.size()));
      ++s.probes;
    }
  }
  if (s.probes > 0) {
    const auto n = static_cast<double>(s.probes);
    s.roundtrip_mae /= n;
    s.outside_change /= n;
    s.sphere_gain /= n;
    s.clean_erase_change /= n;
  }
  write_json(paths::nodulesim_report(m), s);
  json record = s;
  record["stage"] = "nodulesim";
  emit(log, record);
  return s;
}

NoduleCgan load_nodule_model(const ExperimentManifest& m, NoduleDirection direction) {
  const auto dir = direction == NoduleDirection::inject ? paths::injector(m) : paths::eraser(m);
  if (!std::filesystem::exists(dir / "cgan.json")) {
    throw Error("no trained " + std::string(to_string(direction)) + " model under " + dir.string() +
                "; run the nodulesim stage first");
  }
  return NoduleCgan::load(dir);
}

Volume edit_volume(const ExperimentManifest& m, NoduleDirection direction, const Volume& v,
                   const std::optional<NoduleSpec>& spec, const LogSink& log) {
  auto model = load_nodule_model(m, direction);
  const auto mask = estimate_lung_mask(v);
  std::vector<NoduleSpec> specs;
  if (spec) {
    specs.push_back(*spec);
  } else {
    const auto stage = nodule_stage_or_default(m);
    auto rng = stage_rng(m, kEdit);
    specs = sample_nodule_plan(rng, stage.counts, stage.radii, mask, v.shape(), model.spec().voi_edge);
  }
  for (const auto& s : specs) emit(log, {{"stage", to_string(direction)}, {"nodule", s}});
  return direction == NoduleDirection::inject ? inject_nodules(model, v, specs, mask)
                                              : erase_nodules(model, v, specs, mask);
}

std::vector<RegimeReport> stage_detect(const ExperimentManifest& m, const LogSink& log) {
  const auto& stage = m.require_detect();
  const auto nodule_stage = nodule_stage_or_default(m);
  auto injector = load_nodule_model(m, NoduleDirection::inject);
  auto eraser = load_nodule_model(m, NoduleDirection::erase);
  auto model = load_checkpoint(paths::sgan(m));
  const auto E = injector.spec().voi_edge;

  std::vector<Volume> synthetic;
  for (std::int64_t i = 0; i < stage.synthetic_count; ++i) {
    const auto seed = 1'000'000ULL + static_cast<std::uint64_t>(i);
    synthetic.push_back(generate_volume(*model, seed, model->config().depth));
  }

  const auto pipeline = [&](double radius) {
    NoduleStage sized = nodule_stage;
    sized.radii.fixed = radius;
    auto plan_rng = stage_rng(m, kDetectMix ^ fnv1a64(size_tag(radius)));

    std::vector<SourceVolume> sources;
    auto params_a = base_params(m);
    params_a.noise = stage.domain_a_noise;
    auto params_b = base_params(m);
    params_b.noise = stage.domain_b_noise;
    for (std::int64_t i = 0; i < stage.volumes_per_domain; ++i) {
      auto a = make_nodule_phantom(phantom_params(params_a, m.seed, PhantomStream::domain_a, i), sized.counts,
                                   sized.radii, E, plan_rng);
      sources.push_back({a.with_nodules.with_id("a-" + std::to_string(i)), a.clean.lung_mask, a.nodules, Domain::a});
      auto b = generate_phantom(phantom_params(params_b, m.seed, PhantomStream::domain_b, i));
      sources.push_back({b.volume.with_id("b-" + std::to_string(i)), b.lung_mask, {}, Domain::b});
    }
    NoduleTools tools{&injector, &eraser, sized.counts, sized.radii};
    const auto dir = paths::detect(m) / size_tag(radius);
    const auto real = build_unbiased_dataset(sources, tools, plan_rng, dir / "real");
    const auto synth = build_synthetic_dataset(synthetic, tools, plan_rng, dir / "synthetic");
    save_dataset_mix(real, dir / "real.json");
    save_dataset_mix(synth, dir / "synthetic.json");
    emit(log, {{"stage", "detect"},
               {"radius_vox", radius},
               {"real", real.entries.size()},
               {"synthetic", synth.entries.size()},
               {"label_domain_mi", label_domain_mutual_information(real.entries)}});
    return run_regimes(real, synth, stage.regimes, [&](std::string_view regime, std::uint64_t seed, double acc) {
      emit(log, {{"stage", "detect"}, {"radius_vox", radius}, {"regime", regime}, {"seed", seed}, {"accuracy", acc}});
    });
  };
  const auto reports = sweep_nodule_sizes(stage.sizes, pipeline);
  write_json(paths::detect(m) / "regime_report.json", reports);
  return reports;
}

void stage_montage(const std::filesystem::path& volume, const std::filesystem::path& png, std::int64_t tiles) {
  write_png(montage(load_volume(volume), tiles), png);
}

void run_experiment(const ExperimentManifest& m, const LogSink& log) {
  stage_phantom(m, log);
  stage_train_sgan(m, log);
  const auto generated = stage_generate(m, log);
  stage_metrics(m, log);
  stage_nodulesim(m, log);
  stage_detect(m, log);
  stage_montage(paths::phantoms(m) / phantom_id(0), paths::montages(m) / "phantom.png", 6);
  stage_montage(generated.front(), paths::montages(m) / "generated.png", 6);
}

}  // namespace ctsgan
