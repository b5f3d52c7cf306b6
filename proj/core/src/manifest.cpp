#include "ctsgan/manifest.hpp"

#include <fstream>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;

template <typename T>
void read_section(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void write_section(json& j, const char* key, const std::optional<T>& in) {
  if (in) j[key] = *in;
}

template <typename T>
const T& require(const std::optional<T>& section, const char* name) {
  if (!section) throw UsageError(std::string("manifest is missing section '") + name + "'");
  return *section;
}

}  // namespace

void to_json(json& j, const DeviceNoise& n) {
  j = {{"sigma", n.sigma}, {"stripe_amplitude", n.stripe_amplitude}, {"stripe_period", n.stripe_period}};
}

void from_json(const json& j, DeviceNoise& n) {
  n.sigma = j.value("sigma", n.sigma);
  n.stripe_amplitude = j.value("stripe_amplitude", n.stripe_amplitude);
  n.stripe_period = j.value("stripe_period", n.stripe_period);
}

void to_json(json& j, const PhantomParams& p) {
  j = {{"size", p.size},
       {"body_axes", p.body_axes},
       {"lung_axes", p.lung_axes},
       {"lung_offset", p.lung_offset},
       {"lung_center_z", p.lung_center_z},
       {"lung_count", p.lung_count},
       {"airway_tube_radius", p.airway_tube_radius},
       {"carina_z", p.carina_z},
       {"vessel_filament_count", {p.vessel_filament_count.first, p.vessel_filament_count.second}},
       {"noise", p.noise},
       {"shape_jitter", p.shape_jitter}};
}

void from_json(const json& j, PhantomParams& p) {
  p.size = j.value("size", p.size);
  p.body_axes = j.value("body_axes", p.body_axes);
  p.lung_axes = j.value("lung_axes", p.lung_axes);
  p.lung_offset = j.value("lung_offset", p.lung_offset);
  p.lung_center_z = j.value("lung_center_z", p.lung_center_z);
  p.lung_count = j.value("lung_count", p.lung_count);
  p.airway_tube_radius = j.value("airway_tube_radius", p.airway_tube_radius);
  p.carina_z = j.value("carina_z", p.carina_z);
  if (j.contains("vessel_filament_count")) {
    const auto& v = j["vessel_filament_count"];
    p.vessel_filament_count = {v.at(0).get<int>(), v.at(1).get<int>()};
  }
  if (j.contains("noise")) p.noise = j["noise"].get<DeviceNoise>();
  p.shape_jitter = j.value("shape_jitter", p.shape_jitter);
}

void to_json(json& j, const ExtractorTraining& t) {
  j = {{"steps", t.steps}, {"batch", t.batch}, {"lr", t.lr}, {"holdout_fraction", t.holdout_fraction}, {"seed", t.seed}};
}

void from_json(const json& j, ExtractorTraining& t) {
  t.steps = j.value("steps", t.steps);
  t.batch = j.value("batch", t.batch);
  t.lr = j.value("lr", t.lr);
  t.holdout_fraction = j.value("holdout_fraction", t.holdout_fraction);
  t.seed = j.value("seed", t.seed);
}

void to_json(json& j, const SlicewiseFidOptions& o) {
  j = {{"rounds", o.rounds},
       {"pairs_per_round", o.pairs_per_round},
       {"pairing", o.pairing == Pairing::independent ? "independent" : "identical"}};
}

void from_json(const json& j, SlicewiseFidOptions& o) {
  o.rounds = j.value("rounds", o.rounds);
  o.pairs_per_round = j.value("pairs_per_round", o.pairs_per_round);
  if (j.contains("pairing")) {
    const auto p = j["pairing"].get<std::string>();
    if (p == "independent") {
      o.pairing = Pairing::independent;
    } else if (p == "identical") {
      o.pairing = Pairing::identical;
    } else {
      throw ConfigError("unknown pairing '" + p + "'");
    }
  }
}

void to_json(json& j, const PhantomStage& s) { j = {{"count", s.count}, {"heldout", s.heldout}, {"params", s.params}}; }
void from_json(const json& j, PhantomStage& s) {
  s.count = j.value("count", s.count);
  s.heldout = j.value("heldout", s.heldout);
  if (j.contains("params")) s.params = j["params"].get<PhantomParams>();
}

void to_json(json& j, const SganStage& s) {
  j = {{"config", s.config}, {"steps", s.steps}, {"log_every", s.log_every}};
}
void from_json(const json& j, SganStage& s) {
  if (j.contains("config")) s.config = j["config"].get<SganConfig>();
  s.steps = j.value("steps", s.steps);
  s.log_every = j.value("log_every", s.log_every);
}

void to_json(json& j, const GenerateStage& s) { j = {{"count", s.count}, {"seed", s.seed}}; }
void from_json(const json& j, GenerateStage& s) {
  s.count = j.value("count", s.count);
  s.seed = j.value("seed", s.seed);
}

void to_json(json& j, const MetricsStage& s) {
  j = {{"extractor", s.extractor}, {"training", s.training}, {"fid", s.fid}};
}
void from_json(const json& j, MetricsStage& s) {
  if (j.contains("extractor")) s.extractor = j["extractor"].get<FeatureExtractorSpec>();
  if (j.contains("training")) s.training = j["training"].get<ExtractorTraining>();
  if (j.contains("fid")) s.fid = j["fid"].get<SlicewiseFidOptions>();
}

void to_json(json& j, const NoduleStage& s) {
  j = {{"cgan", s.cgan},     {"steps", s.steps}, {"train_phantoms", s.train_phantoms},
       {"counts", s.counts}, {"radii", s.radii}};
}
void from_json(const json& j, NoduleStage& s) {
  if (j.contains("cgan")) s.cgan = j["cgan"].get<NoduleCganSpec>();
  s.steps = j.value("steps", s.steps);
  s.train_phantoms = j.value("train_phantoms", s.train_phantoms);
  if (j.contains("counts")) s.counts = j["counts"].get<CountDistribution>();
  if (j.contains("radii")) s.radii = j["radii"].get<RadiusDistribution>();
}

void to_json(json& j, const DetectStage& s) {
  j = {{"regimes", s.regimes},
       {"sizes", s.sizes},
       {"volumes_per_domain", s.volumes_per_domain},
       {"synthetic_count", s.synthetic_count},
       {"domain_a_noise", s.domain_a_noise},
       {"domain_b_noise", s.domain_b_noise}};
}
void from_json(const json& j, DetectStage& s) {
  if (j.contains("regimes")) s.regimes = j["regimes"].get<RegimeConfig>();
  if (j.contains("sizes")) s.sizes = j["sizes"].get<std::vector<double>>();
  s.volumes_per_domain = j.value("volumes_per_domain", s.volumes_per_domain);
  s.synthetic_count = j.value("synthetic_count", s.synthetic_count);
  if (j.contains("domain_a_noise")) s.domain_a_noise = j["domain_a_noise"].get<DeviceNoise>();
  if (j.contains("domain_b_noise")) s.domain_b_noise = j["domain_b_noise"].get<DeviceNoise>();
}

ExperimentManifest ExperimentManifest::defaults() {
  ExperimentManifest m;
  m.phantom = PhantomStage{};
  m.sgan_train = SganStage{};
  m.generate = GenerateStage{};
  m.metrics = MetricsStage{};
  m.nodulesim = NoduleStage{};
  m.detect = DetectStage{};
  return m;
}

const PhantomStage& ExperimentManifest::require_phantom() const { return require(phantom, "phantom"); }
const SganStage& ExperimentManifest::require_sgan_train() const { return require(sgan_train, "sgan_train"); }
const GenerateStage& ExperimentManifest::require_generate() const { return require(generate, "generate"); }
const MetricsStage& ExperimentManifest::require_metrics() const { return require(metrics, "metrics"); }
const NoduleStage& ExperimentManifest::require_nodulesim() const { return require(nodulesim, "nodulesim"); }
const DetectStage& ExperimentManifest::require_detect() const { return require(detect, "detect"); }

void to_json(json& j, const ExperimentManifest& m) {
  j = {{"format_version", m.format_version}, {"seed", m.seed}, {"output_dir", m.output_dir.string()}};
  write_section(j, "phantom", m.phantom);
  write_section(j, "sgan_train", m.sgan_train);
  write_section(j, "generate", m.generate);
  write_section(j, "metrics", m.metrics);
  write_section(j, "nodulesim", m.nodulesim);
  write_section(j, "detect", m.detect);
}

void from_json(const json& j, ExperimentManifest& m) {
  m.format_version = j.value("format_version", kManifestFormatVersion);
  m.seed = j.value("seed", m.seed);
  m.output_dir = j.value("output_dir", m.output_dir.string());
  read_section(j, "phantom", m.phantom);
  read_section(j, "sgan_train", m.sgan_train);
  read_section(j, "generate", m.generate);
  read_section(j, "metrics", m.metrics);
  read_section(j, "nodulesim", m.nodulesim);
  read_section(j, "detect", m.detect);
}

ExperimentManifest load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read manifest " + file.string());
  ExperimentManifest m;
  try {
    m = json::parse(in).get<ExperimentManifest>();
  } catch (const json::exception& e) {
    throw UsageError("invalid manifest " + file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw UsageError("invalid manifest " + file.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw UsageError("invalid manifest " + file.string() + ": " + e.what());
  }
  if (m.format_version != kManifestFormatVersion) {
    throw UsageError("manifest format_version " + std::to_string(m.format_version) + " is not supported");
  }
  // Relative output directories resolve against the manifest location.
  if (m.output_dir.is_relative()) m.output_dir = file.parent_path() / m.output_dir;
  return m;
}

void save_manifest(const ExperimentManifest& m, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << json(m).dump(2) << '\n';
}

}  // namespace ctsgan
