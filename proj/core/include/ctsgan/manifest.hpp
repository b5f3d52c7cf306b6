#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctsgan/detect.hpp"
#include "ctsgan/evaluation.hpp"
#include "ctsgan/nodule.hpp"
#include "ctsgan/nodule_cgan.hpp"
#include "ctsgan/phantom.hpp"
#include "ctsgan/sgan.hpp"

namespace ctsgan {

inline constexpr int kManifestFormatVersion = 1;

void to_json(nlohmann::json& j, const DeviceNoise& n);
void from_json(const nlohmann::json& j, DeviceNoise& n);
void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);
void to_json(nlohmann::json& j, const ExtractorTraining& t);
void from_json(const nlohmann::json& j, ExtractorTraining& t);
void to_json(nlohmann::json& j, const SlicewiseFidOptions& o);
void from_json(const nlohmann::json& j, SlicewiseFidOptions& o);

// Training corpus plus a held-out set, both from `params` with per-volume
// seeds derived from the manifest seed.
struct PhantomStage {
  std::int64_t count = 200;
  std::int64_t heldout = 50;
  PhantomParams params;
};

struct SganStage {
  SganConfig config = SganConfig::desk();
  std::int64_t steps = 3000;
  std::int64_t log_every = 50;
};

struct GenerateStage {
  std::int64_t count = 50;
  std::uint64_t seed = 7;
};

struct MetricsStage {
  FeatureExtractorSpec extractor;
  ExtractorTraining training;
  SlicewiseFidOptions fid;
};

struct NoduleStage {
  NoduleCganSpec cgan;
  std::int64_t steps = 500;
  std::int64_t train_phantoms = 48;
  CountDistribution counts;
  RadiusDistribution radii;
};

struct DetectStage {
  RegimeConfig regimes;
  std::vector<double> sizes{2, 3, 4, 5, 6, 7};
  std::int64_t volumes_per_domain = 80;
  std::int64_t synthetic_count = 400;
  DeviceNoise domain_a_noise{0.01, 0.0, 6.0};
  DeviceNoise domain_b_noise{0.02, 0.03, 6.0};
};

void to_json(nlohmann::json& j, const PhantomStage& s);
void from_json(const nlohmann::json& j, PhantomStage& s);
void to_json(nlohmann::json& j, const SganStage& s);
void from_json(const nlohmann::json& j, SganStage& s);
void to_json(nlohmann::json& j, const GenerateStage& s);
void from_json(const nlohmann::json& j, GenerateStage& s);
void to_json(nlohmann::json& j, const MetricsStage& s);
void from_json(const nlohmann::json& j, MetricsStage& s);
void to_json(nlohmann::json& j, const NoduleStage& s);
void from_json(const nlohmann::json& j, NoduleStage& s);
void to_json(nlohmann::json& j, const DetectStage& s);
void from_json(const nlohmann::json& j, DetectStage& s);

// One JSON document describing every stage of a run. Sections are optional
// in the file; a subcommand asks for the ones it needs.
struct ExperimentManifest {
  int format_version = kManifestFormatVersion;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "ctsgan-out";
  std::optional<PhantomStage> phantom;
  std::optional<SganStage> sgan_train;
  std::optional<GenerateStage> generate;
  std::optional<MetricsStage> metrics;
  std::optional<NoduleStage> nodulesim;
  std::optional<DetectStage> detect;

  // All sections at their defaults.
  static ExperimentManifest defaults();

  // Throw UsageError naming the section when it is absent.
  const PhantomStage& require_phantom() const;
  const SganStage& require_sgan_train() const;
  const GenerateStage& require_generate() const;
  const MetricsStage& require_metrics() const;
  const NoduleStage& require_nodulesim() const;
  const DetectStage& require_detect() const;
};

void to_json(nlohmann::json& j, const ExperimentManifest& m);
void from_json(const nlohmann::json& j, ExperimentManifest& m);

// Parse errors and version mismatches raise UsageError.
ExperimentManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const ExperimentManifest& m, const std::filesystem::path& file);

}  // namespace ctsgan
