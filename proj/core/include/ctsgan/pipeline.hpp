#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctsgan/detect.hpp"
#include "ctsgan/evaluation.hpp"
#include "ctsgan/manifest.hpp"
#include "ctsgan/nodule_cgan.hpp"
#include "ctsgan/phantom.hpp"

namespace ctsgan {

// Receives one structured log record per event (training steps, stage
// boundaries). Records may carry wall-clock fields and are not artifacts.
using LogSink = std::function<void(const nlohmann::json&)>;

// Artifact layout under the manifest output directory.
namespace paths {
std::filesystem::path phantoms(const ExperimentManifest& m);
std::filesystem::path sgan(const ExperimentManifest& m);
std::filesystem::path generated(const ExperimentManifest& m);
std::filesystem::path metrics(const ExperimentManifest& m);
std::filesystem::path injector(const ExperimentManifest& m);
std::filesystem::path eraser(const ExperimentManifest& m);
std::filesystem::path nodulesim_report(const ExperimentManifest& m);
std::filesystem::path detect(const ExperimentManifest& m);
std::filesystem::path montages(const ExperimentManifest& m);
}  // namespace paths

// Per-volume phantom parameters for corpus `stream` (train/heldout, nodule
// training, domain a, domain b) and index.
enum class PhantomStream : std::uint64_t { corpus = 0, nodule_training = 1, domain_a = 2, domain_b = 3 };
PhantomParams phantom_params(const PhantomParams& base, std::uint64_t manifest_seed, PhantomStream stream,
                             std::int64_t index);

std::string phantom_id(std::int64_t index);
std::string generated_id(std::uint64_t seed);

// The phantom corpus as written by the phantom stage: the first `count` are
// for training, the rest held out.
struct PhantomCorpus {
  std::vector<Phantom> train;
  std::vector<Phantom> heldout;
};
PhantomCorpus build_phantom_corpus(const ExperimentManifest& m);

struct MetricsSummary {
  std::vector<MetricReport> rows;  // trained, untrained, phantom reference
  double generated_plane_correlation = 0.0;
  double extractor_heldout_accuracy = 0.0;
};

void to_json(nlohmann::json& j, const MetricsSummary& s);
void from_json(const nlohmann::json& j, MetricsSummary& s);

struct NoduleSummary {
  std::int64_t pairs = 0;
  std::int64_t probes = 0;
  double roundtrip_mae = 0.0;    // erase(inject(v)) vs v inside the VOI
  double outside_change = 0.0;   // injector output vs input outside the mask
  double sphere_gain = 0.0;      // mean intensity change inside the sphere
  double clean_erase_change = 0.0;  // |mean change| when erasing a clean VOI
};

void to_json(nlohmann::json& j, const NoduleSummary& s);
void from_json(const nlohmann::json& j, NoduleSummary& s);

// Stages. Each reads only the manifest and earlier artifacts in the output
// directory and writes deterministic artifacts.
void stage_phantom(const ExperimentManifest& m, const LogSink& log);
void stage_train_sgan(const ExperimentManifest& m, const LogSink& log);
std::vector<std::filesystem::path> stage_generate(const ExperimentManifest& m, const LogSink& log);
MetricsSummary stage_metrics(const ExperimentManifest& m, const LogSink& log);
NoduleSummary stage_nodulesim(const ExperimentManifest& m, const LogSink& log);
std::vector<RegimeReport> stage_detect(const ExperimentManifest& m, const LogSink& log);
void stage_montage(const std::filesystem::path& volume, const std::filesystem::path& png, std::int64_t tiles);
void run_experiment(const ExperimentManifest& m, const LogSink& log);

// Nodule edits of a single volume with the trained models. A missing
// `spec` samples a placement plan from the manifest seed. The lung mask is
// estimated from the volume.
Volume edit_volume(const ExperimentManifest& m, NoduleDirection direction, const Volume& v,
                   const std::optional<NoduleSpec>& spec, const LogSink& log);

// Loads the trained injector/eraser pair; throws Error when the nodule
// stage has not run.
NoduleCgan load_nodule_model(const ExperimentManifest& m, NoduleDirection direction);

}  // namespace ctsgan
