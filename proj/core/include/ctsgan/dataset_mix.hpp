#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctsgan/nodule.hpp"
#include "ctsgan/nodule_cgan.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

enum class Label { clean, nodule };
enum class Pathway { untouched, erased, injected };
// Domain a carries nodules (ground truth), domain b is clean; synthetic
// volumes come from the generator.
enum class Domain { a, b, synthetic };
enum class Split { train, val, test };

std::string_view to_string(Label v);
std::string_view to_string(Pathway v);
std::string_view to_string(Domain v);
std::string_view to_string(Split v);
Label label_from_string(std::string_view s);
Pathway pathway_from_string(std::string_view s);
Domain domain_from_string(std::string_view s);
Split split_from_string(std::string_view s);

struct MixEntry {
  std::string id;
  std::string path;  // volume base path (no extension); empty until materialized
  Label label = Label::clean;
  Pathway pathway = Pathway::untouched;
  Domain domain = Domain::a;
  Split split = Split::train;
};

void to_json(nlohmann::json& j, const MixEntry& e);
void from_json(const nlohmann::json& j, MixEntry& e);

struct DatasetMix {
  std::vector<MixEntry> entries;

  std::vector<MixEntry> split(Split s) const;
  // Throws FormatError on duplicate ids.
  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetMix& m);
void from_json(const nlohmann::json& j, DatasetMix& m);
// Volume paths are stored relative to the file's directory.
void save_dataset_mix(const DatasetMix& mix, const std::filesystem::path& file);
DatasetMix load_dataset_mix(const std::filesystem::path& file);

struct SplitRatios {
  double train = 0.75;
  double val = 0.125;
  double test = 0.125;
};

// Split sizes with largest-remainder rounding; they always sum to `total`.
struct SplitSizes {
  std::int64_t train = 0;
  std::int64_t val = 0;
  std::int64_t test = 0;
};
SplitSizes split_sizes(std::int64_t total, const SplitRatios& ratios);

struct SourceEntry {
  std::string id;
  Domain domain = Domain::a;
};

// Decides which half of each domain is flipped (domain a: erased to clean,
// domain b: injected to nodule) and assigns splits so val/test are label
// balanced and each (domain, label) stratum is spread evenly. Throws
// ConfigError when a stratum is too small to fill its share.
DatasetMix plan_unbiased_dataset(std::span<const SourceEntry> sources, Rng& rng, const SplitRatios& ratios = {});

// Empirical mutual information between label and domain, in bits.
double label_domain_mutual_information(std::span<const MixEntry> entries);

// A source volume plus what the mixer needs to edit it.
struct SourceVolume {
  Volume volume;
  std::vector<std::uint8_t> lung_mask;
  std::vector<NoduleSpec> nodules;  // ground-truth nodules (domain a)
  Domain domain = Domain::a;
};

struct NoduleTools {
  NoduleCgan* injector = nullptr;
  NoduleCgan* eraser = nullptr;
  CountDistribution counts;
  RadiusDistribution radii;
};

// Plans the mix, applies the eraser/injector and writes every volume to
// `out_dir/<id>`.
DatasetMix build_unbiased_dataset(std::span<const SourceVolume> sources, NoduleTools& tools, Rng& rng,
                                  const std::filesystem::path& out_dir, const SplitRatios& ratios = {});

// Synthetic training set: nodules injected into half of the volumes, taken
// in seeded shuffle order and skipping volumes whose estimated lung mask has
// no room. All entries are in the train split. Throws PlacementError when
// fewer than half can take a nodule.
DatasetMix build_synthetic_dataset(std::span<const Volume> volumes, NoduleTools& tools, Rng& rng,
                                   const std::filesystem::path& out_dir);

}  // namespace ctsgan
