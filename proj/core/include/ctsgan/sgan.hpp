#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/latent.hpp"
#include "ctsgan/networks.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

enum class LossKind { js, wasserstein };

std::string_view to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

// Everything needed to rebuild a model from scratch. `desk()` is the CI
// scale; `full_scale()` keeps the 224-voxel configuration on record.
struct SganConfig {
  std::int64_t depth = 32;           // S
  std::int64_t plane_hw = 32;
  std::int64_t slab_len = 8;         // T
  std::int64_t slices_per_slab = 4;  // N
  std::int64_t batch = 4;
  LatentConfig latent;
  GeneratorSpec generator;
  SliceDiscSpec slice_disc;
  SlabDiscSpec slab_disc;
  LossKind loss = LossKind::js;
  double gp_gamma = 10.0;
  AdamConfig adam;
  std::uint64_t seed = 0;

  static SganConfig desk();
  static SganConfig full_scale();

  // Copies scale fields into the sub-specs so they agree with each other.
  SganConfig& sync();
  void validate() const;
};

void to_json(nlohmann::json& j, const SganConfig& c);
void from_json(const nlohmann::json& j, SganConfig& c);

// The four sub-networks, their optimizers and the step counter. Weights are
// initialized deterministically from config.seed.
class ModelState {
 public:
  explicit ModelState(const SganConfig& config);

  ModelState(const ModelState&) = delete;
  ModelState& operator=(const ModelState&) = delete;

  const SganConfig& config() const { return config_; }

  Generator generator{nullptr};
  Sequencer sequencer{nullptr};
  SliceDiscriminator slice_disc{nullptr};
  SlabDiscriminator slab_disc{nullptr};

  torch::optim::Adam& generator_optimizer() { return *generator_opt_; }
  torch::optim::Adam& sequencer_optimizer() { return *sequencer_opt_; }
  torch::optim::Adam& slice_disc_optimizer() { return *slice_disc_opt_; }
  torch::optim::Adam& slab_disc_optimizer() { return *slab_disc_opt_; }

  std::int64_t step = 0;

 private:
  SganConfig config_;
  std::unique_ptr<torch::optim::Adam> generator_opt_;
  std::unique_ptr<torch::optim::Adam> sequencer_opt_;
  std::unique_ptr<torch::optim::Adam> slice_disc_opt_;
  std::unique_ptr<torch::optim::Adam> slab_disc_opt_;
};

Slice3 generate_slice(Generator& generator, const torch::Tensor& z, std::int64_t center_index);

// Piles the center planes of consecutive Slice3 into a volume; the outer
// planes of the first and last Slice3 supply planes 0 and S-1.
Volume assemble_volume(std::span<const Slice3> slices);

Volume generate_volume(ModelState& model, std::uint64_t seed, std::int64_t depth);

double discriminate_slice(SliceDiscriminator& disc, const Slice3& s, std::int64_t position,
                          std::int64_t depth);
double discriminate_slab(SlabDiscriminator& disc, const Slab& slab);

}  // namespace ctsgan
