#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/nodule.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/sgan.hpp"

namespace ctsgan {

// Injector fills a masked sphere with a nodule; eraser replaces a nodule
// with surrounding tissue. Both run the same networks.
enum class NoduleDirection { inject, erase };

std::string_view to_string(NoduleDirection d);
NoduleDirection nodule_direction_from_string(std::string_view s);

struct NoduleCganSpec {
  std::int64_t voi_edge = 16;
  std::int64_t width = 16;
  double l1_weight = 10.0;
  double gp_gamma = 1.0;
  std::int64_t batch = 8;
  AdamConfig adam{2e-4, 0.5, 0.999};

  void validate() const;
};

void to_json(nlohmann::json& j, const NoduleCganSpec& s);
void from_json(const nlohmann::json& j, NoduleCganSpec& s);

// Encoder-decoder over [B,2,E,E,E] (voi, conditioning). Produces content c and
// gate a, both sigmoid, and returns a * voi + (1 - a) * c.
class VoiGeneratorImpl : public torch::nn::Module {
 public:
  explicit VoiGeneratorImpl(const NoduleCganSpec& spec);
  torch::Tensor forward(const torch::Tensor& input);

 private:
  torch::nn::Conv3d enc_{nullptr}, down_{nullptr}, mid_{nullptr}, up_{nullptr}, fuse_{nullptr}, out_{nullptr};
};
TORCH_MODULE(VoiGenerator);

// Scores [B,3,E,E,E] = (voi, conditioning, candidate) -> raw score [B].
class VoiDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit VoiDiscriminatorImpl(const NoduleCganSpec& spec);
  torch::Tensor forward(const torch::Tensor& input);

 private:
  torch::nn::Sequential body_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(VoiDiscriminator);

// One training example: generator input VOI, the target VOI, and the nodule
// being painted in or out.
struct VoiPair {
  Voi input;
  Voi target;
  NoduleSpec nodule;
};

struct CganStepReport {
  std::int64_t step = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double l1 = 0.0;
  double gp = 0.0;
};

using CganCallback = std::function<void(const CganStepReport&, double wall_ms)>;

class NoduleCgan {
 public:
  NoduleCgan(const NoduleCganSpec& spec, NoduleDirection direction, std::uint64_t seed);

  const NoduleCganSpec& spec() const { return spec_; }
  NoduleDirection direction() const { return direction_; }

  // Generator input for one VOI: the injector sees the VOI with the nodule
  // sphere cleared, the eraser sees it untouched. The conditioning channel is
  // the mask sphere scaled by the nodule intensity (injector) or 1 (eraser).
  torch::Tensor conditioned_input(const Voi& voi, const NoduleSpec& nodule) const;

  // Deterministic inference; output voxels lie in [0, 1].
  Voi apply(const Voi& voi, const NoduleSpec& nodule);

  void train(std::span<const VoiPair> pairs, std::int64_t steps, Rng& rng, const CganCallback& callback = {});

  void save(const std::filesystem::path& dir) const;
  static NoduleCgan load(const std::filesystem::path& dir);

  VoiGenerator generator{nullptr};
  VoiDiscriminator discriminator{nullptr};

 private:
  NoduleCganSpec spec_;
  NoduleDirection direction_;
  std::uint64_t seed_;
};

// Injector pairs from phantoms carrying rendered nodules: (masked VOI, VOI
// with nodule).
std::vector<VoiPair> injector_pairs(std::span<const NodulePhantom> phantoms, std::int64_t voi_edge);
// Eraser pairs: (injector output at each nodule site, clean VOI).
std::vector<VoiPair> eraser_pairs(NoduleCgan& injector, std::span<const NodulePhantom> phantoms);

// Both throw PlacementError when the nodule center is outside the lung mask.
// Only the VOI footprint of the result differs from `v`.
Volume inject_nodule(NoduleCgan& injector, const Volume& v, const NoduleSpec& spec,
                     std::span<const std::uint8_t> lung_mask);
Volume erase_nodule(NoduleCgan& eraser, const Volume& v, const NoduleSpec& spec,
                    std::span<const std::uint8_t> lung_mask);

// Apply several nodules in turn; provenance changes once.
Volume inject_nodules(NoduleCgan& injector, const Volume& v, std::span<const NoduleSpec> specs,
                      std::span<const std::uint8_t> lung_mask);
Volume erase_nodules(NoduleCgan& eraser, const Volume& v, std::span<const NoduleSpec> specs,
                     std::span<const std::uint8_t> lung_mask);

// Mean voxel value strictly inside the nodule sphere.
double sphere_mean(const Volume& v, const NoduleSpec& spec);

}  // namespace ctsgan
