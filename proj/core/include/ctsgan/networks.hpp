#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace ctsgan {

struct Stage {
  std::int64_t channels = 0;
  std::int64_t stride = 1;
};

void to_json(nlohmann::json& j, const Stage& s);
void from_json(const nlohmann::json& j, Stage& s);

// Slice generator: linear projection to a seed feature map, then one
// (upsample, conv) block per stage, ending in a 3-channel sigmoid output.
struct GeneratorSpec {
  std::int64_t latent_dim = 64;
  std::int64_t out_hw = 32;
  std::int64_t channels = 3;
  std::vector<Stage> upsample_stages{{64, 2}, {32, 2}, {16, 2}};

  // Edge of the projected seed map; out_hw divided by the product of strides.
  std::int64_t seed_hw() const;
  void validate() const;
};

enum class PositionConditioning { index_channel, none };

struct SliceDiscSpec {
  std::int64_t in_channels = 3;
  std::int64_t in_hw = 32;
  std::vector<Stage> downsample_stages{{32, 2}, {64, 2}, {128, 2}};
  PositionConditioning position_conditioning = PositionConditioning::index_channel;

  void validate() const;
};

struct SlabDiscSpec {
  std::int64_t slab_len = 8;
  std::int64_t in_hw = 32;
  std::vector<Stage> downsample_stages{{16, 2}, {32, 2}, {64, 2}};

  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const SliceDiscSpec& s);
void from_json(const nlohmann::json& j, SliceDiscSpec& s);
void to_json(nlohmann::json& j, const SlabDiscSpec& s);
void from_json(const nlohmann::json& j, SlabDiscSpec& s);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  // z [B, latent_dim] -> [B, channels, out_hw, out_hw] in [0, 1]
  torch::Tensor forward(const torch::Tensor& z);

  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Linear project_{nullptr};
  torch::nn::ModuleList blocks_;
  torch::nn::Conv2d to_planes_{nullptr};
};
TORCH_MODULE(Generator);

class SliceDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit SliceDiscriminatorImpl(const SliceDiscSpec& spec);

  // planes [B,3,H,W], position [B] already divided by (depth - 1) -> raw score [B]
  torch::Tensor forward(const torch::Tensor& planes, const torch::Tensor& position);

  const SliceDiscSpec& spec() const { return spec_; }

 private:
  SliceDiscSpec spec_;
  torch::nn::Sequential body_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(SliceDiscriminator);

class SlabDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit SlabDiscriminatorImpl(const SlabDiscSpec& spec);

  // slab [B,T,H,W] -> raw score [B]
  torch::Tensor forward(const torch::Tensor& slab);

  const SlabDiscSpec& spec() const { return spec_; }

 private:
  SlabDiscSpec spec_;
  torch::nn::Sequential body_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(SlabDiscriminator);

}  // namespace ctsgan
