#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "ctsgan/rng.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

// Standard-normal float tensor drawn from `rng` in row-major order.
torch::Tensor normal_tensor(Rng& rng, at::IntArrayRef shape);

// [D,H,W] float tensor sharing nothing with the volume.
torch::Tensor to_tensor(const Volume& v);
// [3,H,W]
torch::Tensor to_tensor(const Slice3& s);
// [T,H,W]
torch::Tensor to_tensor(const Slab& s);

Volume volume_from_tensor(const torch::Tensor& t, Provenance provenance, std::string id = {});

// Deep copies of every parameter and buffer, in registration order.
std::vector<torch::Tensor> snapshot(const torch::nn::Module& module);
bool bit_identical(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b);

void zero_parameters(torch::nn::Module& module);

}  // namespace ctsgan
