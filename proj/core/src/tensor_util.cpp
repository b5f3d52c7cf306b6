#include "ctsgan/tensor_util.hpp"

#include <cstring>

#include "ctsgan/error.hpp"

namespace ctsgan {

torch::Tensor normal_tensor(Rng& rng, at::IntArrayRef shape) {
  auto t = torch::empty(shape, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<float>(rng.normal());
  return t;
}

torch::Tensor to_tensor(const Volume& v) {
  auto t = torch::empty({v.depth(), v.height(), v.width()}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), v.voxels().data(), v.voxels().size_bytes());
  return t;
}

torch::Tensor to_tensor(const Slice3& s) {
  auto t = torch::empty({3, s.height, s.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), s.planes.data(), s.planes.size() * sizeof(float));
  return t;
}

torch::Tensor to_tensor(const Slab& s) {
  auto t = torch::empty({s.length, s.height, s.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), s.planes.data(), s.planes.size() * sizeof(float));
  return t;
}

Volume volume_from_tensor(const torch::Tensor& t, Provenance provenance, std::string id) {
  if (t.dim() != 3) throw ArgumentError("volume tensor must be [D,H,W]");
  auto c = t.detach().to(torch::kFloat32).contiguous();
  std::vector<float> vox(static_cast<std::size_t>(c.numel()));
  std::memcpy(vox.data(), c.data_ptr<float>(), vox.size() * sizeof(float));
  return Volume({c.size(0), c.size(1), c.size(2)}, std::move(vox), {1.0, 1.0, 1.0}, provenance,
                std::move(id));
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& module) {
  std::vector<torch::Tensor> out;
  for (const auto& p : module.parameters()) out.push_back(p.detach().clone());
  for (const auto& b : module.buffers()) out.push_back(b.detach().clone());
  return out;
}

bool bit_identical(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].sizes() != b[i].sizes() || a[i].scalar_type() != b[i].scalar_type()) return false;
    const auto x = a[i].contiguous();
    const auto y = b[i].contiguous();
    if (std::memcmp(x.data_ptr(), y.data_ptr(), static_cast<std::size_t>(x.nbytes())) != 0) {
      return false;
    }
  }
  return true;
}

void zero_parameters(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) p.zero_();
}

}  // namespace ctsgan
