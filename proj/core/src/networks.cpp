#include "ctsgan/networks.hpp"

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

namespace nn = torch::nn;

// Per-pixel feature normalization; keeps generator activations bounded
// without coupling samples inside a batch.
class PixelNormImpl : public nn::Module {
 public:
  torch::Tensor forward(const torch::Tensor& x) {
    return x * torch::rsqrt(x.pow(2).mean(1, true) + 1e-8);
  }
};
TORCH_MODULE(PixelNorm);

void check_stages(const std::vector<Stage>& stages, const char* what) {
  if (stages.empty()) throw ArgumentError(std::string(what) + ": at least one stage required");
  for (const auto& s : stages) {
    if (s.channels < 1 || (s.stride != 1 && s.stride != 2)) {
      throw ArgumentError(std::string(what) + ": stages need channels >= 1 and stride 1 or 2");
    }
  }
}

std::int64_t spatial_after(std::int64_t hw, const std::vector<Stage>& stages) {
  for (const auto& s : stages) {
    if (hw % s.stride != 0) return -1;
    hw /= s.stride;
  }
  return hw;
}

}  // namespace

void to_json(nlohmann::json& j, const Stage& s) { j = {s.channels, s.stride}; }
void from_json(const nlohmann::json& j, Stage& s) {
  s.channels = j.at(0).get<std::int64_t>();
  s.stride = j.at(1).get<std::int64_t>();
}

std::int64_t GeneratorSpec::seed_hw() const {
  std::int64_t prod = 1;
  for (const auto& s : upsample_stages) prod *= s.stride;
  return out_hw / prod;
}

void GeneratorSpec::validate() const {
  check_stages(upsample_stages, "generator");
  if (latent_dim < 1 || channels < 1 || out_hw < 1) throw ArgumentError("generator: bad dimensions");
  std::int64_t prod = 1;
  for (const auto& s : upsample_stages) prod *= s.stride;
  if (out_hw % prod != 0) {
    throw ArgumentError("generator: strides do not map the seed map onto out_hw exactly");
  }
}

void SliceDiscSpec::validate() const {
  check_stages(downsample_stages, "slice discriminator");
  if (in_channels < 1 || in_hw < 1) throw ArgumentError("slice discriminator: bad dimensions");
  if (spatial_after(in_hw, downsample_stages) < 1) {
    throw ArgumentError("slice discriminator: strides do not divide the input edge");
  }
}

void SlabDiscSpec::validate() const {
  check_stages(downsample_stages, "slab discriminator");
  if (slab_len < 2 || in_hw < 1) throw ArgumentError("slab discriminator: bad dimensions");
  if (spatial_after(in_hw, downsample_stages) < 1) {
    throw ArgumentError("slab discriminator: strides do not divide the input edge");
  }
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"latent_dim", s.latent_dim}, {"out_hw", s.out_hw}, {"channels", s.channels},
       {"upsample_stages", s.upsample_stages}};
}
void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.out_hw = j.value("out_hw", s.out_hw);
  s.channels = j.value("channels", s.channels);
  if (j.contains("upsample_stages")) s.upsample_stages = j["upsample_stages"].get<std::vector<Stage>>();
}
void to_json(nlohmann::json& j, const SliceDiscSpec& s) {
  j = {{"in_channels", s.in_channels},
       {"in_hw", s.in_hw},
       {"downsample_stages", s.downsample_stages},
       {"position_conditioning",
        s.position_conditioning == PositionConditioning::index_channel ? "index-channel" : "none"}};
}
void from_json(const nlohmann::json& j, SliceDiscSpec& s) {
  s.in_channels = j.value("in_channels", s.in_channels);
  s.in_hw = j.value("in_hw", s.in_hw);
  if (j.contains("downsample_stages")) s.downsample_stages = j["downsample_stages"].get<std::vector<Stage>>();
  if (j.contains("position_conditioning")) {
    const auto v = j["position_conditioning"].get<std::string>();
    if (v == "index-channel") {
      s.position_conditioning = PositionConditioning::index_channel;
    } else if (v == "none") {
      s.position_conditioning = PositionConditioning::none;
    } else {
      throw ConfigError("unknown position_conditioning '" + v + "'");
    }
  }
}
void to_json(nlohmann::json& j, const SlabDiscSpec& s) {
  j = {{"slab_len", s.slab_len}, {"in_hw", s.in_hw}, {"downsample_stages", s.downsample_stages}};
}
void from_json(const nlohmann::json& j, SlabDiscSpec& s) {
  s.slab_len = j.value("slab_len", s.slab_len);
  s.in_hw = j.value("in_hw", s.in_hw);
  if (j.contains("downsample_stages")) s.downsample_stages = j["downsample_stages"].get<std::vector<Stage>>();
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto seed = spec_.seed_hw();
  const auto c0 = spec_.upsample_stages.front().channels;
  project_ = register_module("project", nn::Linear(spec_.latent_dim, c0 * seed * seed));
  std::int64_t in = c0;
  for (const auto& st : spec_.upsample_stages) {
    nn::Sequential block;
    if (st.stride > 1) {
      block->push_back(nn::Upsample(nn::UpsampleOptions()
                                        .scale_factor(std::vector<double>{double(st.stride), double(st.stride)})
                                        .mode(torch::kNearest)));
    }
    block->push_back(nn::Conv2d(nn::Conv2dOptions(in, st.channels, 3).padding(1)));
    block->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    block->push_back(PixelNorm());
    blocks_->push_back(block);
    in = st.channels;
  }
  register_module("blocks", blocks_);
  to_planes_ = register_module("to_planes", nn::Conv2d(nn::Conv2dOptions(in, spec_.channels, 3).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != spec_.latent_dim) {
    throw ArgumentError("generator expects z [B," + std::to_string(spec_.latent_dim) + "]");
  }
  const auto seed = spec_.seed_hw();
  auto x = project_->forward(z).view({z.size(0), spec_.upsample_stages.front().channels, seed, seed});
  x = torch::leaky_relu(x, 0.2);
  for (const auto& block : *blocks_) {
    x = block->as<nn::Sequential>()->forward(x);
  }
  return torch::sigmoid(to_planes_->forward(x));
}

SliceDiscriminatorImpl::SliceDiscriminatorImpl(const SliceDiscSpec& spec) : spec_(spec) {
  spec_.validate();
  std::int64_t in = spec_.in_channels +
                    (spec_.position_conditioning == PositionConditioning::index_channel ? 1 : 0);
  std::int64_t hw = spec_.in_hw;
  for (const auto& st : spec_.downsample_stages) {
    const auto k = st.stride == 2 ? 4 : 3;
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, st.channels, k).stride(st.stride).padding(1)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = st.channels;
    hw /= st.stride;
  }
  register_module("body", body_);
  head_ = register_module("head", nn::Linear(in * hw * hw, 1));
}

torch::Tensor SliceDiscriminatorImpl::forward(const torch::Tensor& planes, const torch::Tensor& position) {
  if (planes.dim() != 4 || planes.size(1) != spec_.in_channels || planes.size(2) != spec_.in_hw ||
      planes.size(3) != spec_.in_hw) {
    throw ArgumentError("slice discriminator input shape mismatch");
  }
  auto x = planes;
  if (spec_.position_conditioning == PositionConditioning::index_channel) {
    if (position.dim() != 1 || position.size(0) != planes.size(0)) {
      throw ArgumentError("slice discriminator expects one position per sample");
    }
    auto channel = position.to(planes.dtype()).view({-1, 1, 1, 1}).expand({planes.size(0), 1, spec_.in_hw, spec_.in_hw});
    x = torch::cat({planes, channel}, 1);
  }
  return head_->forward(body_->forward(x).flatten(1)).squeeze(1);
}

SlabDiscriminatorImpl::SlabDiscriminatorImpl(const SlabDiscSpec& spec) : spec_(spec) {
  spec_.validate();
  std::int64_t in = 1;
  std::int64_t depth = spec_.slab_len;
  std::int64_t hw = spec_.in_hw;
  for (const auto& st : spec_.downsample_stages) {
    const std::int64_t ds = (st.stride == 2 && depth % 2 == 0) ? 2 : 1;
    const std::int64_t kd = ds == 2 ? 4 : 3;
    const std::int64_t kp = st.stride == 2 ? 4 : 3;
    body_->push_back(nn::Conv3d(nn::Conv3dOptions(in, st.channels, {kd, kp, kp})
                                    .stride({ds, st.stride, st.stride})
                                    .padding(1)));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = st.channels;
    depth /= ds;
    hw /= st.stride;
  }
  register_module("body", body_);
  head_ = register_module("head", nn::Linear(in * depth * hw * hw, 1));
}

torch::Tensor SlabDiscriminatorImpl::forward(const torch::Tensor& slab) {
  if (slab.dim() != 4 || slab.size(1) != spec_.slab_len || slab.size(2) != spec_.in_hw ||
      slab.size(3) != spec_.in_hw) {
    throw ArgumentError("slab discriminator expects [B," + std::to_string(spec_.slab_len) + "," +
                        std::to_string(spec_.in_hw) + "," + std::to_string(spec_.in_hw) + "]");
  }
  return head_->forward(body_->forward(slab.unsqueeze(1)).flatten(1)).squeeze(1);
}

}  // namespace ctsgan
