#include "ctsgan/sgan.hpp"

#include <cstring>

#include "ctsgan/error.hpp"
#include "ctsgan/tensor_util.hpp"

namespace ctsgan {
namespace {

std::unique_ptr<torch::optim::Adam> make_adam(torch::nn::Module& m, const AdamConfig& a) {
  return std::make_unique<torch::optim::Adam>(
      m.parameters(), torch::optim::AdamOptions(a.lr).betas({a.beta1, a.beta2}));
}

}  // namespace

std::string_view to_string(LossKind k) { return k == LossKind::js ? "js" : "wasserstein"; }

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "js") return LossKind::js;
  if (s == "wasserstein") return LossKind::wasserstein;
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

SganConfig SganConfig::desk() {
  SganConfig c;
  c.sync();
  return c;
}

SganConfig SganConfig::full_scale() {
  SganConfig c;
  c.depth = 224;
  c.plane_hw = 224;
  c.slab_len = 16;
  c.slices_per_slab = 8;
  c.generator.upsample_stages = {{256, 2}, {128, 2}, {64, 2}, {32, 2}, {16, 2}};
  c.slice_disc.downsample_stages = {{16, 2}, {32, 2}, {64, 2}, {128, 2}, {256, 2}};
  c.slab_disc.downsample_stages = {{8, 2}, {16, 2}, {32, 2}, {64, 2}, {128, 2}};
  c.sync();
  return c;
}

SganConfig& SganConfig::sync() {
  latent.seq_len = depth - 2;
  generator.latent_dim = latent.latent_dim();
  generator.out_hw = plane_hw;
  generator.channels = 3;
  slice_disc.in_channels = 3;
  slice_disc.in_hw = plane_hw;
  slab_disc.in_hw = plane_hw;
  slab_disc.slab_len = slab_len;
  return *this;
}

void SganConfig::validate() const {
  if (depth < 4 || depth % 2 != 0 || plane_hw < 4 || plane_hw % 2 != 0) {
    throw ConfigError("sgan: depth and plane_hw must be even and >= 4");
  }
  if (slab_len < 3 || slab_len > depth) throw ConfigError("sgan: slab_len must lie in [3, depth]");
  if (slices_per_slab < 1 || batch < 1) throw ConfigError("sgan: slices_per_slab and batch must be >= 1");
  if (gp_gamma < 0.0) throw ConfigError("sgan: gp_gamma must be >= 0");
  if (latent.seq_len != depth - 2 || generator.latent_dim != latent.latent_dim() ||
      generator.out_hw != plane_hw || slice_disc.in_hw != plane_hw || slab_disc.in_hw != plane_hw ||
      slab_disc.slab_len != slab_len || generator.channels != 3 || slice_disc.in_channels != 3) {
    throw ConfigError("sgan: sub-network specs disagree with the scale fields (call sync())");
  }
  latent.validate();
  generator.validate();
  slice_disc.validate();
  slab_disc.validate();
}

void to_json(nlohmann::json& j, const SganConfig& c) {
  j = {{"depth", c.depth},
       {"plane_hw", c.plane_hw},
       {"slab_len", c.slab_len},
       {"slices_per_slab", c.slices_per_slab},
       {"batch", c.batch},
       {"latent", c.latent},
       {"generator", c.generator},
       {"slice_disc", c.slice_disc},
       {"slab_disc", c.slab_disc},
       {"loss", to_string(c.loss)},
       {"gp_gamma", c.gp_gamma},
       {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}}},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SganConfig& c) {
  c.depth = j.value("depth", c.depth);
  c.plane_hw = j.value("plane_hw", c.plane_hw);
  c.slab_len = j.value("slab_len", c.slab_len);
  c.slices_per_slab = j.value("slices_per_slab", c.slices_per_slab);
  c.batch = j.value("batch", c.batch);
  if (j.contains("latent")) c.latent = j["latent"].get<LatentConfig>();
  if (j.contains("generator")) c.generator = j["generator"].get<GeneratorSpec>();
  if (j.contains("slice_disc")) c.slice_disc = j["slice_disc"].get<SliceDiscSpec>();
  if (j.contains("slab_disc")) c.slab_disc = j["slab_disc"].get<SlabDiscSpec>();
  if (j.contains("loss")) c.loss = loss_kind_from_string(j["loss"].get<std::string>());
  c.gp_gamma = j.value("gp_gamma", c.gp_gamma);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
  }
  c.seed = j.value("seed", c.seed);
  c.sync();
}

ModelState::ModelState(const SganConfig& config) : config_(config) {
  config_.validate();
  torch::manual_seed(config_.seed);
  generator = Generator(config_.generator);
  sequencer = Sequencer(config_.latent);
  slice_disc = SliceDiscriminator(config_.slice_disc);
  slab_disc = SlabDiscriminator(config_.slab_disc);
  generator_opt_ = make_adam(*generator, config_.adam);
  sequencer_opt_ = make_adam(*sequencer, config_.adam);
  slice_disc_opt_ = make_adam(*slice_disc, config_.adam);
  slab_disc_opt_ = make_adam(*slab_disc, config_.adam);
}

Slice3 generate_slice(Generator& generator, const torch::Tensor& z, std::int64_t center_index) {
  const auto& spec = generator->spec();
  if (z.dim() != 1 || z.size(0) != spec.latent_dim) {
    throw ArgumentError("latent vector has length " + std::to_string(z.numel()) + ", expected " +
                        std::to_string(spec.latent_dim));
  }
  torch::NoGradGuard no_grad;
  auto out = generator->forward(z.unsqueeze(0).to(torch::kFloat32)).squeeze(0).contiguous();
  Slice3 s;
  s.height = out.size(1);
  s.width = out.size(2);
  s.center_index = center_index;
  s.planes.resize(static_cast<std::size_t>(out.numel()));
  std::memcpy(s.planes.data(), out.data_ptr<float>(), s.planes.size() * sizeof(float));
  return s;
}

Volume assemble_volume(std::span<const Slice3> slices) {
  if (slices.empty()) throw AssemblyError("no slices to assemble");
  const auto H = slices.front().height;
  const auto W = slices.front().width;
  const auto n = static_cast<std::size_t>(H * W);
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto& s = slices[k];
    if (s.center_index != static_cast<std::int64_t>(k) + 1) {
      throw AssemblyError("slice at position " + std::to_string(k) + " has center " +
                          std::to_string(s.center_index) + ", expected " + std::to_string(k + 1));
    }
    if (s.height != H || s.width != W || s.planes.size() != 3 * n) {
      throw AssemblyError("slice plane shapes disagree");
    }
  }
  const auto depth = static_cast<std::int64_t>(slices.size()) + 2;
  std::vector<float> vox(static_cast<std::size_t>(depth) * n);
  auto put = [&](std::int64_t d, std::span<const float> plane) {
    std::copy(plane.begin(), plane.end(), vox.begin() + static_cast<std::ptrdiff_t>(d) * static_cast<std::ptrdiff_t>(n));
  };
  put(0, slices.front().plane(0));
  for (const auto& s : slices) put(s.center_index, s.plane(1));
  put(depth - 1, slices.back().plane(2));
  return Volume({depth, H, W}, std::move(vox), {1.0, 1.0, 1.0}, Provenance::synthetic);
}

Volume generate_volume(ModelState& model, std::uint64_t seed, std::int64_t depth) {
  const auto& cfg = model.config();
  if (depth != cfg.depth) {
    throw ArgumentError("model is configured for depth " + std::to_string(cfg.depth) + ", not " +
                        std::to_string(depth));
  }
  torch::NoGradGuard no_grad;
  Rng rng(seed);
  const auto plan = build_latent_plan(cfg.latent, rng, model.sequencer);
  const auto out = model.generator->forward(plan.concatenated);  // [L,3,H,W]
  const auto L = out.size(0);
  auto planes = torch::cat({out.index({0, 0}).unsqueeze(0), out.index({torch::indexing::Slice(), 1}),
                            out.index({L - 1, 2}).unsqueeze(0)},
                           0);
  return volume_from_tensor(planes, Provenance::synthetic, "synthetic-" + std::to_string(seed));
}

double discriminate_slice(SliceDiscriminator& disc, const Slice3& s, std::int64_t position,
                          std::int64_t depth) {
  if (position != s.center_index) throw ArgumentError("position must equal the slice center index");
  if (depth < 3 || position < 1 || position > depth - 2) throw ArgumentError("position outside the volume");
  torch::NoGradGuard no_grad;
  auto pos = torch::full({1}, static_cast<double>(position) / static_cast<double>(depth - 1));
  return disc->forward(to_tensor(s).unsqueeze(0), pos).item<double>();
}

double discriminate_slab(SlabDiscriminator& disc, const Slab& slab) {
  if (slab.length != disc->spec().slab_len) {
    throw ArgumentError("slab length " + std::to_string(slab.length) + " does not match configured T=" +
                        std::to_string(disc->spec().slab_len));
  }
  torch::NoGradGuard no_grad;
  return disc->forward(to_tensor(slab).unsqueeze(0)).item<double>();
}

}  // namespace ctsgan
