#include "ctsgan/nodule_cgan.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ctsgan/checkpoint.hpp"
#include "ctsgan/error.hpp"
#include "ctsgan/losses.hpp"

namespace ctsgan {
namespace {

namespace F = torch::nn::functional;
using nlohmann::json;

torch::nn::Conv3dOptions conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1) {
  return torch::nn::Conv3dOptions(in, out, k).stride(stride).padding(stride == 1 ? k / 2 : 1);
}

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

torch::Tensor voi_tensor(const Voi& voi) {
  return torch::from_blob(const_cast<float*>(voi.cube.data()), {voi.edge, voi.edge, voi.edge}, torch::kFloat32)
      .clone();
}

torch::Tensor stack_batch(const std::vector<torch::Tensor>& xs) { return torch::stack(xs); }

}  // namespace

std::string_view to_string(NoduleDirection d) { return d == NoduleDirection::inject ? "inject" : "erase"; }

NoduleDirection nodule_direction_from_string(std::string_view s) {
  if (s == "inject") return NoduleDirection::inject;
  if (s == "erase") return NoduleDirection::erase;
  throw FormatError("unknown nodule direction '" + std::string(s) + "'");
}

void NoduleCganSpec::validate() const {
  if (voi_edge < 8 || voi_edge % 8 != 0) throw ConfigError("cGAN VOI edge must be a positive multiple of 8");
  if (width < 1 || batch < 1) throw ConfigError("cGAN width and batch must be positive");
  if (l1_weight < 0.0 || gp_gamma < 0.0) throw ConfigError("cGAN loss weights must be non-negative");
  if (!(adam.lr > 0.0)) throw ConfigError("cGAN learning rate must be positive");
}

void to_json(json& j, const NoduleCganSpec& s) {
  j = {{"voi_edge", s.voi_edge},
       {"width", s.width},
       {"l1_weight", s.l1_weight},
       {"gp_gamma", s.gp_gamma},
       {"batch", s.batch},
       {"adam", {{"lr", s.adam.lr}, {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}}}};
}

void from_json(const json& j, NoduleCganSpec& s) {
  s.voi_edge = j.value("voi_edge", s.voi_edge);
  s.width = j.value("width", s.width);
  s.l1_weight = j.value("l1_weight", s.l1_weight);
  s.gp_gamma = j.value("gp_gamma", s.gp_gamma);
  s.batch = j.value("batch", s.batch);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    s.adam.lr = a.value("lr", s.adam.lr);
    s.adam.beta1 = a.value("beta1", s.adam.beta1);
    s.adam.beta2 = a.value("beta2", s.adam.beta2);
  }
}

VoiGeneratorImpl::VoiGeneratorImpl(const NoduleCganSpec& spec) {
  const auto w = spec.width;
  enc_ = register_module("enc", torch::nn::Conv3d(conv(2, w, 3)));
  down_ = register_module("down", torch::nn::Conv3d(conv(w, 2 * w, 4, 2)));
  mid_ = register_module("mid", torch::nn::Conv3d(conv(2 * w, 2 * w, 3)));
  up_ = register_module("up", torch::nn::Conv3d(conv(2 * w, w, 3)));
  fuse_ = register_module("fuse", torch::nn::Conv3d(conv(2 * w, w, 3)));
  out_ = register_module("out", torch::nn::Conv3d(conv(w, 2, 3)));
}

torch::Tensor VoiGeneratorImpl::forward(const torch::Tensor& input) {
  const auto x = input.narrow(1, 0, 1).clamp(0.0, 1.0);
  const auto e = lrelu(enc_->forward(input));
  auto h = lrelu(down_->forward(e));
  h = lrelu(mid_->forward(h));
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0, 2.0}).mode(torch::kNearest));
  h = lrelu(up_->forward(h));
  h = lrelu(fuse_->forward(torch::cat({h, e}, 1)));
  const auto o = torch::sigmoid(out_->forward(h));
  const auto content = o.narrow(1, 0, 1);
  const auto gate = o.narrow(1, 1, 1);
  return gate * x + (1.0 - gate) * content;
}

VoiDiscriminatorImpl::VoiDiscriminatorImpl(const NoduleCganSpec& spec) {
  const auto w = spec.width;
  auto act = torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2));
  body_ = register_module("body", torch::nn::Sequential(torch::nn::Conv3d(conv(3, w, 4, 2)), act,
                                                        torch::nn::Conv3d(conv(w, 2 * w, 4, 2)), act,
                                                        torch::nn::Conv3d(conv(2 * w, 2 * w, 4, 2)), act));
  const auto edge = spec.voi_edge / 8;
  head_ = register_module("head", torch::nn::Linear(2 * w * edge * edge * edge, 1));
}

torch::Tensor VoiDiscriminatorImpl::forward(const torch::Tensor& input) {
  return head_->forward(body_->forward(input).flatten(1)).squeeze(1);
}

NoduleCgan::NoduleCgan(const NoduleCganSpec& spec, NoduleDirection direction, std::uint64_t seed)
    : spec_(spec), direction_(direction), seed_(seed) {
  spec_.validate();
  torch::manual_seed(seed);
  generator = VoiGenerator(spec_);
  discriminator = VoiDiscriminator(spec_);
}

torch::Tensor NoduleCgan::conditioned_input(const Voi& voi, const NoduleSpec& nodule) const {
  if (voi.edge != spec_.voi_edge) {
    throw ArgumentError("VOI edge " + std::to_string(voi.edge) + " does not match the cGAN edge " +
                        std::to_string(spec_.voi_edge));
  }
  const auto radius = mask_radius(nodule, voi.edge);
  const auto E = voi.edge;
  auto sphere = center_sphere(E, radius);
  auto cond = torch::from_blob(sphere.data(), {E, E, E}, torch::kFloat32).clone();
  const double level = direction_ == NoduleDirection::inject ? nodule.intensity : 1.0;
  const auto x = direction_ == NoduleDirection::inject ? voi_tensor(mask_center(voi, radius)) : voi_tensor(voi);
  return torch::stack({x, cond * level});
}

Voi NoduleCgan::apply(const Voi& voi, const NoduleSpec& nodule) {
  torch::NoGradGuard guard;
  generator->eval();
  const auto out = generator->forward(conditioned_input(voi, nodule).unsqueeze(0)).contiguous();
  generator->train();
  Voi result = voi;
  std::memcpy(result.cube.data(), out.data_ptr<float>(), result.cube.size() * sizeof(float));
  return result;
}

void NoduleCgan::train(std::span<const VoiPair> pairs, std::int64_t steps, Rng& rng, const CganCallback& callback) {
  if (pairs.empty()) throw ArgumentError("cGAN training needs at least one pair");
  if (steps < 0) throw ArgumentError("step count must be non-negative");
  std::vector<torch::Tensor> inputs, targets;
  for (const auto& p : pairs) {
    inputs.push_back(conditioned_input(p.input, p.nodule));
    targets.push_back(voi_tensor(p.target).unsqueeze(0));
  }
  const auto all_in = stack_batch(inputs);
  const auto all_tgt = stack_batch(targets);
  const auto n = static_cast<std::int64_t>(pairs.size());

  const auto adam = [&](torch::nn::Module& m) {
    return torch::optim::Adam(m.parameters(), torch::optim::AdamOptions(spec_.adam.lr)
                                                  .betas({spec_.adam.beta1, spec_.adam.beta2}));
  };
  auto g_opt = adam(*generator);
  auto d_opt = adam(*discriminator);

  for (std::int64_t step = 0; step < steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(spec_.batch));
    for (auto& i : idx) i = rng.uniform_int(0, n - 1);
    const auto index = torch::tensor(idx, torch::kLong);
    const auto in = all_in.index_select(0, index);
    const auto tgt = all_tgt.index_select(0, index);

    CganStepReport report;
    report.step = step + 1;

    // Discriminator phase.
    torch::Tensor fake;
    {
      torch::NoGradGuard guard;
      fake = generator->forward(in);
    }
    d_opt.zero_grad();
    const auto real_pair = torch::cat({in, tgt}, 1);
    auto d_loss = js_discriminator_loss(discriminator->forward(real_pair), discriminator->forward(torch::cat({in, fake}, 1)));
    torch::Tensor gp = torch::zeros({});
    if (spec_.gp_gamma > 0.0) {
      gp = gradient_penalty([&](const torch::Tensor& x) { return discriminator->forward(x); }, real_pair,
                            spec_.gp_gamma);
    }
    (d_loss + gp).backward();
    d_opt.step();

    // Generator phase.
    g_opt.zero_grad();
    fake = generator->forward(in);
    const auto g_adv = js_generator_loss(discriminator->forward(torch::cat({in, fake}, 1)));
    const auto l1 = (fake - tgt).abs().mean();
    (g_adv + spec_.l1_weight * l1).backward();
    g_opt.step();
    discriminator->zero_grad();

    report.d_loss = d_loss.item<double>();
    report.g_adv = g_adv.item<double>();
    report.l1 = l1.item<double>();
    report.gp = gp.item<double>();
    if (!std::isfinite(report.d_loss) || !std::isfinite(report.g_adv) || !std::isfinite(report.l1)) {
      throw NumericError("cGAN training diverged at step " + std::to_string(report.step));
    }
    if (callback) {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      callback(report, ms);
    }
  }
}

void NoduleCgan::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json meta = {{"format_version", kCheckpointFormatVersion},
               {"direction", to_string(direction_)},
               {"seed", seed_},
               {"spec", spec_}};
  std::ofstream(dir / "cgan.json") << meta.dump(2) << '\n';
  save_module_weights(*generator, dir, "generator");
  save_module_weights(*discriminator, dir, "discriminator");
}

NoduleCgan NoduleCgan::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cgan.json");
  if (!in) throw FormatError("missing " + (dir / "cgan.json").string());
  json meta;
  try {
    in >> meta;
    if (meta.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw FormatError("unsupported cGAN format version");
    }
    NoduleCgan cgan(meta.at("spec").get<NoduleCganSpec>(),
                    nodule_direction_from_string(meta.at("direction").get<std::string>()),
                    meta.at("seed").get<std::uint64_t>());
    load_module_weights(*cgan.generator, dir, "generator");
    load_module_weights(*cgan.discriminator, dir, "discriminator");
    return cgan;
  } catch (const json::exception& e) {
    throw FormatError("malformed " + (dir / "cgan.json").string() + ": " + e.what());
  }
}

std::vector<VoiPair> injector_pairs(std::span<const NodulePhantom> phantoms, std::int64_t voi_edge) {
  std::vector<VoiPair> pairs;
  for (const auto& p : phantoms) {
    for (const auto& nodule : p.nodules) {
      // Each nodule is painted alone so neighbouring nodules never leak into
      // the target.
      const auto single = render_nodule(p.clean.volume, nodule);
      const auto target = extract_voi(single, nodule.center, voi_edge);
      pairs.push_back({mask_center(target, mask_radius(nodule, voi_edge)), target, nodule});
    }
  }
  return pairs;
}

std::vector<VoiPair> eraser_pairs(NoduleCgan& injector, std::span<const NodulePhantom> phantoms) {
  const auto E = injector.spec().voi_edge;
  std::vector<VoiPair> pairs;
  for (const auto& p : phantoms) {
    for (const auto& nodule : p.nodules) {
      const auto clean = extract_voi(p.clean.volume, nodule.center, E);
      pairs.push_back({injector.apply(clean, nodule), clean, nodule});
    }
  }
  return pairs;
}

namespace {

Volume apply_at(NoduleCgan& cgan, const Volume& v, const NoduleSpec& spec, std::span<const std::uint8_t> lung_mask) {
  if (static_cast<std::int64_t>(lung_mask.size()) != v.shape().numel()) {
    throw ArgumentError("lung mask does not match the volume shape");
  }
  if (!inside_mask(lung_mask, v.shape(), spec.center)) {
    throw PlacementError("nodule center (" + std::to_string(spec.center[0]) + "," + std::to_string(spec.center[1]) +
                         "," + std::to_string(spec.center[2]) + ") is outside the lung");
  }
  const auto voi = extract_voi(v, spec.center, cgan.spec().voi_edge);
  return paste_back(v, cgan.apply(voi, spec));
}

}  // namespace

Volume inject_nodules(NoduleCgan& injector, const Volume& v, std::span<const NoduleSpec> specs,
                      std::span<const std::uint8_t> lung_mask) {
  if (injector.direction() != NoduleDirection::inject) throw ArgumentError("model is not an injector");
  Volume out = v;
  for (const auto& spec : specs) out = apply_at(injector, out, spec, lung_mask);
  return out.with_provenance(Provenance::injected);
}

Volume erase_nodules(NoduleCgan& eraser, const Volume& v, std::span<const NoduleSpec> specs,
                     std::span<const std::uint8_t> lung_mask) {
  if (eraser.direction() != NoduleDirection::erase) throw ArgumentError("model is not an eraser");
  Volume out = v;
  for (const auto& spec : specs) out = apply_at(eraser, out, spec, lung_mask);
  return out.with_provenance(Provenance::erased);
}

Volume inject_nodule(NoduleCgan& injector, const Volume& v, const NoduleSpec& spec,
                     std::span<const std::uint8_t> lung_mask) {
  return inject_nodules(injector, v, std::span<const NoduleSpec>(&spec, 1), lung_mask);
}

Volume erase_nodule(NoduleCgan& eraser, const Volume& v, const NoduleSpec& spec,
                    std::span<const std::uint8_t> lung_mask) {
  return erase_nodules(eraser, v, std::span<const NoduleSpec>(&spec, 1), lung_mask);
}

double sphere_mean(const Volume& v, const NoduleSpec& spec) {
  double total = 0.0;
  std::int64_t count = 0;
  const auto r2 = spec.radius_vox * spec.radius_vox;
  const auto reach = static_cast<std::int64_t>(std::ceil(spec.radius_vox));
  for (std::int64_t z = spec.center[0] - reach; z <= spec.center[0] + reach; ++z) {
    for (std::int64_t y = spec.center[1] - reach; y <= spec.center[1] + reach; ++y) {
      for (std::int64_t x = spec.center[2] - reach; x <= spec.center[2] + reach; ++x) {
        if (z < 0 || y < 0 || x < 0 || z >= v.depth() || y >= v.height() || x >= v.width()) continue;
        const double dz = z - spec.center[0], dy = y - spec.center[1], dx = x - spec.center[2];
        if (dz * dz + dy * dy + dx * dx >= r2) continue;
        total += v.at(z, y, x);
        ++count;
      }
    }
  }
  if (count == 0) throw ArgumentError("nodule sphere covers no voxels");
  return total / static_cast<double>(count);
}

}  // namespace ctsgan
