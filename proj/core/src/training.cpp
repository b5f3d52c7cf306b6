#include "ctsgan/training.hpp"

#include <chrono>
#include <cmath>

#include "ctsgan/error.hpp"
#include "ctsgan/tensor_util.hpp"

namespace ctsgan {
namespace {

using torch::indexing::Slice;

BatchScores score(ModelState& model, const SlabBatch& real, const SlabBatch& fake) {
  const auto N = real.slices_per_slab;
  BatchScores s;
  s.slice_real = model.slice_disc->forward(real.slice_planes, real.slice_positions).view({N, real.batch});
  s.slice_fake = model.slice_disc->forward(fake.slice_planes, fake.slice_positions).view({N, fake.batch});
  s.slab_real = model.slab_disc->forward(real.slabs);
  s.slab_fake = model.slab_disc->forward(fake.slabs);
  return s;
}

void check_finite(const LossReport& r) {
  if (!std::isfinite(r.d_loss) || !std::isfinite(r.g_loss) || !std::isfinite(r.gp)) {
    throw NumericError("training diverged: d_loss=" + std::to_string(r.d_loss) +
                       " g_loss=" + std::to_string(r.g_loss) + " gp=" + std::to_string(r.gp));
  }
}

}  // namespace

SlabBatch sample_real_batch(std::span<const Volume> corpus, const SganConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw ArgumentError("training corpus is empty");
  const auto N = cfg.slices_per_slab;
  const auto B = cfg.batch;
  const auto T = cfg.slab_len;
  std::vector<torch::Tensor> slabs;
  std::vector<torch::Tensor> slices(static_cast<std::size_t>(N * B));
  std::vector<double> positions(static_cast<std::size_t>(N * B));
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& v = corpus[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1))];
    if (v.depth() != cfg.depth || v.height() != cfg.plane_hw || v.width() != cfg.plane_hw) {
      throw ArgumentError("corpus volume " + v.id() + " does not match the configured scale");
    }
    const auto start = rng.uniform_int(0, cfg.depth - T);
    const auto slab = extract_slab(v, start, T);
    slabs.push_back(to_tensor(slab));
    const auto centers = sample_slab_centers(slab, v.depth(), N, rng);
    for (std::int64_t i = 0; i < N; ++i) {
      const auto c = centers[static_cast<std::size_t>(i)];
      slices[static_cast<std::size_t>(i * B + b)] = to_tensor(extract_slice3(v, c));
      positions[static_cast<std::size_t>(i * B + b)] = static_cast<double>(c) / static_cast<double>(cfg.depth - 1);
    }
  }
  SlabBatch out;
  out.slabs = torch::stack(slabs);
  out.slice_planes = torch::stack(slices);
  out.slice_positions = torch::tensor(positions, torch::kFloat32);
  out.slices_per_slab = N;
  out.batch = B;
  return out;
}

SlabBatch sample_fake_batch(ModelState& model, Rng& rng, std::int64_t batch) {
  const auto& cfg = model.config();
  const auto N = cfg.slices_per_slab;
  const auto T = cfg.slab_len;
  const auto S = cfg.depth;
  const auto noise = sample_latent_noise(cfg.latent, rng, batch);
  const auto z = concat_latent(noise.z_patient, model.sequencer->forward(noise.eps, noise.h0));  // [B,L,dz]

  // Plane p of an assembled volume is channel 1 of the Slice3 centered at p,
  // except the two outermost planes which come from the boundary Slice3.
  std::vector<std::int64_t> rows;     // index into z.view(B*L, dz)
  std::vector<std::int64_t> channel;  // which of the 3 generated planes to keep
  std::vector<std::int64_t> interior_rows(static_cast<std::size_t>(N * batch));
  std::vector<double> positions(static_cast<std::size_t>(N * batch));
  const auto L = cfg.latent.seq_len;
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto start = rng.uniform_int(0, S - T);
    for (std::int64_t p = start; p < start + T; ++p) {
      const auto center = std::clamp<std::int64_t>(p, 1, S - 2);
      rows.push_back(b * L + center - 1);
      channel.push_back(p == 0 ? 0 : (p == S - 1 ? 2 : 1));
    }
    for (std::int64_t i = 0; i < N; ++i) {
      const auto c = rng.uniform_int(start + 1, start + T - 2);
      interior_rows[static_cast<std::size_t>(i * batch + b)] = b * T + (c - start);
      positions[static_cast<std::size_t>(i * batch + b)] = static_cast<double>(c) / static_cast<double>(S - 1);
    }
  }
  const auto flat = z.reshape({batch * L, z.size(2)});
  const auto generated = model.generator->forward(flat.index_select(0, torch::tensor(rows)));  // [B*T,3,H,W]
  const auto chan = torch::tensor(channel);
  const auto picked = generated.gather(
      1, chan.view({-1, 1, 1, 1}).expand({generated.size(0), 1, generated.size(2), generated.size(3)}));

  SlabBatch out;
  out.slabs = picked.view({batch, T, generated.size(2), generated.size(3)});
  out.slice_planes = generated.index_select(0, torch::tensor(interior_rows));
  out.slice_positions = torch::tensor(positions, torch::kFloat32);
  out.slices_per_slab = N;
  out.batch = batch;
  return out;
}

LossReport discriminator_phase(ModelState& model, const SlabBatch& real, Rng& rng) {
  const auto& cfg = model.config();
  SlabBatch fake;
  {
    torch::NoGradGuard no_grad;
    fake = sample_fake_batch(model, rng, real.batch);
  }
  model.slice_disc_optimizer().zero_grad();
  model.slab_disc_optimizer().zero_grad();

  const auto objective = objective_terms(score(model, real, fake), cfg.loss);
  auto total = objective.d_loss;
  double gp_value = 0.0;
  if (cfg.gp_gamma > 0.0) {
    const auto positions = real.slice_positions;
    auto slice_scorer = [&](const torch::Tensor& x) { return model.slice_disc->forward(x, positions); };
    auto slab_scorer = [&](const torch::Tensor& x) { return model.slab_disc->forward(x); };
    const auto gp = gradient_penalty(slice_scorer, real.slice_planes, cfg.gp_gamma) +
                    gradient_penalty(slab_scorer, real.slabs, cfg.gp_gamma);
    gp_value = gp.item<double>();
    total = total + gp;
  }
  auto report = objective.report();
  report.gp = gp_value;
  report.d_loss = total.item<double>();
  check_finite(report);

  total.backward();
  model.slice_disc_optimizer().step();
  model.slab_disc_optimizer().step();
  return report;
}

LossReport generator_phase(ModelState& model, Rng& rng) {
  const auto& cfg = model.config();
  model.generator_optimizer().zero_grad();
  model.sequencer_optimizer().zero_grad();
  const auto fake = sample_fake_batch(model, rng, cfg.batch);

  // Real-side terms do not depend on the generator; only the fake scores
  // enter the generator loss, the real slots are filled with detached copies.
  BatchScores scores;
  scores.slice_fake =
      model.slice_disc->forward(fake.slice_planes, fake.slice_positions).view({fake.slices_per_slab, fake.batch});
  scores.slab_fake = model.slab_disc->forward(fake.slabs);
  scores.slice_real = scores.slice_fake.detach();
  scores.slab_real = scores.slab_fake.detach();
  const auto objective = objective_terms(scores, cfg.loss);
  auto report = objective.report();
  check_finite(report);

  objective.g_loss.backward();
  model.generator_optimizer().step();
  model.sequencer_optimizer().step();
  // Discriminator gradients from this phase are discarded.
  model.slice_disc_optimizer().zero_grad();
  model.slab_disc_optimizer().zero_grad();
  return report;
}

LossReport alternating_step(ModelState& model, const SlabBatch& real, Rng& rng) {
  auto d = discriminator_phase(model, real, rng);
  auto g = generator_phase(model, rng);
  ++model.step;
  d.g_loss = g.g_loss;
  return d;
}

void train_sgan(ModelState& model, std::span<const Volume> corpus, std::int64_t steps, Rng& rng,
                const StepCallback& on_step) {
  for (std::int64_t s = 0; s < steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto real = sample_real_batch(corpus, model.config(), rng);
    const auto report = alternating_step(model, real, rng);
    const auto t1 = std::chrono::steady_clock::now();
    if (on_step) on_step(model.step, report, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
}

}  // namespace ctsgan
