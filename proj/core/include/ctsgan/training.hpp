#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include <torch/torch.h>

#include "ctsgan/losses.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/sgan.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

// One slab per volume plus N Slice3 drawn from its interior. Slice tensors
// are laid out position-major: row i * B + b is draw i of volume b.
struct SlabBatch {
  torch::Tensor slice_planes;     // [N*B, 3, H, W]
  torch::Tensor slice_positions;  // [N*B], center / (depth - 1)
  torch::Tensor slabs;            // [B, T, H, W]
  std::int64_t slices_per_slab = 0;
  std::int64_t batch = 0;
};

SlabBatch sample_real_batch(std::span<const Volume> corpus, const SganConfig& cfg, Rng& rng);

// Generates only the T Slice3 a slab needs. Differentiable unless called
// under a NoGradGuard.
SlabBatch sample_fake_batch(ModelState& model, Rng& rng, std::int64_t batch);

// Updates both discriminators with the generator and sequencer fixed.
LossReport discriminator_phase(ModelState& model, const SlabBatch& real, Rng& rng);
// Updates generator and sequencer with both discriminators fixed.
LossReport generator_phase(ModelState& model, Rng& rng);

// One discriminator phase followed by one generator phase; increments the
// step counter. Throws NumericError on a non-finite loss.
LossReport alternating_step(ModelState& model, const SlabBatch& real, Rng& rng);

using StepCallback = std::function<void(std::int64_t step, const LossReport&, double wall_ms)>;

void train_sgan(ModelState& model, std::span<const Volume> corpus, std::int64_t steps, Rng& rng,
                const StepCallback& on_step = {});

}  // namespace ctsgan
