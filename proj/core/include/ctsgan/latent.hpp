#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/rng.hpp"

namespace ctsgan {

// Dimensions of the per-volume latent plan. The sizes are configuration; the
// defaults are the desk-scale ones.
struct LatentConfig {
  std::int64_t d_patient = 32;
  std::int64_t d_slice = 32;
  std::int64_t d_eps = 16;
  std::int64_t hidden = 64;
  std::int64_t seq_len = 30;

  std::int64_t latent_dim() const { return d_patient + d_slice; }
  void validate() const;
};

void to_json(nlohmann::json& j, const LatentConfig& c);
void from_json(const nlohmann::json& j, LatentConfig& c);

// Bidirectional LSTM over per-step noise followed by a linear head on the
// concatenated forward/backward hidden states.
class SequencerImpl : public torch::nn::Module {
 public:
  explicit SequencerImpl(const LatentConfig& cfg);

  // eps [B,L,d_eps], h0 [2,B,hidden] -> z_slice [B,L,d_slice]. The cell state
  // starts at zero.
  torch::Tensor forward(const torch::Tensor& eps, const torch::Tensor& h0);

  const LatentConfig& config() const { return cfg_; }

 private:
  LatentConfig cfg_;
  torch::nn::LSTM lstm_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Sequencer);

// Raw random inputs for a batch of volumes, in draw order.
struct LatentNoise {
  torch::Tensor z_patient;  // [B, d_patient]
  torch::Tensor h0;         // [2, B, hidden]
  torch::Tensor eps;        // [B, L, d_eps]
};

LatentNoise sample_latent_noise(const LatentConfig& cfg, Rng& rng, std::int64_t batch);

// One standard-normal patient vector [d_patient].
torch::Tensor sample_patient_noise(Rng& rng, std::int64_t d_patient);

// Unbatched sequencing: eps [L,d_eps], h0 [2,hidden] -> [L,d_slice].
torch::Tensor sequence_slice_noise(Sequencer& sequencer, const torch::Tensor& eps,
                                   const torch::Tensor& h0);

// [B,d_patient] and [B,L,d_slice] -> [B,L,d_patient+d_slice]
torch::Tensor concat_latent(const torch::Tensor& z_patient, const torch::Tensor& z_slices);

struct LatentPlan {
  torch::Tensor z_patient;     // [d_patient]
  torch::Tensor z_slices;      // [L, d_slice]
  torch::Tensor concatenated;  // [L, d_patient + d_slice]
};

LatentPlan build_latent_plan(const LatentConfig& cfg, Rng& rng, Sequencer& sequencer);

}  // namespace ctsgan
