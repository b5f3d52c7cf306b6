#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/networks.hpp"
#include "ctsgan/phantom.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

// Small 2D encoder over single-channel planes. The penultimate activation is
// the embedding used for FID; the head gives plane-class probabilities for IS.
struct FeatureExtractorSpec {
  std::vector<Stage> stages{{16, 2}, {32, 2}, {32, 2}};
  std::int64_t embed_dim = 16;
  std::int64_t classes = kPlaneClassCount;
};

void to_json(nlohmann::json& j, const FeatureExtractorSpec& s);
void from_json(const nlohmann::json& j, FeatureExtractorSpec& s);

class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const FeatureExtractorSpec& spec);

  // planes [B,1,H,W] -> embeddings [B, embed_dim]
  torch::Tensor embed(const torch::Tensor& planes);
  // planes [B,1,H,W] -> logits [B, classes]
  torch::Tensor forward(const torch::Tensor& planes);

  const FeatureExtractorSpec& spec() const { return spec_; }

 private:
  FeatureExtractorSpec spec_;
  torch::nn::Sequential encoder_;
  torch::nn::Linear embed_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(FeatureExtractor);

struct ExtractorTraining {
  std::int64_t steps = 400;
  std::int64_t batch = 64;
  double lr = 1e-3;
  double holdout_fraction = 0.25;  // of phantoms, not planes
  std::uint64_t seed = 0;
};

struct TrainedExtractor {
  FeatureExtractor extractor{nullptr};
  double heldout_accuracy = 0.0;
};

TrainedExtractor train_feature_extractor(std::span<const Phantom> corpus, const FeatureExtractorSpec& spec,
                                         const ExtractorTraining& training);

// One row per depth plane.
Eigen::MatrixXd embed_planes(FeatureExtractor& f, const Volume& v);
Eigen::MatrixXd plane_probabilities(FeatureExtractor& f, const Volume& v);
double plane_accuracy(FeatureExtractor& f, std::span<const Phantom> corpus);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population standard deviation; {0, 0} for an empty input.
MeanStd mean_std(std::span<const double> xs);

enum class Pairing {
  independent,  // both scans drawn at random
  identical     // scan k of A is paired with scan k of B
};

struct SlicewiseFidOptions {
  std::int64_t rounds = 5;
  std::int64_t pairs_per_round = 0;  // 0: min(|A|, |B|)
  Pairing pairing = Pairing::independent;
};

// Each round draws scan pairs, embeds their planes in depth order, fits one
// Gaussian per depth position on each side and averages the per-position
// FID. Mean and standard deviation are taken across rounds.
MeanStd slicewise_fid(std::span<const Volume> a, std::span<const Volume> b, FeatureExtractor& f, Rng& rng,
                      const SlicewiseFidOptions& options = {});

// Inception score of each volume over its planes; mean and standard deviation
// across volumes.
MeanStd slicewise_inception_score(std::span<const Volume> vols, FeatureExtractor& f);

struct MetricReport {
  double fid_mean = 0.0;
  double fid_std = 0.0;
  double is_mean = 1.0;
  double is_std = 0.0;
  std::string protocol = "slicewise-paired";
  std::string label;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

// Plain-text table with IS and FID columns, one row per report.
std::string render_metric_table(std::span<const MetricReport> rows);

}  // namespace ctsgan
