#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "ctsgan/dataset_mix.hpp"
#include "ctsgan/evaluation.hpp"

namespace ctsgan {

struct FireSpec {
  std::int64_t squeeze = 8;
  std::int64_t expand = 16;  // per branch; the block outputs 2 * expand channels
};

// Squeeze-style 3D classifier: strided stem, two pooled groups of fire
// blocks, global max pool, one logit.
struct SqueezeSpec {
  std::int64_t stem = 16;
  std::vector<FireSpec> group1{{8, 16}, {8, 16}};
  std::vector<FireSpec> group2{{16, 32}, {16, 32}};
};

struct ClassifierConfig {
  SqueezeSpec arch;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::int64_t batch = 8;
  std::int64_t max_steps = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const FireSpec& s);
void from_json(const nlohmann::json& j, FireSpec& s);
void to_json(nlohmann::json& j, const SqueezeSpec& s);
void from_json(const nlohmann::json& j, SqueezeSpec& s);
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

class FireImpl : public torch::nn::Module {
 public:
  FireImpl(std::int64_t in, const FireSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d squeeze_{nullptr}, expand1_{nullptr}, expand3_{nullptr};
};
TORCH_MODULE(Fire);

class NoduleClassifierImpl : public torch::nn::Module {
 public:
  explicit NoduleClassifierImpl(const SqueezeSpec& spec);
  // [B,1,D,H,W] -> logit [B]
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv3d stem_{nullptr};
  torch::nn::ModuleList group1_, group2_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(NoduleClassifier);

std::int64_t parameter_count(const torch::nn::Module& m);

// Volumes of one split, stacked in manifest order.
struct LabeledVolumes {
  torch::Tensor x;  // [n,1,D,H,W]
  torch::Tensor y;  // [n] float 0/1
  std::vector<std::string> ids;

  std::int64_t size() const { return x.defined() ? x.size(0) : 0; }
};

LabeledVolumes load_split(const DatasetMix& mix, Split split);

struct ClassifierRun {
  NoduleClassifier model{nullptr};
  double step0_loss = 0.0;  // mean BCE over the training set before the first update
  double final_loss = 0.0;  // last batch loss
};

using ClassifierCallback = std::function<void(std::int64_t step, double loss, double wall_ms)>;

// Trains from `init` when given (weights are copied, `init` is untouched),
// otherwise from a fresh seeded initialization. Throws NumericError on a
// non-finite loss.
ClassifierRun train_classifier(const ClassifierConfig& cfg, const LabeledVolumes& data,
                               const NoduleClassifier* init = nullptr, const ClassifierCallback& callback = {});

// Mean binary cross-entropy of the model over `data`.
double classifier_loss(NoduleClassifier& model, const LabeledVolumes& data);
// Fraction of volumes whose thresholded logit matches the label. Throws
// ArgumentError on an empty split.
double evaluate_classifier(NoduleClassifier& model, const LabeledVolumes& data);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

std::uint64_t fnv1a64(std::string_view bytes);
// Hash of the test split entries (ids, labels, pathways and domains, not
// paths), used to prove every run saw the same set.
std::uint64_t test_manifest_hash(const DatasetMix& mix);

struct RegimeConfig {
  ClassifierConfig classifier;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::int64_t real_steps = 600;
  std::int64_t synthetic_steps = 600;
  std::int64_t finetune_steps = 600;
};

void to_json(nlohmann::json& j, const RegimeConfig& c);
void from_json(const nlohmann::json& j, RegimeConfig& c);

struct RegimeResult {
  std::string name;  // real-only, synthetic-only, pretrain+finetune
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;

  MeanStd summary() const;
};

struct RegimeReport {
  double radius_vox = 0.0;  // 0 when nodule radii were sampled
  std::string test_manifest_hash;
  std::vector<RegimeResult> regimes;

  const RegimeResult& regime(std::string_view name) const;
};

void to_json(nlohmann::json& j, const RegimeResult& r);
void from_json(const nlohmann::json& j, RegimeResult& r);
void to_json(nlohmann::json& j, const RegimeReport& r);
void from_json(const nlohmann::json& j, RegimeReport& r);

inline constexpr std::string_view kRealOnly = "real-only";
inline constexpr std::string_view kSyntheticOnly = "synthetic-only";
inline constexpr std::string_view kPretrainFinetune = "pretrain+finetune";

using RegimeLog = std::function<void(std::string_view regime, std::uint64_t seed, double accuracy)>;

// Trains the three regimes for every seed and scores them on the real test
// split.
RegimeReport run_regimes(const DatasetMix& real, const DatasetMix& synthetic, const RegimeConfig& cfg,
                         const RegimeLog& log = {});

// Runs `pipeline` once per radius. Throws ArgumentError on an empty list.
std::vector<RegimeReport> sweep_nodule_sizes(std::span<const double> radii,
                                             const std::function<RegimeReport(double)>& pipeline);

// Rows: radius; columns: regimes as mean +/- std.
std::string render_regime_table(std::span<const RegimeReport> reports);

}  // namespace ctsgan
