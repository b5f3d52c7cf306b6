#include "ctsgan/detect.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ctsgan/error.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/tensor_util.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;
namespace F = torch::nn::functional;

torch::Tensor bce(const torch::Tensor& logits, const torch::Tensor& labels) {
  return F::binary_cross_entropy_with_logits(logits, labels);
}

void copy_weights(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard guard;
  auto d = dst.parameters();
  const auto s = src.parameters();
  if (d.size() != s.size()) throw ArgumentError("initial weights do not match the classifier architecture");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i].sizes().equals(s[i].sizes())) throw ArgumentError("initial weights do not match the classifier architecture");
    d[i].copy_(s[i]);
  }
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void ClassifierConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("classifier learning rate must be positive");
  if (batch < 1 || max_steps < 0) throw ConfigError("classifier batch must be positive and steps non-negative");
  if (arch.stem < 1 || arch.group1.empty() || arch.group2.empty()) throw ConfigError("classifier architecture is empty");
}

void to_json(json& j, const FireSpec& s) { j = {s.squeeze, s.expand}; }
void from_json(const json& j, FireSpec& s) {
  s.squeeze = j.at(0).get<std::int64_t>();
  s.expand = j.at(1).get<std::int64_t>();
}
void to_json(json& j, const SqueezeSpec& s) { j = {{"stem", s.stem}, {"group1", s.group1}, {"group2", s.group2}}; }
void from_json(const json& j, SqueezeSpec& s) {
  s.stem = j.value("stem", s.stem);
  if (j.contains("group1")) s.group1 = j["group1"].get<std::vector<FireSpec>>();
  if (j.contains("group2")) s.group2 = j["group2"].get<std::vector<FireSpec>>();
}

void to_json(json& j, const ClassifierConfig& c) {
  j = {{"arch", c.arch}, {"lr", c.lr},       {"beta1", c.beta1},         {"beta2", c.beta2},
       {"batch", c.batch}, {"max_steps", c.max_steps}, {"seed", c.seed}};
}

void from_json(const json& j, ClassifierConfig& c) {
  if (j.contains("arch")) c.arch = j["arch"].get<SqueezeSpec>();
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.batch = j.value("batch", c.batch);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
}

FireImpl::FireImpl(std::int64_t in, const FireSpec& spec) {
  squeeze_ = register_module("squeeze", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, spec.squeeze, 1)));
  expand1_ = register_module("expand1", torch::nn::Conv3d(torch::nn::Conv3dOptions(spec.squeeze, spec.expand, 1)));
  expand3_ = register_module("expand3",
                             torch::nn::Conv3d(torch::nn::Conv3dOptions(spec.squeeze, spec.expand, 3).padding(1)));
}

torch::Tensor FireImpl::forward(const torch::Tensor& x) {
  const auto s = torch::relu(squeeze_->forward(x));
  return torch::cat({torch::relu(expand1_->forward(s)), torch::relu(expand3_->forward(s))}, 1);
}

NoduleClassifierImpl::NoduleClassifierImpl(const SqueezeSpec& spec) {
  stem_ = register_module("stem", torch::nn::Conv3d(torch::nn::Conv3dOptions(1, spec.stem, 3).stride(2).padding(1)));
  std::int64_t ch = spec.stem;
  for (const auto& f : spec.group1) {
    group1_->push_back(Fire(ch, f));
    ch = 2 * f.expand;
  }
  for (const auto& f : spec.group2) {
    group2_->push_back(Fire(ch, f));
    ch = 2 * f.expand;
  }
  register_module("group1", group1_);
  register_module("group2", group2_);
  head_ = register_module("head", torch::nn::Linear(ch, 1));
  // He init for every conv.
  torch::NoGradGuard guard;
  for (auto& m : modules(false)) {
    if (auto* conv = m->as<torch::nn::Conv3d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      torch::nn::init::zeros_(conv->bias);
    }
  }
}

torch::Tensor NoduleClassifierImpl::forward(const torch::Tensor& x) {
  auto h = torch::relu(stem_->forward(x));
  h = F::max_pool3d(h, F::MaxPool3dFuncOptions(2));
  for (auto& m : *group1_) h = m->as<Fire>()->forward(h);
  h = F::max_pool3d(h, F::MaxPool3dFuncOptions(2));
  for (auto& m : *group2_) h = m->as<Fire>()->forward(h);
  h = std::get<0>(h.flatten(2).max(2));
  return head_->forward(h).squeeze(1);
}

std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

LabeledVolumes load_split(const DatasetMix& mix, Split split) {
  LabeledVolumes out;
  std::vector<torch::Tensor> xs;
  std::vector<float> ys;
  for (const auto& e : mix.entries) {
    if (e.split != split) continue;
    if (e.path.empty()) throw ArgumentError("dataset entry '" + e.id + "' has no volume path");
    xs.push_back(to_tensor(load_volume(e.path)).unsqueeze(0));
    ys.push_back(e.label == Label::nodule ? 1.0f : 0.0f);
    out.ids.push_back(e.id);
  }
  if (!xs.empty()) {
    out.x = torch::stack(xs);
    out.y = torch::tensor(ys, torch::kFloat32);
  }
  return out;
}

double classifier_loss(NoduleClassifier& model, const LabeledVolumes& data) {
  if (data.size() == 0) throw ArgumentError("cannot evaluate on an empty split");
  torch::NoGradGuard guard;
  double total = 0.0;
  const std::int64_t chunk = 16;
  for (std::int64_t i = 0; i < data.size(); i += chunk) {
    const auto n = std::min(chunk, data.size() - i);
    const auto logits = model->forward(data.x.narrow(0, i, n)).to(torch::kFloat64);
    total += F::binary_cross_entropy_with_logits(logits, data.y.narrow(0, i, n).to(torch::kFloat64),
                                                 F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum))
                 .item<double>();
  }
  return total / static_cast<double>(data.size());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw ArgumentError("cannot score an empty split");
  if (predictions.size() != labels.size()) throw ArgumentError("prediction and label counts differ");
  std::size_t right = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) right += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(right) / static_cast<double>(predictions.size());
}

double evaluate_classifier(NoduleClassifier& model, const LabeledVolumes& data) {
  if (data.size() == 0) throw ArgumentError("cannot evaluate on an empty split");
  torch::NoGradGuard guard;
  std::vector<int> pred, truth;
  const std::int64_t chunk = 16;
  for (std::int64_t i = 0; i < data.size(); i += chunk) {
    const auto n = std::min(chunk, data.size() - i);
    const auto logits = model->forward(data.x.narrow(0, i, n));
    for (std::int64_t k = 0; k < n; ++k) {
      pred.push_back(logits[k].item<float>() > 0.0f ? 1 : 0);
      truth.push_back(data.y[i + k].item<float>() > 0.5f ? 1 : 0);
    }
  }
  return accuracy(pred, truth);
}

ClassifierRun train_classifier(const ClassifierConfig& cfg, const LabeledVolumes& data, const NoduleClassifier* init,
                               const ClassifierCallback& callback) {
  cfg.validate();
  if (data.size() == 0) throw ArgumentError("classifier training set is empty");
  torch::manual_seed(cfg.seed);
  ClassifierRun run;
  run.model = NoduleClassifier(cfg.arch);
  if (init != nullptr) copy_weights(*run.model, **init);
  run.step0_loss = classifier_loss(run.model, data);

  torch::optim::Adam opt(run.model->parameters(),
                         torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch));
    for (auto& i : idx) i = rng.uniform_int(0, data.size() - 1);
    const auto index = torch::tensor(idx, torch::kLong);
    opt.zero_grad();
    const auto loss = bce(run.model->forward(data.x.index_select(0, index)), data.y.index_select(0, index));
    loss.backward();
    opt.step();
    run.final_loss = loss.item<double>();
    if (!std::isfinite(run.final_loss)) {
      throw NumericError("classifier training diverged at step " + std::to_string(step));
    }
    if (callback) {
      callback(step, run.final_loss,
               std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  return run;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t test_manifest_hash(const DatasetMix& mix) {
  json entries = json::array();
  for (const auto& e : mix.split(Split::test)) {
    entries.push_back({e.id, to_string(e.label), to_string(e.pathway), to_string(e.domain)});
  }
  return fnv1a64(entries.dump());
}

void to_json(json& j, const RegimeConfig& c) {
  j = {{"classifier", c.classifier},
       {"seeds", c.seeds},
       {"real_steps", c.real_steps},
       {"synthetic_steps", c.synthetic_steps},
       {"finetune_steps", c.finetune_steps}};
}

void from_json(const json& j, RegimeConfig& c) {
  if (j.contains("classifier")) c.classifier = j["classifier"].get<ClassifierConfig>();
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  c.real_steps = j.value("real_steps", c.real_steps);
  c.synthetic_steps = j.value("synthetic_steps", c.synthetic_steps);
  c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
}

MeanStd RegimeResult::summary() const { return mean_std(accuracies); }

const RegimeResult& RegimeReport::regime(std::string_view name) const {
  for (const auto& r : regimes) {
    if (r.name == name) return r;
  }
  throw ArgumentError("report has no regime '" + std::string(name) + "'");
}

void to_json(json& j, const RegimeResult& r) {
  const auto s = r.summary();
  j = {{"name", r.name}, {"seeds", r.seeds}, {"accuracies", r.accuracies}, {"mean", s.mean}, {"std", s.std}};
}

void from_json(const json& j, RegimeResult& r) {
  r.name = j.at("name").get<std::string>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.accuracies = j.at("accuracies").get<std::vector<double>>();
}

void to_json(json& j, const RegimeReport& r) {
  j = {{"radius_vox", r.radius_vox}, {"test_manifest_hash", r.test_manifest_hash}, {"regimes", r.regimes}};
}

void from_json(const json& j, RegimeReport& r) {
  r.radius_vox = j.value("radius_vox", 0.0);
  r.test_manifest_hash = j.at("test_manifest_hash").get<std::string>();
  r.regimes = j.at("regimes").get<std::vector<RegimeResult>>();
}

RegimeReport run_regimes(const DatasetMix& real, const DatasetMix& synthetic, const RegimeConfig& cfg,
                         const RegimeLog& log) {
  if (cfg.seeds.empty()) throw ConfigError("regime experiment needs at least one seed");
  const auto real_train = load_split(real, Split::train);
  const auto test = load_split(real, Split::test);
  const auto synth_train = load_split(synthetic, Split::train);
  if (test.size() == 0) throw ArgumentError("real manifest has an empty test split");

  RegimeReport report;
  report.test_manifest_hash = hex64(test_manifest_hash(real));
  RegimeResult real_only{std::string(kRealOnly), {}, {}};
  RegimeResult synth_only{std::string(kSyntheticOnly), {}, {}};
  RegimeResult finetune{std::string(kPretrainFinetune), {}, {}};

  const auto record = [&](RegimeResult& r, std::uint64_t seed, NoduleClassifier& model) {
    const double acc = evaluate_classifier(model, test);
    r.seeds.push_back(seed);
    r.accuracies.push_back(acc);
    if (log) log(r.name, seed, acc);
  };

  for (auto seed : cfg.seeds) {
    auto c = cfg.classifier;
    c.seed = seed;

    c.max_steps = cfg.real_steps;
    auto real_run = train_classifier(c, real_train);
    record(real_only, seed, real_run.model);

    c.max_steps = cfg.synthetic_steps;
    auto synth_run = train_classifier(c, synth_train);
    record(synth_only, seed, synth_run.model);

    c.max_steps = cfg.finetune_steps;
    auto tuned = train_classifier(c, real_train, &synth_run.model);
    record(finetune, seed, tuned.model);

    if (hex64(test_manifest_hash(real)) != report.test_manifest_hash) {
      throw ArgumentError("test manifest changed during the regime experiment");
    }
  }
  report.regimes = {real_only, synth_only, finetune};
  return report;
}

std::vector<RegimeReport> sweep_nodule_sizes(std::span<const double> radii,
                                             const std::function<RegimeReport(double)>& pipeline) {
  if (radii.empty()) throw ArgumentError("nodule size sweep needs at least one radius");
  std::vector<RegimeReport> out;
  for (double r : radii) {
    auto report = pipeline(r);
    report.radius_vox = r;
    out.push_back(std::move(report));
  }
  return out;
}

std::string render_regime_table(std::span<const RegimeReport> reports) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-18s %-18s %-18s\n", "radius", "real-only", "synthetic-only",
                "pretrain+finetune");
  os << line;
  for (const auto& r : reports) {
    std::string cells[3];
    const std::string_view names[3] = {kRealOnly, kSyntheticOnly, kPretrainFinetune};
    for (int k = 0; k < 3; ++k) {
      const auto s = r.regime(names[k]).summary();
      char cell[40];
      std::snprintf(cell, sizeof cell, "%.3f +/- %.3f", s.mean, s.std);
      cells[k] = cell;
    }
    char radius[16];
    if (r.radius_vox > 0.0) {
      std::snprintf(radius, sizeof radius, "%.1f", r.radius_vox);
    } else {
      std::snprintf(radius, sizeof radius, "sampled");
    }
    std::snprintf(line, sizeof line, "%-10s %-18s %-18s %-18s\n", radius, cells[0].c_str(), cells[1].c_str(),
                  cells[2].c_str());
    os << line;
  }
  return os.str();
}

}  // namespace ctsgan
