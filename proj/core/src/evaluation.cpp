#include "ctsgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ctsgan/error.hpp"
#include "ctsgan/metrics.hpp"
#include "ctsgan/tensor_util.hpp"

namespace ctsgan {
namespace {

namespace nn = torch::nn;

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(c.size(0), c.size(1));
  // Tensor is row-major; Eigen default is column-major.
  const double* p = c.data_ptr<double>();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(r, k) = p[r * m.cols() + k];
  }
  return m;
}

torch::Tensor planes_of(const Volume& v) { return to_tensor(v).unsqueeze(1); }

}  // namespace

MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

void to_json(nlohmann::json& j, const FeatureExtractorSpec& s) {
  j = {{"stages", s.stages}, {"embed_dim", s.embed_dim}, {"classes", s.classes}};
}

void from_json(const nlohmann::json& j, FeatureExtractorSpec& s) {
  if (j.contains("stages")) s.stages = j["stages"].get<std::vector<Stage>>();
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.classes = j.value("classes", s.classes);
}

FeatureExtractorImpl::FeatureExtractorImpl(const FeatureExtractorSpec& spec) : spec_(spec) {
  if (spec_.stages.empty() || spec_.embed_dim < 1 || spec_.classes < 2) {
    throw ArgumentError("feature extractor: invalid spec");
  }
  std::int64_t in = 1;
  for (const auto& st : spec_.stages) {
    const auto k = st.stride == 2 ? 4 : 3;
    encoder_->push_back(nn::Conv2d(nn::Conv2dOptions(in, st.channels, k).stride(st.stride).padding(1)));
    encoder_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = st.channels;
  }
  encoder_->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({4, 4})));
  register_module("encoder", encoder_);
  embed_ = register_module("embed", nn::Linear(in * 16, spec_.embed_dim));
  head_ = register_module("head", nn::Linear(spec_.embed_dim, spec_.classes));
}

torch::Tensor FeatureExtractorImpl::embed(const torch::Tensor& planes) {
  if (planes.dim() != 4 || planes.size(1) != 1) throw ArgumentError("feature extractor expects [B,1,H,W]");
  return torch::leaky_relu(embed_->forward(encoder_->forward(planes).flatten(1)), 0.2);
}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& planes) {
  return head_->forward(embed(planes));
}

TrainedExtractor train_feature_extractor(std::span<const Phantom> corpus, const FeatureExtractorSpec& spec,
                                         const ExtractorTraining& training) {
  if (corpus.size() < 2) throw ArgumentError("feature extractor needs at least two phantoms");
  if (training.holdout_fraction <= 0.0 || training.holdout_fraction >= 1.0) {
    throw ArgumentError("holdout_fraction must lie in (0, 1)");
  }
  Rng rng(training.seed);
  torch::manual_seed(training.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(training.holdout_fraction * static_cast<double>(corpus.size()))));
  std::vector<Phantom> held;
  std::vector<torch::Tensor> planes;
  std::vector<std::int64_t> labels;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& ph = corpus[order[k]];
    if (k < n_hold) {
      held.push_back(ph);
      continue;
    }
    planes.push_back(planes_of(ph.volume));
    for (auto l : ph.plane_labels) labels.push_back(static_cast<std::int64_t>(l));
  }
  if (planes.empty()) throw ArgumentError("feature extractor: no training phantoms after holdout");
  const auto x = torch::cat(planes, 0);
  const auto y = torch::tensor(labels, torch::kInt64);

  TrainedExtractor out;
  out.extractor = FeatureExtractor(spec);
  torch::optim::Adam opt(out.extractor->parameters(), torch::optim::AdamOptions(training.lr));
  const auto n = x.size(0);
  for (std::int64_t step = 0; step < training.steps; ++step) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(std::min(training.batch, n)));
    for (auto& i : idx) i = rng.uniform_int(0, n - 1);
    const auto sel = torch::tensor(idx);
    opt.zero_grad();
    const auto loss = torch::nn::functional::cross_entropy(out.extractor->forward(x.index_select(0, sel)),
                                                           y.index_select(0, sel));
    if (!std::isfinite(loss.item<double>())) {
      throw NumericError("feature extractor training diverged at step " + std::to_string(step));
    }
    loss.backward();
    opt.step();
  }
  out.heldout_accuracy = plane_accuracy(out.extractor, held);
  return out;
}

Eigen::MatrixXd embed_planes(FeatureExtractor& f, const Volume& v) {
  torch::NoGradGuard no_grad;
  return to_eigen(f->embed(planes_of(v)));
}

Eigen::MatrixXd plane_probabilities(FeatureExtractor& f, const Volume& v) {
  torch::NoGradGuard no_grad;
  auto p = to_eigen(torch::softmax(f->forward(planes_of(v)).to(torch::kFloat64), 1));
  // Renormalize in double so every row passes the sum-to-one check exactly.
  for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();
  return p;
}

double plane_accuracy(FeatureExtractor& f, std::span<const Phantom> corpus) {
  torch::NoGradGuard no_grad;
  std::int64_t correct = 0;
  std::int64_t total = 0;
  for (const auto& ph : corpus) {
    const auto pred = f->forward(planes_of(ph.volume)).argmax(1);
    const auto* p = pred.data_ptr<std::int64_t>();
    for (std::size_t d = 0; d < ph.plane_labels.size(); ++d) {
      correct += p[d] == static_cast<std::int64_t>(ph.plane_labels[d]) ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

MeanStd slicewise_fid(std::span<const Volume> a, std::span<const Volume> b, FeatureExtractor& f, Rng& rng,
                      const SlicewiseFidOptions& options) {
  if (a.size() < 2 || b.size() < 2) throw ArgumentError("slicewise FID needs at least two scans per set");
  const auto depth = a.front().depth();
  for (const auto& set : {a, b}) {
    for (const auto& v : set) {
      if (v.depth() != depth) throw ArgumentError("slicewise FID: depth mismatch between scans");
    }
  }
  if (options.rounds < 1) throw ArgumentError("slicewise FID: rounds must be >= 1");
  if (options.pairing == Pairing::identical && a.size() != b.size()) {
    throw ArgumentError("identical pairing needs equally sized sets");
  }
  std::vector<Eigen::MatrixXd> emb_a;
  std::vector<Eigen::MatrixXd> emb_b;
  for (const auto& v : a) emb_a.push_back(embed_planes(f, v));
  for (const auto& v : b) emb_b.push_back(embed_planes(f, v));
  const auto dim = emb_a.front().cols();
  const auto pairs = options.pairs_per_round > 0
                         ? options.pairs_per_round
                         : static_cast<std::int64_t>(std::min(a.size(), b.size()));

  std::vector<double> round_values;
  for (std::int64_t r = 0; r < options.rounds; ++r) {
    std::vector<std::size_t> ia(static_cast<std::size_t>(pairs));
    std::vector<std::size_t> ib(static_cast<std::size_t>(pairs));
    for (std::int64_t k = 0; k < pairs; ++k) {
      ia[static_cast<std::size_t>(k)] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(a.size()) - 1));
      ib[static_cast<std::size_t>(k)] = options.pairing == Pairing::identical
                                            ? ia[static_cast<std::size_t>(k)]
                                            : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(b.size()) - 1));
    }
    double total = 0.0;
    for (std::int64_t d = 0; d < depth; ++d) {
      GaussianAccumulator ga(dim);
      GaussianAccumulator gb(dim);
      for (std::int64_t k = 0; k < pairs; ++k) {
        ga.add(emb_a[ia[static_cast<std::size_t>(k)]].row(d).transpose());
        gb.add(emb_b[ib[static_cast<std::size_t>(k)]].row(d).transpose());
      }
      total += fid(ga.mean(), ga.covariance(), gb.mean(), gb.covariance());
    }
    round_values.push_back(total / static_cast<double>(depth));
  }
  return mean_std(round_values);
}

MeanStd slicewise_inception_score(std::span<const Volume> vols, FeatureExtractor& f) {
  if (vols.empty()) throw ArgumentError("inception score needs at least one volume");
  std::vector<double> scores;
  for (const auto& v : vols) scores.push_back(inception_score(plane_probabilities(f, v)));
  return mean_std(scores);
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"label", r.label},     {"fid_mean", r.fid_mean}, {"fid_std", r.fid_std},
       {"is_mean", r.is_mean}, {"is_std", r.is_std},     {"protocol", r.protocol}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  r.label = j.value("label", std::string{});
  r.fid_mean = j.at("fid_mean").get<double>();
  r.fid_std = j.at("fid_std").get<double>();
  r.is_mean = j.at("is_mean").get<double>();
  r.is_std = j.at("is_std").get<double>();
  r.protocol = j.value("protocol", std::string("slicewise-paired"));
}

std::string render_metric_table(std::span<const MetricReport> rows) {
  std::ostringstream os;
  os << std::left << std::setw(36) << "Data Source" << std::right << std::setw(18) << "IS (higher)"
     << std::setw(22) << "FID (lower)" << '\n';
  os << std::string(76, '-') << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    std::ostringstream is;
    std::ostringstream fd;
    is << std::fixed << std::setprecision(2) << r.is_mean << " +/- " << r.is_std;
    fd << std::fixed << std::setprecision(2) << r.fid_mean << " +/- " << r.fid_std;
    os << std::left << std::setw(36) << r.label << std::right << std::setw(18) << is.str() << std::setw(22)
       << fd.str() << '\n';
  }
  return os.str();
}

}  // namespace ctsgan
