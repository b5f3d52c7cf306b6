#include "ctsgan/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
           const Eigen::MatrixXd& cov2) {
  const auto d = mu1.size();
  if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d) {
    throw ArgumentError("fid: dimension mismatch");
  }
  if (mu1 == mu2 && cov1 == cov2) return 0.0;
  const Eigen::MatrixXd s1 = psd_sqrt(cov1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s1 * cov2 * s1, Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

GaussianAccumulator::GaussianAccumulator(std::int64_t dim)
    : sum_(Eigen::VectorXd::Zero(dim)), outer_(Eigen::MatrixXd::Zero(dim, dim)) {
  if (dim < 1) throw ArgumentError("accumulator dimension must be >= 1");
}

void GaussianAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != sum_.size()) throw ArgumentError("accumulator: dimension mismatch");
  sum_ += x;
  outer_.noalias() += x * x.transpose();
  ++count_;
}

void GaussianAccumulator::add_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  for (Eigen::Index r = 0; r < rows.rows(); ++r) add(rows.row(r).transpose());
}

void GaussianAccumulator::merge(const GaussianAccumulator& other) {
  if (other.dim() != dim()) throw ArgumentError("accumulator: dimension mismatch");
  sum_ += other.sum_;
  outer_ += other.outer_;
  count_ += other.count_;
}

Eigen::VectorXd GaussianAccumulator::mean() const {
  if (count_ == 0) return Eigen::VectorXd::Zero(sum_.size());
  return sum_ / static_cast<double>(count_);
}

Eigen::MatrixXd GaussianAccumulator::covariance() const {
  if (count_ < 2) return Eigen::MatrixXd::Zero(sum_.size(), sum_.size());
  const Eigen::VectorXd mu = mean();
  const double n = static_cast<double>(count_);
  return (outer_ - n * mu * mu.transpose()) / (n - 1.0);
}

double inception_score(const Eigen::Ref<const Eigen::MatrixXd>& probs) {
  if (probs.rows() == 0 || probs.cols() == 0) throw ArgumentError("inception score: empty input");
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    if ((probs.row(r).array() < 0.0).any() || !probs.row(r).allFinite()) {
      throw ArgumentError("inception score: row " + std::to_string(r) + " is not a distribution");
    }
    if (std::abs(probs.row(r).sum() - 1.0) > 1e-6) {
      throw ArgumentError("inception score: row " + std::to_string(r) + " does not sum to 1");
    }
  }
  const Eigen::RowVectorXd marginal = probs.colwise().mean();
  double kl_sum = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(r, c);
      if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal(c)));
    }
  }
  return std::exp(kl_sum / static_cast<double>(probs.rows()));
}

}  // namespace ctsgan
