#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace ctsgan {

// Frechet distance between N(mu1, cov1) and N(mu2, cov2):
//   |mu1 - mu2|^2 + Tr(cov1 + cov2 - 2 (cov1 cov2)^{1/2}).
// The trace of the cross term is taken as Tr((S1^{1/2} S2 S1^{1/2})^{1/2})
// with negative eigenvalues clipped to zero, so the result is >= 0.
double fid(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
           const Eigen::MatrixXd& cov2);

// Streaming mean/covariance of embedding vectors. Accumulators merge, so
// partial statistics computed in parallel can be combined.
class GaussianAccumulator {
 public:
  explicit GaussianAccumulator(std::int64_t dim);

  void add(const Eigen::Ref<const Eigen::VectorXd>& x);
  void add_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows);
  void merge(const GaussianAccumulator& other);

  std::int64_t count() const { return count_; }
  std::int64_t dim() const { return static_cast<std::int64_t>(sum_.size()); }
  Eigen::VectorXd mean() const;
  // Unbiased (n - 1) covariance; zero for fewer than two samples.
  Eigen::MatrixXd covariance() const;

 private:
  std::int64_t count_ = 0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd outer_;
};

// exp(mean_x KL(p(y|x) || p(y))) over rows of class probabilities. Rows
// must be non-negative and sum to 1 within 1e-6.
double inception_score(const Eigen::Ref<const Eigen::MatrixXd>& probs);

}  // namespace ctsgan
