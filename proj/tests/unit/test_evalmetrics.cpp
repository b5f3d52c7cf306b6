#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>
#include <torch/torch.h>

#include "ctsgan/error.hpp"
#include "ctsgan/evaluation.hpp"
#include "ctsgan/metrics.hpp"
#include "ctsgan/phantom.hpp"
#include "ctsgan/sgan.hpp"
#include "oracles.hpp"

namespace {

using namespace ctsgan;

Eigen::MatrixXd random_spd(std::mt19937_64& gen, int d) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(gen);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

std::vector<Phantom> phantoms(std::uint64_t first, int count) {
  std::vector<Phantom> out;
  for (int i = 0; i < count; ++i) {
    PhantomParams p;
    p.seed = first + static_cast<std::uint64_t>(i);
    out.push_back(generate_phantom(p));
  }
  return out;
}

std::vector<Volume> volumes_of(const std::vector<Phantom>& ps) {
  std::vector<Volume> out;
  for (const auto& p : ps) out.push_back(p.volume);
  return out;
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(m(i, j));
  return rows;
}

TEST(Fid, SelfDistanceIsZero) {
  std::mt19937_64 gen(1);
  for (int d : {1, 4, 16}) {
    const auto cov = random_spd(gen, d);
    const Eigen::VectorXd mu = Eigen::VectorXd::Random(d);
    EXPECT_NEAR(fid(mu, cov, mu, cov), 0.0, 1e-9);
  }
}

TEST(Fid, MeanShiftWithIdentityCovariance) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 3; ++trial) {
    const int d = 8;
    Eigen::VectorXd mu(d), delta(d);
    for (int k = 0; k < d; ++k) mu(k) = n(gen), delta(k) = n(gen);
    const auto eye = Eigen::MatrixXd::Identity(d, d);
    EXPECT_NEAR(fid(mu + delta, eye, mu, eye), delta.squaredNorm(), 1e-5);
  }
}

TEST(Fid, SymmetricNonNegativeAndDiagonalClosedForm) {
  std::mt19937_64 gen(3);
  const auto a = random_spd(gen, 6), b = random_spd(gen, 6);
  const Eigen::VectorXd ma = Eigen::VectorXd::Random(6), mb = Eigen::VectorXd::Random(6);
  EXPECT_NEAR(fid(ma, a, mb, b), fid(mb, b, ma, a), 1e-8);
  EXPECT_GE(fid(ma, a, mb, b), 0.0);
  // Diagonal covariances: sum_k (sqrt(a_k) - sqrt(b_k))^2.
  Eigen::VectorXd da(3), db(3);
  da << 1.0, 4.0, 9.0;
  db << 4.0, 1.0, 9.0;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  EXPECT_NEAR(fid(zero, da.asDiagonal().toDenseMatrix(), zero, db.asDiagonal().toDenseMatrix()), 2.0, 1e-9);
  EXPECT_THROW(fid(zero, a, zero, b), ArgumentError);
}

TEST(GaussianAccumulator, MergeMatchesSinglePass) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Random(20, 3);
  GaussianAccumulator whole(3), left(3), right(3);
  whole.add_rows(rows);
  left.add_rows(rows.topRows(7));
  right.add_rows(rows.bottomRows(13));
  left.merge(right);
  EXPECT_EQ(left.count(), 20);
  EXPECT_TRUE(left.mean().isApprox(whole.mean(), 1e-12));
  EXPECT_TRUE(left.covariance().isApprox(whole.covariance(), 1e-12));
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  EXPECT_TRUE(whole.covariance().isApprox(centered.transpose() * centered / 19.0, 1e-12));
}

TEST(InceptionScore, IdenticalRowsGiveOne) {
  Eigen::MatrixXd p(5, 3);
  for (int i = 0; i < 5; ++i) p.row(i) << 0.2, 0.5, 0.3;
  EXPECT_NEAR(inception_score(p), 1.0, 1e-9);
}

TEST(InceptionScore, OneHotRowsGiveClassCount) {
  for (int c : {2, 4, 7}) {
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(c, c);
    EXPECT_NEAR(inception_score(p), static_cast<double>(c), 1e-9);
  }
}

TEST(InceptionScore, MatchesOracleAndBounds) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd p(30, 4);
  for (int i = 0; i < 30; ++i) {
    for (int k = 0; k < 4; ++k) p(i, k) = u(gen);
    p.row(i) /= p.row(i).sum();
  }
  const double is = inception_score(p);
  EXPECT_NEAR(is, oracle::inception_score(to_rows(p)), 1e-9);
  EXPECT_GE(is, 1.0);
  EXPECT_LE(is, 4.0);
  Eigen::MatrixXd bad(1, 2);
  bad << 0.7, 0.7;
  EXPECT_THROW(inception_score(bad), ArgumentError);
}

TEST(MeanStd, PopulationStd) {
  const std::vector<double> xs{1.0, 3.0};
  const auto ms = mean_std(xs);
  EXPECT_DOUBLE_EQ(ms.mean, 2.0);
  EXPECT_DOUBLE_EQ(ms.std, 1.0);
}

class ExtractorFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    torch::set_num_threads(1);
    corpus_ = new std::vector<Phantom>(phantoms(0, 16));
    ExtractorTraining t;
    t.steps = 200;
    trained_ = new TrainedExtractor(train_feature_extractor(*corpus_, FeatureExtractorSpec{}, t));
  }
  static void TearDownTestSuite() {
    delete trained_;
    delete corpus_;
  }
  static std::vector<Phantom>* corpus_;
  static TrainedExtractor* trained_;
};
std::vector<Phantom>* ExtractorFixture::corpus_ = nullptr;
TrainedExtractor* ExtractorFixture::trained_ = nullptr;

TEST_F(ExtractorFixture, EmbeddingShapeAndDeterminism) {
  auto f = trained_->extractor;
  const auto e = embed_planes(f, corpus_->front().volume);
  EXPECT_EQ(e.rows(), 32);
  EXPECT_EQ(e.cols(), FeatureExtractorSpec{}.embed_dim);
  EXPECT_TRUE(e.isApprox(embed_planes(f, corpus_->front().volume), 0.0));
  const auto probs = plane_probabilities(f, corpus_->front().volume);
  EXPECT_NEAR(probs.row(0).sum(), 1.0, 1e-6);
}

TEST_F(ExtractorFixture, SelfComparisonWithIdenticalPairingIsZero) {
  auto f = trained_->extractor;
  const auto vols = volumes_of(*corpus_);
  Rng rng(0);
  SlicewiseFidOptions opt;
  opt.pairing = Pairing::identical;
  opt.rounds = 2;
  const auto r = slicewise_fid(vols, vols, f, rng, opt);
  EXPECT_NEAR(r.mean, 0.0, 1e-9);
}

TEST_F(ExtractorFixture, PhantomSplitIsCloserThanUntrainedGenerator) {
  auto f = trained_->extractor;
  const auto held = volumes_of(phantoms(1000, 8));
  const auto other = volumes_of(phantoms(2000, 8));
  ModelState untrained(SganConfig::desk());
  std::vector<Volume> fake;
  for (std::uint64_t s = 0; s < 8; ++s) fake.push_back(generate_volume(untrained, s, 32));
  Rng r1(1), r2(1);
  const double real_vs_real = slicewise_fid(other, held, f, r1).mean;
  const double fake_vs_real = slicewise_fid(fake, held, f, r2).mean;
  EXPECT_LT(real_vs_real, fake_vs_real);
  Rng r3(1);
  EXPECT_EQ(slicewise_fid(other, held, f, r3).mean, real_vs_real);

  const auto is = slicewise_inception_score(held, f);
  EXPECT_GE(is.mean, 1.0);
  EXPECT_LE(is.mean, static_cast<double>(kPlaneClassCount));
}

TEST_F(ExtractorFixture, DepthMismatchIsRejected) {
  auto f = trained_->extractor;
  PhantomParams p;
  p.size = 16;
  const std::vector<Volume> small{generate_phantom(p).volume, generate_phantom(p).volume};
  const auto vols = volumes_of(*corpus_);
  Rng rng(0);
  EXPECT_THROW(slicewise_fid(vols, small, f, rng), ArgumentError);
}

TEST(FeatureExtractor, HeldOutAccuracyAboveEightyPercentOnThreeSeeds) {
  const auto corpus = phantoms(500, 16);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ExtractorTraining t;
    t.seed = seed;
    const auto trained = train_feature_extractor(corpus, FeatureExtractorSpec{}, t);
    EXPECT_GT(trained.heldout_accuracy, 0.8) << "seed " << seed;
  }
}

TEST(MetricReport, TableHasHeaderAndRows) {
  std::vector<MetricReport> rows(2);
  rows[0].label = "alpha";
  rows[1].label = "beta";
  const auto table = render_metric_table(rows);
  EXPECT_NE(table.find("FID"), std::string::npos);
  EXPECT_NE(table.find("beta"), std::string::npos);
  const nlohmann::json j = rows[0];
  EXPECT_EQ(j.get<MetricReport>().label, "alpha");
}

}  // namespace
