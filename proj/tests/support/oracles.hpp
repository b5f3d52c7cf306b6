#pragma once

// Reference computations written directly from the model definitions in
// plain double arithmetic. They share no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

inline double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

inline double mean(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

// Volume-level JS objective with raw scores. slice_real[i][b] is the score of
// draw i of real volume b.
//   sum_i [ E -log D(S_i(v)) + E -log(1 - D(S_i(v'))) ]
//   + E -log D(S_T(v)) + E -log(1 - D(S_T(v')))
inline double js_volume_objective(const std::vector<std::vector<double>>& slice_real,
                                  const std::vector<std::vector<double>>& slice_fake,
                                  const std::vector<double>& slab_real, const std::vector<double>& slab_fake) {
  double f = 0.0;
  for (std::size_t i = 0; i < slice_real.size(); ++i) {
    std::vector<double> r, g;
    for (double s : slice_real[i]) r.push_back(-std::log(sigmoid(s)));
    for (double s : slice_fake[i]) g.push_back(-std::log(1.0 - sigmoid(s)));
    f += mean(r) + mean(g);
  }
  std::vector<double> r, g;
  for (double s : slab_real) r.push_back(-std::log(sigmoid(s)));
  for (double s : slab_fake) g.push_back(-std::log(1.0 - sigmoid(s)));
  return f + mean(r) + mean(g);
}

// Critic loss: sum_i [E fake_i - E real_i] + E slab_fake - E slab_real.
inline double wasserstein_critic(const std::vector<std::vector<double>>& slice_real,
                                 const std::vector<std::vector<double>>& slice_fake,
                                 const std::vector<double>& slab_real, const std::vector<double>& slab_fake) {
  double f = 0.0;
  for (std::size_t i = 0; i < slice_real.size(); ++i) f += mean(slice_fake[i]) - mean(slice_real[i]);
  return f + mean(slab_fake) - mean(slab_real);
}

// exp(mean_x KL(p(y|x) || p(y))).
inline double inception_score(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), c = rows[0].size();
  std::vector<double> marginal(c, 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < c; ++k) marginal[k] += r[k] / static_cast<double>(n);
  }
  double kl = 0.0;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < c; ++k) {
      if (r[k] > 0.0) kl += r[k] * (std::log(r[k]) - std::log(marginal[k]));
    }
  }
  return std::exp(kl / static_cast<double>(n));
}

// Voxels with squared distance to the cube center below r^2.
inline long sphere_voxels(long edge, double r) {
  const long c = edge / 2;
  long count = 0;
  for (long z = 0; z < edge; ++z)
    for (long y = 0; y < edge; ++y)
      for (long x = 0; x < edge; ++x) {
        const double d2 = double((z - c) * (z - c) + (y - c) * (y - c) + (x - c) * (x - c));
        if (d2 < r * r) ++count;
      }
  return count;
}

// Mutual information in bits of a 2x2 contingency table.
inline double mutual_information_bits(const double counts[2][2]) {
  double n = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) n += counts[i][j];
  double mi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (counts[i][j] == 0.0) continue;
      const double pij = counts[i][j] / n;
      const double pi = (counts[i][0] + counts[i][1]) / n;
      const double pj = (counts[0][j] + counts[1][j]) / n;
      mi += pij * std::log2(pij / (pi * pj));
    }
  }
  return mi;
}

}  // namespace oracle
