#pragma once

// Values derived by hand and frozen before the implementation existed.

#include <cmath>
#include <cstdint>

namespace frozen {

// Slice3 centers in a depth-S volume: S - 2.
inline constexpr std::int64_t kSliceCountAt224 = 222;

// Largest-remainder split of 1200 volumes at 0.75 / 0.125 / 0.125.
inline constexpr std::int64_t kSplitTotal = 1200;
inline constexpr std::int64_t kSplitTrain = 900;
inline constexpr std::int64_t kSplitVal = 150;
inline constexpr std::int64_t kSplitTest = 150;

// JS objective with every discriminator output at 0.5: (2N + 2) log 2.
inline double js_at_half(std::int64_t n) { return (2.0 * static_cast<double>(n) + 2.0) * std::log(2.0); }

// Critic loss with real scores 1 and fake scores 0 over N slice positions.
inline double wasserstein_unit_gap(std::int64_t n) { return -(static_cast<double>(n) + 1.0); }

// Default count distribution over 1..4 nodules.
inline constexpr double kCountProbabilities[4] = {0.3, 0.4, 0.2, 0.1};

}  // namespace frozen
