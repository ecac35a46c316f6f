#pragma once

// Association-rule interestingness measures for a technique pair over the
// actor x technique usage matrix, plus their one-hot binned encoding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include "ttpchain/attack_kb.hpp"
#include "ttpchain/error.hpp"

namespace ttpchain {

enum class AprioriMetric : std::uint8_t {
  Support = 0,
  Pmi,
  Phi,
  CausalSupport,
  Jaccard,
  Confidence,
  CausalConfidence,
  Conviction,
  AddedValue,
};

inline constexpr std::size_t kAprioriMetricCount = 9;

namespace apriori {

inline constexpr double kPmiFloor = -20.0;
inline constexpr double kPmiCeiling = 20.0;
inline constexpr double kConvictionCap = 100.0;

struct MetricSpec {
  std::string_view name;
  double lo;
  double hi;
};

// Clamping range per metric, used by the one-hot encoding.
inline constexpr std::array<MetricSpec, kAprioriMetricCount> kMetricSpecs = {{
    {"support", 0.0, 1.0},
    {"pmi", kPmiFloor, kPmiCeiling},
    {"phi", -1.0, 1.0},
    {"causal_support", 0.0, 1.0},
    {"jaccard", 0.0, 1.0},
    {"confidence", 0.0, 1.0},
    {"causal_confidence", 0.0, 1.0},
    {"conviction", 0.0, kConvictionCap},
    {"added_value", -1.0, 1.0},
}};

using Metrics = std::array<double, kAprioriMetricCount>;

inline double& at(Metrics& m, AprioriMetric k) { return m[static_cast<std::size_t>(k)]; }
inline double at(const Metrics& m, AprioriMetric k) { return m[static_cast<std::size_t>(k)]; }

// Metrics for the rule x => y from transaction counts: `n` rows, `nx` rows
// containing x, `ny` containing y, `nxy` containing both. Undefined values
// collapse to pinned constants so every result is finite.
inline Metrics compute_metrics(std::size_t n, std::size_t nx, std::size_t ny, std::size_t nxy) {
  if (n == 0) throw ContractViolation("apriori: zero transactions");
  if (nxy > nx || nxy > ny || nx > n || ny > n) throw ContractViolation("apriori: inconsistent counts");
  const double N = static_cast<double>(n);
  const double px = static_cast<double>(nx) / N;
  const double py = static_cast<double>(ny) / N;
  const double pxy = static_cast<double>(nxy) / N;
  const double pnxny = static_cast<double>(n + nxy - nx - ny) / N;

  Metrics m{};
  at(m, AprioriMetric::Support) = pxy;

  const double confidence = nx > 0 ? static_cast<double>(nxy) / static_cast<double>(nx) : 0.0;
  at(m, AprioriMetric::Confidence) = confidence;

  if (nx == 0 || ny == 0)
    at(m, AprioriMetric::Pmi) = 0.0;
  else if (nxy == 0)
    at(m, AprioriMetric::Pmi) = kPmiFloor;
  else
    at(m, AprioriMetric::Pmi) = std::log2(pxy / (px * py));

  if (nx == 0 || nx == n || ny == 0 || ny == n)
    at(m, AprioriMetric::Phi) = 0.0;
  else
    at(m, AprioriMetric::Phi) = (pxy - px * py) / std::sqrt(px * py * (1.0 - px) * (1.0 - py));

  at(m, AprioriMetric::CausalSupport) = pxy + pnxny;

  const std::size_t union_count = nx + ny - nxy;
  at(m, AprioriMetric::Jaccard) = union_count > 0 ? static_cast<double>(nxy) / static_cast<double>(union_count) : 0.0;

  const double not_x_given_not_y =
      ny < n ? static_cast<double>(n + nxy - nx - ny) / static_cast<double>(n - ny) : 0.0;
  at(m, AprioriMetric::CausalConfidence) = 0.5 * (confidence + not_x_given_not_y);

  if (nx > 0 && nxy == nx)
    at(m, AprioriMetric::Conviction) = kConvictionCap;
  else
    at(m, AprioriMetric::Conviction) = std::min((1.0 - py) / (1.0 - confidence), kConvictionCap);

  at(m, AprioriMetric::AddedValue) = confidence - py;
  return m;
}

inline Metrics pair_metrics(const UsageMatrix& um, std::string_view tx, std::string_view ty) {
  if (um.rows() == 0) throw ValidationError("apriori: usage matrix has no rows");
  auto cx = um.column_index(tx);
  auto cy = um.column_index(ty);
  if (!cx) throw ValidationError("apriori: technique " + std::string(tx) + " is not a usage-matrix column");
  if (!cy) throw ValidationError("apriori: technique " + std::string(ty) + " is not a usage-matrix column");
  std::size_t nx = 0, ny = 0, nxy = 0;
  for (std::size_t r = 0; r < um.rows(); ++r) {
    bool x = um.at(r, *cx) != 0, y = um.at(r, *cy) != 0;
    nx += x;
    ny += y;
    nxy += x && y;
  }
  return compute_metrics(um.rows(), nx, ny, nxy);
}

// Equal-width bin of `v` after clamping to [lo, hi].
inline std::size_t bin_index(double v, double lo, double hi, std::size_t bins) {
  v = std::clamp(v, lo, hi);
  auto k = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
  return std::min(k, bins - 1);
}

// 9 raw metrics followed by 9 blocks of `bins` indicator slots.
inline std::vector<double> encode(const Metrics& m, std::size_t bins) {
  if (bins < 1) throw ContractViolation("apriori: bins must be >= 1");
  std::vector<double> out(kAprioriMetricCount * (1 + bins), 0.0);
  for (std::size_t k = 0; k < kAprioriMetricCount; ++k) {
    out[k] = m[k];
    out[kAprioriMetricCount + k * bins + bin_index(m[k], kMetricSpecs[k].lo, kMetricSpecs[k].hi, bins)] = 1.0;
  }
  return out;
}

inline std::vector<double> apriori_features(const UsageMatrix& um, const std::pair<std::string, std::string>& pair,
                                            std::size_t bins = 10) {
  return encode(pair_metrics(um, pair.first, pair.second), bins);
}

}  // namespace apriori
}  // namespace ttpchain
