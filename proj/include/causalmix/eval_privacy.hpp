#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "causalmix/eval_common.hpp"

namespace causalmix {

struct PrivacyReport {
  double protection_fraction = 0.0;
  double ratio_mean = 0.0;
  double ratio_p5 = 0.0;
  double ratio_p50 = 0.0;
  double ratio_p95 = 0.0;
  double baseline_score = 0.0;  // DCR baseline protection, clipped to [0,1]
  bool baseline_na = false;
};

namespace detail {

/// Nearest-neighbor distance from each row of `from` to any row of `to`.
inline std::vector<double> nn_distances(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to) {
  std::vector<double> out(static_cast<std::size_t>(from.rows()));
  parallel_for(static_cast<std::size_t>(from.rows()), [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.rows(); ++j)
      best = std::min(best, (from.row(static_cast<Eigen::Index>(i)) - to.row(j)).squaredNorm());
    out[i] = std::sqrt(best);
  });
  return out;
}

/// Leave-one-out nearest-neighbor distance within one dataset.
inline std::vector<double> nn_distances_loo(const Eigen::MatrixXd& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (j == static_cast<Eigen::Index>(i)) continue;
      best = std::min(best, (x.row(static_cast<Eigen::Index>(i)) - x.row(j)).squaredNorm());
    }
    out[i] = std::sqrt(best);
  });
  return out;
}

}  // namespace detail

/// Distance-to-closest-record protection: for each real record, compares its
/// nearest synthetic neighbor against its nearest other real neighbor in the
/// encoded space (standardized continuous + one-hot discrete, real-fit).
inline PrivacyReport dcr_protection(const Table& real, const Table& synth) {
  if (real.n_rows < 2)
    throw InputError("dcr_protection: the real table needs at least 2 rows");
  if (synth.n_rows < 1) throw InputError("dcr_protection: empty synthetic table");
  const EncodedPair enc = metric_encode(real, synth);
  const std::vector<double> d_syn = detail::nn_distances(enc.real_full, enc.synth_full);
  const std::vector<double> d_real = detail::nn_distances_loo(enc.real_full);

  PrivacyReport report;
  std::vector<double> ratios(real.n_rows);
  std::size_t protected_count = 0;
  for (std::size_t i = 0; i < real.n_rows; ++i) {
    if (d_syn[i] > d_real[i]) ++protected_count;
    ratios[i] = d_syn[i] / (d_real[i] + 1e-8);
  }
  report.protection_fraction =
      static_cast<double>(protected_count) / static_cast<double>(real.n_rows);
  report.ratio_mean = mean_of(ratios);
  report.ratio_p5 = quantile(ratios, 0.05);
  report.ratio_p50 = quantile(ratios, 0.50);
  report.ratio_p95 = quantile(ratios, 0.95);
  return report;
}

/// Column-independent random baseline: continuous uniform over the real
/// min-max, discrete uniform over the observed categories.
inline Table dcr_random_baseline(const Table& real, std::size_t n, std::uint64_t seed) {
  const auto& schema = *real.schema;
  Rng rng(seed);
  Table random_table;
  random_table.schema = real.schema;
  random_table.n_rows = n;
  random_table.values.resize(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& meta = schema.columns[c];
    const auto& col = real.values[c];
    auto& out = random_table.values[c];
    out.resize(n);
    if (is_numeric_scaled(meta.kind)) {
      const double lo = *std::min_element(col.begin(), col.end());
      const double hi = *std::max_element(col.begin(), col.end());
      for (std::size_t r = 0; r < n; ++r) {
        double v = rng.uniform(lo, hi);
        if (meta.kind == ColumnKind::integer) v = std::round(v);
        out[r] = v;
      }
    } else {
      std::vector<double> observed = col;
      std::sort(observed.begin(), observed.end());
      observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
      for (std::size_t r = 0; r < n; ++r) out[r] = observed[rng.below(observed.size())];
    }
  }
  return random_table;
}

/// DCR baseline protection: the median synthetic-to-real DCR normalized by
/// the median DCR of a random baseline dataset, clipped to [0,1].
inline double dcr_baseline_protection(const Table& real, const Table& synth, std::uint64_t seed,
                                      bool* na_flag = nullptr) {
  if (na_flag) *na_flag = false;
  const Table random_table = dcr_random_baseline(real, synth.n_rows, seed);
  const EncodedPair enc_synth = metric_encode(real, synth);
  const EncodedPair enc_rand = metric_encode(real, random_table);
  std::vector<double> synth_dcr = detail::nn_distances(enc_synth.synth_full, enc_synth.real_full);
  std::vector<double> rand_dcr = detail::nn_distances(enc_rand.synth_full, enc_rand.real_full);
  const double median_synth = quantile(synth_dcr, 0.5);
  const double median_rand = quantile(rand_dcr, 0.5);
  if (!(median_rand > 0.0)) {
    if (na_flag) *na_flag = true;
    return 0.0;
  }
  return std::min(1.0, median_synth / median_rand);
}

inline PrivacyReport privacy_report(const Table& real, const Table& synth, std::uint64_t seed) {
  PrivacyReport report = dcr_protection(real, synth);
  report.baseline_score = dcr_baseline_protection(real, synth, seed, &report.baseline_na);
  return report;
}

}  // namespace causalmix
