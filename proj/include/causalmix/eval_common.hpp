#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "causalmix/losses.hpp"
#include "causalmix/rng.hpp"
#include "causalmix/table.hpp"

namespace causalmix {

inline double population_sd(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

/// Common metric-space encoding of a real/synthetic table pair. Continuous
/// and integer columns are standardized with statistics fit on the real data;
/// binary columns stay as single 0/1 columns and categorical columns expand
/// to one-hot blocks in the full encoding. The discrete-index view keeps one
/// coordinate per discrete variable for Hamming-kernel metrics.
struct EncodedPair {
  Eigen::MatrixXd real_full, synth_full;
  Eigen::MatrixXd real_cont, synth_cont;
  Eigen::MatrixXd real_disc, synth_disc;  // category indices per variable
  std::vector<std::string> cont_names, disc_names;
};

namespace detail {

struct MetricScaler {
  std::vector<double> mean, sd;  // per continuous column
};

}  // namespace detail

inline EncodedPair metric_encode(const Table& real, const Table& synth) {
  if (schema_hash(*real.schema) != schema_hash(*synth.schema))
    throw InputError("metric_encode: schema mismatch between datasets");
  const auto& schema = *real.schema;

  std::vector<std::size_t> cont_cols, disc_cols;
  int onehot_width = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (is_numeric_scaled(schema.columns[c].kind)) {
      cont_cols.push_back(c);
      ++onehot_width;
    } else {
      disc_cols.push_back(c);
      onehot_width += schema.columns[c].kind == ColumnKind::categorical
                          ? schema.columns[c].num_classes
                          : 1;
    }
  }

  detail::MetricScaler scaler;
  for (std::size_t c : cont_cols) {
    const auto& col = real.values[c];
    scaler.mean.push_back(mean_of(col));
    const double sd = population_sd(col);
    scaler.sd.push_back(sd > 0.0 ? sd : 1.0);
  }

  auto encode = [&](const Table& t, Eigen::MatrixXd& full, Eigen::MatrixXd& cont,
                    Eigen::MatrixXd& disc) {
    const Eigen::Index n = static_cast<Eigen::Index>(t.n_rows);
    full.setZero(n, onehot_width);
    cont.resize(n, static_cast<Eigen::Index>(cont_cols.size()));
    disc.resize(n, static_cast<Eigen::Index>(disc_cols.size()));
    int off = 0;
    for (std::size_t i = 0; i < cont_cols.size(); ++i) {
      const auto& col = t.values[cont_cols[i]];
      for (Eigen::Index r = 0; r < n; ++r) {
        const double v = (col[static_cast<std::size_t>(r)] - scaler.mean[i]) / scaler.sd[i];
        cont(r, static_cast<Eigen::Index>(i)) = v;
        full(r, off) = v;
      }
      ++off;
    }
    for (std::size_t i = 0; i < disc_cols.size(); ++i) {
      const auto& meta = schema.columns[disc_cols[i]];
      const auto& col = t.values[disc_cols[i]];
      for (Eigen::Index r = 0; r < n; ++r) {
        const double v = col[static_cast<std::size_t>(r)];
        disc(r, static_cast<Eigen::Index>(i)) = v;
        if (meta.kind == ColumnKind::categorical)
          full(r, off + static_cast<int>(v)) = 1.0;
        else
          full(r, off) = v;
      }
      off += meta.kind == ColumnKind::categorical ? meta.num_classes : 1;
    }
  };

  EncodedPair out;
  encode(real, out.real_full, out.real_cont, out.real_disc);
  encode(synth, out.synth_full, out.synth_cont, out.synth_disc);
  for (std::size_t c : cont_cols) out.cont_names.push_back(schema.columns[c].name);
  for (std::size_t c : disc_cols) out.disc_names.push_back(schema.columns[c].name);
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression (IRLS with a small ridge) and rank-based AUC
// ---------------------------------------------------------------------------

struct LogisticFit {
  Eigen::VectorXd beta;   // [intercept, coefficients...]
  Eigen::VectorXd probs;  // fitted probabilities on the training features
};

inline LogisticFit fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                                double ridge = 1e-6, int max_iter = 100) {
  const Eigen::Index n = features.rows();
  if (labels.size() != n) throw InputError("fit_logistic: label count mismatch");
  const double label_sum = labels.sum();
  if (label_sum <= 0.0 || label_sum >= static_cast<double>(n))
    throw InputError("fit_logistic: labels contain a single class");

  Eigen::MatrixXd x(n, features.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(features.cols()) = features;
  const Eigen::Index p = x.cols();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd probs(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i)
      probs[i] = std::clamp(sigmoid(eta[i]), 1e-9, 1.0 - 1e-9);
    const Eigen::VectorXd w = probs.array() * (1.0 - probs.array());
    Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
    h.diagonal().array() += ridge;
    const Eigen::VectorXd g = x.transpose() * (labels - probs) - ridge * beta;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  const Eigen::VectorXd eta = x * beta;
  for (Eigen::Index i = 0; i < n; ++i)
    probs[i] = std::clamp(sigmoid(eta[i]), 1e-9, 1.0 - 1e-9);
  return {beta, probs};
}

inline Eigen::VectorXd logistic_predict(const LogisticFit& fit, const Eigen::MatrixXd& features) {
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double eta = fit.beta[0];
    for (Eigen::Index j = 0; j < features.cols(); ++j) eta += fit.beta[j + 1] * features(i, j);
    out[i] = std::clamp(sigmoid(eta), 1e-9, 1.0 - 1e-9);
  }
  return out;
}

/// Rank-statistic AUC with midranks for ties.
inline double auc_midrank(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (labels.size() != n) throw InputError("auc_midrank: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      rank_sum_pos += ranks[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InputError("auc_midrank: single-class labels");
  return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Gaussian KDE on [0,1] with boundary reflection
// ---------------------------------------------------------------------------

/// Scott's factor with a numerical floor so the 512-point grid stays
/// integrable.
inline double scott_bandwidth(const std::vector<double>& samples) {
  const double sd = population_sd(samples);
  const double h = sd * std::pow(static_cast<double>(samples.size()), -0.2);
  return std::max(h, 0.005);
}

inline Eigen::VectorXd kde_reflected(const std::vector<double>& samples,
                                     const Eigen::VectorXd& grid, double bandwidth) {
  const double inv_h = 1.0 / bandwidth;
  const double norm = inv_h / (std::sqrt(2.0 * M_PI) * static_cast<double>(samples.size()));
  Eigen::VectorXd density = Eigen::VectorXd::Zero(grid.size());
  auto kernel = [&](double u) { return std::exp(-0.5 * u * u); };
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double e = grid[g];
    double acc = 0.0;
    for (double s : samples)
      acc += kernel((e - s) * inv_h) + kernel((e + s) * inv_h) + kernel((2.0 - e - s) * inv_h);
    density[g] = norm * acc;
  }
  return density;
}

inline double trapezoid(const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
  double acc = 0.0;
  for (Eigen::Index i = 1; i < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return acc;
}

// ---------------------------------------------------------------------------
// Classical multidimensional scaling (2-D)
// ---------------------------------------------------------------------------

/// Double-centers the squared distance matrix and returns the top-2
/// eigencoordinates. Deterministic: component signs are fixed so the entry
/// of largest magnitude is positive.
inline Eigen::MatrixXd classical_mds_2d(const Eigen::MatrixXd& distances) {
  const Eigen::Index m = distances.rows();
  Eigen::MatrixXd d2 = distances.array().square();
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(m, m) -
                      Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  Eigen::MatrixXd b = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(m, 2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Index idx = m - 1 - k;  // eigenvalues ascend
    const double lambda = solver.eigenvalues()[idx];
    if (lambda <= 0.0) continue;
    Eigen::VectorXd v = solver.eigenvectors().col(idx);
    Eigen::Index arg_max = 0;
    v.cwiseAbs().maxCoeff(&arg_max);
    if (v[arg_max] < 0.0) v = -v;
    coords.col(k) = std::sqrt(lambda) * v;
  }
  return coords;
}

}  // namespace causalmix
