#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "causalmix/eval_common.hpp"
#include "causalmix/eval_distributional.hpp"

namespace causalmix {

// ---------------------------------------------------------------------------
// Treatment-effect block
// ---------------------------------------------------------------------------

struct TeDiagnostics {
  double mae = 0.0;
  double correlation = 0.0;
  bool correlation_na = false;  // either side constant
  double ate_theta = 0.0;
  double ate_target = 0.0;
  double ate_error = 0.0;
  double w1 = 0.0;
};

inline TeDiagnostics te_diagnostics(const std::vector<double>& tau_theta,
                                    const std::vector<double>& tau_target) {
  if (tau_theta.size() != tau_target.size())
    throw InputError("te_diagnostics: length mismatch");
  if (tau_theta.size() < 2) throw InputError("te_diagnostics: need at least 2 rows");
  TeDiagnostics d;
  double mae = 0.0;
  for (std::size_t i = 0; i < tau_theta.size(); ++i)
    mae += std::fabs(tau_theta[i] - tau_target[i]);
  d.mae = mae / static_cast<double>(tau_theta.size());
  d.ate_theta = mean_of(tau_theta);
  d.ate_target = mean_of(tau_target);
  d.ate_error = std::fabs(d.ate_theta - d.ate_target);
  d.w1 = wasserstein1(tau_theta, tau_target);
  if (population_sd(tau_theta) < 1e-12 || population_sd(tau_target) < 1e-12) {
    d.correlation_na = true;
  } else {
    d.correlation = pearson(tau_theta, tau_target);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Confounding block
// ---------------------------------------------------------------------------

struct ConfoundingDiagnostics {
  double mae = 0.0;
  double mae_t0 = 0.0;
  double mae_t1 = 0.0;
  bool t0_na = false;
  bool t1_na = false;
  double w1 = 0.0;
};

inline ConfoundingDiagnostics confounding_diagnostics(const std::vector<double>& kappa_theta,
                                                      const std::vector<double>& kappa_target,
                                                      const std::vector<double>& arms) {
  if (kappa_theta.size() != kappa_target.size() || kappa_theta.size() != arms.size())
    throw InputError("confounding_diagnostics: length mismatch");
  ConfoundingDiagnostics d;
  double acc = 0.0, acc0 = 0.0, acc1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < kappa_theta.size(); ++i) {
    const double err = std::fabs(kappa_theta[i] - kappa_target[i]);
    acc += err;
    if (arms[i] == 1.0) {
      acc1 += err;
      ++n1;
    } else {
      acc0 += err;
      ++n0;
    }
  }
  d.mae = acc / static_cast<double>(kappa_theta.size());
  d.t0_na = n0 == 0;
  d.t1_na = n1 == 0;
  if (!d.t0_na) d.mae_t0 = acc0 / static_cast<double>(n0);
  if (!d.t1_na) d.mae_t1 = acc1 / static_cast<double>(n1);
  d.w1 = wasserstein1(kappa_theta, kappa_target);
  return d;
}

// ---------------------------------------------------------------------------
// Decoder overlap block
// ---------------------------------------------------------------------------

struct OverlapDecoderDiagnostics {
  double mse = 0.0;
  double fraction_within = 0.0;
  double tolerance = 0.5;
  double mean = 0.0;
  double sd = 0.0;
  double p5 = 0.0, p50 = 0.0, p95 = 0.0;
};

/// delta_theta is the diagnostic-sign ratio log p(X|T'=0) - log p(X|T'=1);
/// the user's log-overlap target follows the opposite (training) convention
/// and is negated here before comparison.
inline OverlapDecoderDiagnostics overlap_decoder_diagnostics(
    const std::vector<double>& delta_theta, const std::vector<double>& log_alpha_target,
    double tolerance = 0.5) {
  if (delta_theta.size() != log_alpha_target.size())
    throw InputError("overlap_decoder_diagnostics: length mismatch");
  OverlapDecoderDiagnostics d;
  d.tolerance = tolerance;
  double mse = 0.0;
  std::size_t within = 0;
  for (std::size_t i = 0; i < delta_theta.size(); ++i) {
    const double adjusted_target = -log_alpha_target[i];
    const double err = delta_theta[i] - adjusted_target;
    mse += err * err;
    if (std::fabs(err) <= tolerance) ++within;
  }
  d.mse = mse / static_cast<double>(delta_theta.size());
  d.fraction_within = static_cast<double>(within) / static_cast<double>(delta_theta.size());
  d.mean = mean_of(delta_theta);
  d.sd = population_sd(delta_theta);
  d.p5 = quantile(delta_theta, 0.05);
  d.p50 = quantile(delta_theta, 0.50);
  d.p95 = quantile(delta_theta, 0.95);
  return d;
}

// ---------------------------------------------------------------------------
// Propensity overlap block
// ---------------------------------------------------------------------------

/// One-hot/standardized covariate encoding of a single table, fit on itself.
inline Eigen::MatrixXd encode_covariates_onehot(const Table& t) {
  const auto& schema = *t.schema;
  int width = 0;
  for (const auto& name : schema.covariates) {
    const auto& meta = schema.column(name);
    width += meta.kind == ColumnKind::categorical ? meta.num_classes : 1;
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.n_rows), width);
  int off = 0;
  for (const auto& name : schema.covariates) {
    const auto& meta = schema.column(name);
    const auto& col = t.col(name);
    if (is_numeric_scaled(meta.kind)) {
      const double mean = mean_of(col);
      double sd = population_sd(col);
      if (!(sd > 0.0)) sd = 1.0;
      for (std::size_t r = 0; r < t.n_rows; ++r)
        out(static_cast<Eigen::Index>(r), off) = (col[r] - mean) / sd;
      ++off;
    } else if (meta.kind == ColumnKind::binary) {
      for (std::size_t r = 0; r < t.n_rows; ++r)
        out(static_cast<Eigen::Index>(r), off) = col[r];
      ++off;
    } else {
      for (std::size_t r = 0; r < t.n_rows; ++r)
        out(static_cast<Eigen::Index>(r), off + static_cast<int>(col[r])) = 1.0;
      off += meta.num_classes;
    }
  }
  return out;
}

struct PropensityDiagnostics {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd propensity;
  Eigen::VectorXd grid;  // 512 points over [0,1]
  Eigen::VectorXd density_t0, density_t1;
  double auc = 0.5;
};

struct OverlapPropensityBlock {
  double auc = 0.5;
  double overlap_coefficient = 1.0;
  double common_support = 1.0;
  double common_support_t0 = 1.0;
  double common_support_t1 = 1.0;
  PropensityDiagnostics diag;
};

/// Fits e(X') = Pr(T'=1 | X') by ridge IRLS, smooths per-arm propensity
/// densities with a reflected Gaussian KDE on a 512-point grid, and
/// integrates their pointwise minimum for the overlap coefficient.
inline OverlapPropensityBlock propensity_overlap(const Table& synth) {
  const auto& schema = *synth.schema;
  const auto& t_col = synth.col(schema.treatment);
  std::size_t n1 = 0;
  for (double t : t_col)
    if (t == 1.0) ++n1;
  const std::size_t n0 = t_col.size() - n1;
  if (n0 < 20 || n1 < 20)
    throw InputError("propensity_overlap: need at least 20 rows per treatment arm");

  const Eigen::MatrixXd x = encode_covariates_onehot(synth);
  Eigen::VectorXd labels(static_cast<Eigen::Index>(t_col.size()));
  for (std::size_t i = 0; i < t_col.size(); ++i)
    labels[static_cast<Eigen::Index>(i)] = t_col[i];
  const LogisticFit fit = fit_logistic(x, labels);

  OverlapPropensityBlock block;
  block.diag.coefficients = fit.beta;
  block.diag.propensity = fit.probs;

  std::vector<double> scores(t_col.size());
  std::vector<int> int_labels(t_col.size());
  std::vector<double> e0, e1;
  for (std::size_t i = 0; i < t_col.size(); ++i) {
    scores[i] = fit.probs[static_cast<Eigen::Index>(i)];
    int_labels[i] = static_cast<int>(t_col[i]);
    (t_col[i] == 1.0 ? e1 : e0).push_back(scores[i]);
  }
  block.auc = auc_midrank(scores, int_labels);
  block.diag.auc = block.auc;

  block.diag.grid = Eigen::VectorXd::LinSpaced(512, 0.0, 1.0);
  block.diag.density_t0 = kde_reflected(e0, block.diag.grid, scott_bandwidth(e0));
  block.diag.density_t1 = kde_reflected(e1, block.diag.grid, scott_bandwidth(e1));
  Eigen::VectorXd pointwise_min = block.diag.density_t0.cwiseMin(block.diag.density_t1);
  block.overlap_coefficient = trapezoid(pointwise_min, block.diag.grid);

  const double lo = std::max(*std::min_element(e0.begin(), e0.end()),
                             *std::min_element(e1.begin(), e1.end()));
  const double hi = std::min(*std::max_element(e0.begin(), e0.end()),
                             *std::max_element(e1.begin(), e1.end()));
  auto support_fraction = [&](const std::vector<double>& e) {
    if (lo > hi || e.empty()) return 0.0;
    std::size_t inside = 0;
    for (double v : e)
      if (v >= lo && v <= hi) ++inside;
    return static_cast<double>(inside) / static_cast<double>(e.size());
  };
  block.common_support = support_fraction(scores);
  block.common_support_t0 = support_fraction(e0);
  block.common_support_t1 = support_fraction(e1);
  return block;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct CausalEntry {
  std::string category;
  std::string metric;
  double value = 0.0;
  bool na = false;
  std::string direction;
};

struct CausalReport {
  std::vector<CausalEntry> entries;
  TeDiagnostics te;
  ConfoundingDiagnostics confounding;
  OverlapDecoderDiagnostics decoder;
  OverlapPropensityBlock propensity;
  // Sign convention: delta_theta = log p(X'|T'=0) - log p(X'|T'=1); the
  // training-side quantity carries the opposite sign and is negated upstream.
  std::string convention =
      "delta_theta = log p(X'|T'=0) - log p(X'|T'=1); decoder MSE compares against "
      "the negated log-overlap target";
};

inline CausalReport causal_report(const std::vector<double>& tau_theta,
                                  const std::vector<double>& tau_target,
                                  const std::vector<double>& kappa_theta,
                                  const std::vector<double>& kappa_target,
                                  const std::vector<double>& delta_theta,
                                  const std::vector<double>& log_alpha_target,
                                  const Table& synth, double tolerance = 0.5) {
  CausalReport report;
  report.te = te_diagnostics(tau_theta, tau_target);
  report.confounding =
      confounding_diagnostics(kappa_theta, kappa_target, synth.col(synth.schema->treatment));
  report.decoder = overlap_decoder_diagnostics(delta_theta, log_alpha_target, tolerance);
  report.propensity = propensity_overlap(synth);

  auto add = [&](const std::string& cat, const std::string& metric, double value,
                 const std::string& dir, bool na = false) {
    report.entries.push_back({cat, metric, value, na, dir});
  };
  add("Treatment Effect", "CATE/ITE MAE", report.te.mae, "lower");
  add("Treatment Effect", "CATE Correlation", report.te.correlation, "higher",
      report.te.correlation_na);
  add("Treatment Effect", "ATE Error", report.te.ate_error, "lower");
  add("Treatment Effect", "Induced ATE", report.te.ate_theta, "");
  add("Treatment Effect", "TE Distribution Distance (W1)", report.te.w1, "lower");
  add("Confounding", "Confounding MAE", report.confounding.mae, "lower");
  add("Confounding", "Group-wise MAE (T=0)", report.confounding.mae_t0, "lower",
      report.confounding.t0_na);
  add("Confounding", "Group-wise MAE (T=1)", report.confounding.mae_t1, "lower",
      report.confounding.t1_na);
  add("Confounding", "Confounding Dist. (W1)", report.confounding.w1, "lower");
  add("Overlap (decoder)", "MSE", report.decoder.mse, "lower");
  add("Overlap (decoder)", "Fraction within tolerance", report.decoder.fraction_within,
      "higher");
  add("Overlap (decoder)", "Delta mean", report.decoder.mean, "");
  add("Overlap (decoder)", "Delta sd", report.decoder.sd, "");
  add("Overlap (decoder)", "Delta p5", report.decoder.p5, "");
  add("Overlap (decoder)", "Delta p50", report.decoder.p50, "");
  add("Overlap (decoder)", "Delta p95", report.decoder.p95, "");
  add("Overlap (propensity)", "Propensity AUC", report.propensity.auc, "");
  add("Overlap (propensity)", "Histogram overlap coefficient",
      report.propensity.overlap_coefficient, "higher");
  add("Overlap (propensity)", "Common support fraction", report.propensity.common_support,
      "higher");
  add("Overlap (propensity)", "Common support fraction (T=0)",
      report.propensity.common_support_t0, "higher");
  add("Overlap (propensity)", "Common support fraction (T=1)",
      report.propensity.common_support_t1, "higher");
  return report;
}

}  // namespace causalmix
