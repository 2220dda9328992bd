#pragma once

#include <vector>

#include "causalmix/cvae.hpp"
#include "causalmix/losses.hpp"

namespace causalmix {

/// Rigidness weights for one composite penalty:
///   lambda * mean[mse*delta^2 + sl1*SmoothL1(delta)] + var * Var(delta).
struct PenaltyTermWeights {
  double lambda = 1e3;
  double mse = 1.0;
  double sl1 = 1.0;
  double var = 1.0;
};

struct PenaltyWeights {
  double lambda_alpha = 50.0;
  PenaltyTermWeights tau;
  PenaltyTermWeights kappa;

  void validate() const {
    auto check = [](double v, const char* name) {
      if (!(v >= 0.0)) throw InputError(std::string("penalty weight ") + name + " must be >= 0");
    };
    check(lambda_alpha, "lambda_alpha");
    check(tau.lambda, "lambda_tau");
    check(tau.mse, "tau_mse");
    check(tau.sl1, "tau_sl1");
    check(tau.var, "tau_var");
    check(kappa.lambda, "lambda_kappa");
    check(kappa.mse, "kappa_mse");
    check(kappa.sl1, "kappa_sl1");
    check(kappa.var, "kappa_var");
  }
};

/// Weighted mean-alignment and variance terms of a composite penalty,
/// reported separately so the training log can audit each contribution.
struct CompositePenalty {
  double mean_term = 0.0;
  double var_term = 0.0;
  double total() const { return mean_term + var_term; }
};

/// Composite penalty over residuals. Var is the population variance over the
/// batch. grad, when given, receives d(total)/d(residual_i).
inline CompositePenalty composite_penalty(const Eigen::VectorXd& residuals,
                                          const PenaltyTermWeights& w,
                                          Eigen::VectorXd* grad = nullptr) {
  const Eigen::Index n = residuals.size();
  if (n == 0) throw NumericError("composite_penalty: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double mean = residuals.mean();
  if (grad) grad->setZero(n);
  double mean_acc = 0.0;
  double sq_acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = residuals[i];
    double sl1_grad;
    const double sl1_val = smooth_l1(d, sl1_grad);
    mean_acc += w.mse * d * d + w.sl1 * sl1_val;
    sq_acc += d * d;
    if (grad)
      (*grad)[i] = w.lambda * inv_n * (2.0 * w.mse * d + w.sl1 * sl1_grad) +
                   w.var * 2.0 * inv_n * (d - mean);
  }
  CompositePenalty out;
  out.mean_term = w.lambda * inv_n * mean_acc;
  out.var_term = w.var * (sq_acc * inv_n - mean * mean);
  return out;
}

/// lambda_alpha * mean[(log_alpha_theta - log_alpha_target)^2].
inline double overlap_penalty(const Eigen::VectorXd& log_alpha_theta,
                              const Eigen::VectorXd& log_alpha_target, double lambda_alpha,
                              Eigen::VectorXd* grad = nullptr) {
  if (log_alpha_theta.size() != log_alpha_target.size())
    throw NumericError("overlap_penalty: length mismatch");
  const Eigen::Index n = log_alpha_theta.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  if (grad) grad->setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = log_alpha_theta[i] - log_alpha_target[i];
    acc += d * d;
    if (grad) (*grad)[i] = lambda_alpha * 2.0 * inv_n * d;
  }
  return lambda_alpha * acc * inv_n;
}

// ---------------------------------------------------------------------------
// Induced causal quantities from decoder outputs.
//
// Decoder means live in model (standardized) space; outcome_scale carries
// them back to raw outcome units so residuals compare against the raw-scale
// control targets. Binary outcomes are already on the probability scale and
// use outcome_scale = 1.
// ---------------------------------------------------------------------------

/// tau_theta per row from a potential-outcomes decode at the observed
/// conditioning: arm-1 mean minus arm-0 mean.
inline Eigen::VectorXd induced_tau(const HeadOutputs& outputs, std::size_t outcome_var,
                                   double outcome_scale) {
  const auto& v = outputs.cfg->targets[outcome_var];
  if (v.kind == ColumnKind::categorical)
    throw NumericError("induced_tau: multiclass outcome is not supported");
  if (!outputs.cfg->po_mode) throw NumericError("induced_tau: outputs are not in PO mode");
  const Eigen::Index n = outputs.batch();
  Eigen::VectorXd tau(n);
  for (Eigen::Index r = 0; r < n; ++r)
    tau[r] = (outputs.mean(outcome_var, r, 1) - outputs.mean(outcome_var, r, 0)) * outcome_scale;
  return tau;
}

/// Accumulates d(loss)/d(head outputs) for induced_tau into the observed
/// pass's head gradient.
inline void induced_tau_backward(const HeadOutputs& outputs, std::size_t outcome_var,
                                 double outcome_scale, const Eigen::VectorXd& dtau,
                                 MatrixXd& head_grad) {
  const auto& v = outputs.cfg->targets[outcome_var];
  const int pw = head_param_width(v);
  for (Eigen::Index r = 0; r < outputs.batch(); ++r) {
    const double g = dtau[r] * outcome_scale;
    if (v.kind == ColumnKind::binary) {
      const double p1 = sigmoid(outputs.logit(outcome_var, r, 1));
      const double p0 = sigmoid(outputs.logit(outcome_var, r, 0));
      head_grad(r, pw) += g * p1 * (1.0 - p1);
      head_grad(r, 0) -= g * p0 * (1.0 - p0);
    } else {
      head_grad(r, pw) += g;      // arm-1 mu
      head_grad(r, 0) -= g;       // arm-0 mu
    }
  }
}

/// kappa_theta per row: the Y(t)-head mean under conditioning T=1 minus under
/// conditioning T=0, assembled from the observed and flipped decodes. Both
/// decodes must share the same latent draw and covariates.
inline Eigen::VectorXd induced_kappa(const HeadOutputs& outputs_obs,
                                     const HeadOutputs& outputs_flip,
                                     const std::vector<int>& arms, std::size_t outcome_var,
                                     double outcome_scale) {
  if (outputs_obs.batch() != outputs_flip.batch() ||
      outputs_obs.batch() != static_cast<Eigen::Index>(arms.size()))
    throw NumericError("induced_kappa: batch layout mismatch");
  const Eigen::Index n = outputs_obs.batch();
  Eigen::VectorXd kappa(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int t = arms[static_cast<std::size_t>(r)];
    const double under_obs = outputs_obs.mean(outcome_var, r, t);
    const double under_flip = outputs_flip.mean(outcome_var, r, t);
    // obs pass was conditioned on T=t, flip on T=1-t.
    kappa[r] = (t == 1 ? under_obs - under_flip : under_flip - under_obs) * outcome_scale;
  }
  return kappa;
}

inline void induced_kappa_backward(const HeadOutputs& outputs_obs,
                                   const HeadOutputs& outputs_flip,
                                   const std::vector<int>& arms, std::size_t outcome_var,
                                   double outcome_scale, const Eigen::VectorXd& dkappa,
                                   MatrixXd& head_grad_obs, MatrixXd& head_grad_flip) {
  const auto& v = outputs_obs.cfg->targets[outcome_var];
  const int pw = head_param_width(v);
  for (Eigen::Index r = 0; r < outputs_obs.batch(); ++r) {
    const int t = arms[static_cast<std::size_t>(r)];
    const double sign = t == 1 ? 1.0 : -1.0;
    const int off = t * pw;
    double d_obs = dkappa[r] * outcome_scale * sign;
    double d_flip = -d_obs;
    if (v.kind == ColumnKind::binary) {
      const double p_obs = sigmoid(outputs_obs.logit(outcome_var, r, t));
      const double p_flip = sigmoid(outputs_flip.logit(outcome_var, r, t));
      head_grad_obs(r, off) += d_obs * p_obs * (1.0 - p_obs);
      head_grad_flip(r, off) += d_flip * p_flip * (1.0 - p_flip);
    } else {
      head_grad_obs(r, off) += d_obs;
      head_grad_flip(r, off) += d_flip;
    }
  }
}

namespace detail {

/// Per-variable log-likelihood of the observed model-space value, with the
/// gradient w.r.t. the head parameters (arm 0; the covariate generator does
/// not use PO mode).
inline double head_log_density(const HeadOutputs& outputs, std::size_t var, Eigen::Index row,
                               double x, Eigen::RowVectorXd* grad) {
  const auto& v = outputs.cfg->targets[var];
  switch (v.kind) {
    case ColumnKind::continuous:
    case ColumnKind::integer: {
      const double mu = outputs.continuous_mu(var, row);
      const double logvar = outputs.continuous_logvar(var, row);
      if (grad) {
        const double diff = x - mu;
        const double inv_var = std::exp(-logvar);
        grad->setZero(2);
        (*grad)(0) = diff * inv_var;
        (*grad)(1) = -0.5 * (1.0 - diff * diff * inv_var);
      }
      return gaussian_log_density(x, mu, logvar);
    }
    case ColumnKind::binary: {
      const double logit = outputs.logit(var, row);
      if (grad) {
        grad->setZero(1);
        (*grad)(0) = x - sigmoid(logit);
      }
      return bernoulli_log_density(x, logit);
    }
    case ColumnKind::categorical: {
      const Eigen::VectorXd logits = outputs.logits(var, row);
      const int k = static_cast<int>(x);
      if (grad) {
        const double lse = log_sum_exp(logits);
        grad->setZero(logits.size());
        for (Eigen::Index c = 0; c < logits.size(); ++c)
          (*grad)(c) = -std::exp(logits[c] - lse);
        (*grad)(k) += 1.0;
      }
      return categorical_log_density(k, logits);
    }
  }
  return 0.0;
}

}  // namespace detail

/// Per-row induced log-density ratio
///   log p_theta(x | T'=1) - log p_theta(x | T'=0),
/// summed over independent feature-wise decoder likelihoods. Both decodes
/// must come from the same latent draw.
inline Eigen::VectorXd log_density_ratio(const MatrixXd& x_cols, const HeadOutputs& outputs_t0,
                                         const HeadOutputs& outputs_t1) {
  if (outputs_t0.batch() != outputs_t1.batch() || x_cols.rows() != outputs_t0.batch())
    throw NumericError("log_density_ratio: batch layout mismatch");
  const Eigen::Index n = x_cols.rows();
  const std::size_t n_vars = outputs_t0.cfg->targets.size();
  Eigen::VectorXd ratio = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (std::size_t var = 0; var < n_vars; ++var) {
      const double x = x_cols(r, static_cast<Eigen::Index>(var));
      ratio[r] += detail::head_log_density(outputs_t1, var, r, x, nullptr) -
                  detail::head_log_density(outputs_t0, var, r, x, nullptr);
    }
  return ratio;
}

/// Routes d(loss)/d(ratio_i) into the head gradients of both decode passes.
inline void log_density_ratio_backward(const MatrixXd& x_cols, const HeadOutputs& outputs_t0,
                                       const HeadOutputs& outputs_t1,
                                       const Eigen::VectorXd& dratio,
                                       std::vector<MatrixXd>& head_grads_t0,
                                       std::vector<MatrixXd>& head_grads_t1) {
  const std::size_t n_vars = outputs_t0.cfg->targets.size();
  Eigen::RowVectorXd g;
  for (Eigen::Index r = 0; r < x_cols.rows(); ++r)
    for (std::size_t var = 0; var < n_vars; ++var) {
      const double x = x_cols(r, static_cast<Eigen::Index>(var));
      detail::head_log_density(outputs_t1, var, r, x, &g);
      head_grads_t1[var].row(r).leftCols(g.size()) += dratio[r] * g;
      detail::head_log_density(outputs_t0, var, r, x, &g);
      head_grads_t0[var].row(r).leftCols(g.size()) -= dratio[r] * g;
    }
}

/// Audited decomposition of the training objective. vae already includes the
/// KL term weighted by lambda_KL; kl is logged alongside for diagnostics.
struct LossComponents {
  double vae = 0.0;
  double kl = 0.0;
  double l_alpha = 0.0;
  double l_tau_mean = 0.0;
  double l_tau_var = 0.0;
  double l_kappa_mean = 0.0;
  double l_kappa_var = 0.0;

  double total() const {
    return vae + l_alpha + l_tau_mean + l_tau_var + l_kappa_mean + l_kappa_var;
  }

  LossComponents& operator+=(const LossComponents& o) {
    vae += o.vae;
    kl += o.kl;
    l_alpha += o.l_alpha;
    l_tau_mean += o.l_tau_mean;
    l_tau_var += o.l_tau_var;
    l_kappa_mean += o.l_kappa_mean;
    l_kappa_var += o.l_kappa_var;
    return *this;
  }

  LossComponents& operator/=(double d) {
    vae /= d;
    kl /= d;
    l_alpha /= d;
    l_tau_mean /= d;
    l_tau_var /= d;
    l_kappa_mean /= d;
    l_kappa_var /= d;
    return *this;
  }
};

}  // namespace causalmix
