#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "causalmix/common.hpp"

namespace causalmix {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Digamma via recurrence into the asymptotic range.
inline double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return result;
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// ---------------------------------------------------------------------------
// Loss primitives. Each returns the loss summed over all elements and fills
// analytic gradients of the same shape as its parameter inputs.
// ---------------------------------------------------------------------------

/// 0.5 * [log 2pi + logvar + (x - mu)^2 * exp(-logvar)], summed.
inline double gaussian_nll(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                           const Eigen::MatrixXd& logvar, Eigen::MatrixXd& grad_mu,
                           Eigen::MatrixXd& grad_logvar) {
  grad_mu.resize(mu.rows(), mu.cols());
  grad_logvar.resize(mu.rows(), mu.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double diff = x(i) - mu(i);
    const double inv_var = std::exp(-logvar(i));
    loss += 0.5 * (kLog2Pi + logvar(i) + diff * diff * inv_var);
    grad_mu(i) = -diff * inv_var;
    grad_logvar(i) = 0.5 * (1.0 - diff * diff * inv_var);
  }
  return loss;
}

inline double gaussian_log_density(double x, double mu, double logvar) {
  const double diff = x - mu;
  return -0.5 * (kLog2Pi + logvar + diff * diff * std::exp(-logvar));
}

/// softplus(logit) - x*logit (stable); grad = sigmoid(logit) - x.
inline double bernoulli_nll(double x, double logit, double& grad_logit) {
  grad_logit = sigmoid(logit) - x;
  return softplus(logit) - x * logit;
}

inline double bernoulli_log_density(double x, double logit) {
  return x * logit - softplus(logit);
}

/// logsumexp(logits) - logits[index]; grad = softmax - onehot.
inline double categorical_nll(int class_index, const Eigen::VectorXd& logits,
                              Eigen::VectorXd& grad_logits) {
  if (class_index < 0 || class_index >= logits.size())
    throw NumericError("categorical_nll: class index out of range");
  const double lse = log_sum_exp(logits);
  grad_logits.resize(logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k)
    grad_logits[k] = std::exp(logits[k] - lse);
  grad_logits[class_index] -= 1.0;
  return lse - logits[class_index];
}

inline double categorical_log_density(int class_index, const Eigen::VectorXd& logits) {
  return logits[class_index] - log_sum_exp(logits);
}

/// KL(N(mu, diag(e^logvar)) || N(0, I)) in closed form, summed over elements.
inline double kl_standard_gaussian(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                                   Eigen::MatrixXd& grad_mu, Eigen::MatrixXd& grad_logvar) {
  grad_mu.resize(mu.rows(), mu.cols());
  grad_logvar.resize(mu.rows(), mu.cols());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double var = std::exp(logvar(i));
    kl += 0.5 * (mu(i) * mu(i) + var - logvar(i) - 1.0);
    grad_mu(i) = mu(i);
    grad_logvar(i) = 0.5 * (var - 1.0);
  }
  return kl;
}

/// Huber-style smooth L1 with C1 branch switch at |r| = delta.
inline double smooth_l1(double residual, double& grad, double delta = 1.0) {
  const double a = std::fabs(residual);
  if (a <= delta) {
    grad = residual / delta;
    return residual * residual / (2.0 * delta);
  }
  grad = residual > 0.0 ? 1.0 : -1.0;
  return a - delta / 2.0;
}

}  // namespace causalmix
