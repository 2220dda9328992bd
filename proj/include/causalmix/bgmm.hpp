#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "causalmix/json_util.hpp"
#include "causalmix/losses.hpp"
#include "causalmix/rng.hpp"

namespace causalmix {

struct BgmmFitConfig {
  int k_max = 1;                      // truncation level (latent dimensionality)
  double weight_concentration = 0.0;  // 0 -> 1/k_max
  int max_iter = 2000;
  double tol = 1e-4;   // absolute ELBO change
  double reg_covar = 1e-6;
  int n_init = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (k_max < 1) throw InputError("BGMM: k_max must be >= 1");
    if (max_iter < 1 || n_init < 1) throw InputError("BGMM: iteration counts must be positive");
    if (!(tol > 0.0) || !(reg_covar > 0.0)) throw InputError("BGMM: tol and reg_covar must be positive");
  }
};

/// Truncated Dirichlet-process Gaussian mixture with expected parameters
/// extracted after variational inference. Immutable once fitted.
struct BgmmModel {
  int k_max = 0;
  Eigen::VectorXd weights;               // simplex over k_max components
  Eigen::MatrixXd means;                 // k_max x d
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<Eigen::MatrixXd> chol;     // cached lower Cholesky factors
  double jitter_var = 0.0;               // mean encoder posterior variance
  double elbo = -std::numeric_limits<double>::infinity();
  std::vector<double> elbo_trace;        // of the winning restart
  bool fitted = false;

  int dim() const { return static_cast<int>(means.cols()); }
};

namespace detail {

struct BgmmVariational {
  // Stick-breaking Beta(a_k, b_k), Gaussian-Wishart (m_k, beta_k, Winv_k, nu_k).
  Eigen::VectorXd a, b, beta, nu;
  Eigen::MatrixXd m;                    // K x D
  std::vector<Eigen::MatrixXd> winv;    // W_k^{-1}
  // Derived per E-step.
  Eigen::VectorXd ln_pi, ln_det_lambda;
  std::vector<Eigen::MatrixXd> w;       // W_k
};

struct BgmmStats {
  Eigen::VectorXd nk;       // K
  Eigen::MatrixXd xbar;     // K x D
  std::vector<Eigen::MatrixXd> sk;  // K x (D x D)
};

inline BgmmStats compute_stats(const Eigen::MatrixXd& x, const Eigen::MatrixXd& resp) {
  const int K = static_cast<int>(resp.cols());
  const int D = static_cast<int>(x.cols());
  BgmmStats st;
  st.nk = resp.colwise().sum().transpose().array() + 1e-10;
  st.xbar = (resp.transpose() * x).array().colwise() / st.nk.array();
  st.sk.assign(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(D, D));
  for (int k = 0; k < K; ++k) {
    Eigen::MatrixXd centered = x.rowwise() - st.xbar.row(k);
    st.sk[static_cast<std::size_t>(k)] =
        (centered.transpose() * (centered.array().colwise() * resp.col(k).array()).matrix()) /
        st.nk[k];
  }
  return st;
}

inline double ln_wishart_b(const Eigen::MatrixXd& winv, double nu, int D) {
  // ln B(W, nu) with W = winv^{-1}: ln|W| = -ln|winv|.
  Eigen::LLT<Eigen::MatrixXd> llt(winv);
  double ln_det_winv = 0.0;
  for (int i = 0; i < D; ++i) ln_det_winv += 2.0 * std::log(llt.matrixL()(i, i));
  double sum_lgamma = 0.0;
  for (int d = 1; d <= D; ++d) sum_lgamma += std::lgamma(0.5 * (nu + 1.0 - d));
  return 0.5 * nu * ln_det_winv - 0.5 * nu * D * std::log(2.0) -
         0.25 * D * (D - 1) * std::log(M_PI) - sum_lgamma;
}

}  // namespace detail

/// Fits the truncated stick-breaking DP-GMM by variational inference: iterate
/// responsibilities and variational parameter updates until the ELBO change
/// drops below tol; best of n_init k-means-seeded restarts. Weight pruning
/// under the stick-breaking prior is slow on unimodal data, so the iteration
/// cap is generous; per-iteration cost is tiny at these sizes.
inline BgmmModel fit_bgmm(const Eigen::MatrixXd& latent_means, const BgmmFitConfig& config) {
  config.validate();
  const Eigen::Index n = latent_means.rows();
  const int D = static_cast<int>(latent_means.cols());
  const int K = config.k_max;
  if (n < 10 * static_cast<Eigen::Index>(D))
    throw InputError("fit_bgmm: need at least 10 rows per latent dimension, got " +
                     std::to_string(n));
  if (!latent_means.allFinite()) throw InputError("fit_bgmm: non-finite latent input");

  const double gamma0 =
      config.weight_concentration > 0.0 ? config.weight_concentration : 1.0 / K;
  const Eigen::RowVectorXd m0 = latent_means.colwise().mean();
  const double beta0 = 1.0;
  const double nu0 = static_cast<double>(D);
  Eigen::MatrixXd centered0 = latent_means.rowwise() - m0;
  Eigen::MatrixXd cov0 =
      centered0.transpose() * centered0 / static_cast<double>(n) +
      config.reg_covar * Eigen::MatrixXd::Identity(D, D);
  const Eigen::MatrixXd w0inv = cov0 * nu0;  // prior scale: E[Lambda] ~ cov0^{-1}

  BgmmModel best;
  for (int init = 0; init < config.n_init; ++init) {
    Rng rng(config.seed + 7919ull * static_cast<std::uint64_t>(init));

    // k-means++ seeding plus a few Lloyd iterations for initial assignments.
    std::vector<Eigen::RowVectorXd> centers;
    centers.push_back(latent_means.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))));
    while (static_cast<int>(centers.size()) < K) {
      Eigen::VectorXd d2(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& c : centers)
          best_d = std::min(best_d, (latent_means.row(i) - c).squaredNorm());
        d2[i] = best_d;
      }
      const double total = d2.sum();
      if (!(total > 0.0)) {
        centers.push_back(centers.back());
        continue;
      }
      double u = rng.uniform() * total;
      Eigen::Index pick = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
      centers.push_back(latent_means.row(pick));
    }
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (int it = 0; it < 10; ++it) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
          const double d = (latent_means.row(i) - centers[static_cast<std::size_t>(k)]).squaredNorm();
          if (d < best_d) {
            best_d = d;
            assign[static_cast<std::size_t>(i)] = k;
          }
        }
      }
      for (int k = 0; k < K; ++k) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(D);
        int count = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (assign[static_cast<std::size_t>(i)] == k) {
            sum += latent_means.row(i);
            ++count;
          }
        if (count > 0) centers[static_cast<std::size_t>(k)] = sum / count;
      }
    }
    Eigen::MatrixXd resp = Eigen::MatrixXd::Constant(n, K, 1e-10);
    for (Eigen::Index i = 0; i < n; ++i) resp(i, assign[static_cast<std::size_t>(i)]) = 1.0;
    resp.array().colwise() /= resp.rowwise().sum().array();

    detail::BgmmVariational q;
    q.a.resize(K);
    q.b.resize(K);
    q.beta.resize(K);
    q.nu.resize(K);
    q.m.resize(K, D);
    q.winv.assign(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(D, D));
    q.w.assign(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(D, D));
    q.ln_pi.resize(K);
    q.ln_det_lambda.resize(K);

    auto m_step = [&](const detail::BgmmStats& st) {
      double tail = 0.0;
      for (int k = K - 1; k >= 0; --k) {
        q.a[k] = 1.0 + st.nk[k];
        q.b[k] = gamma0 + tail;
        tail += st.nk[k];
      }
      for (int k = 0; k < K; ++k) {
        q.beta[k] = beta0 + st.nk[k];
        q.nu[k] = nu0 + st.nk[k];
        q.m.row(k) = (beta0 * m0 + st.nk[k] * st.xbar.row(k)) / q.beta[k];
        const Eigen::RowVectorXd diff = st.xbar.row(k) - m0;
        q.winv[static_cast<std::size_t>(k)] =
            w0inv + st.nk[k] * st.sk[static_cast<std::size_t>(k)] +
            (beta0 * st.nk[k] / (beta0 + st.nk[k])) * diff.transpose() * diff;
        q.w[static_cast<std::size_t>(k)] =
            q.winv[static_cast<std::size_t>(k)].llt().solve(Eigen::MatrixXd::Identity(D, D));
      }
      // Expected log mixture weights under stick-breaking.
      double acc = 0.0;
      for (int k = 0; k < K; ++k) {
        const double dig_sum = digamma(q.a[k] + q.b[k]);
        q.ln_pi[k] = digamma(q.a[k]) - dig_sum + acc;
        acc += digamma(q.b[k]) - dig_sum;
      }
      for (int k = 0; k < K; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(q.winv[static_cast<std::size_t>(k)]);
        double ln_det_winv = 0.0;
        for (int i = 0; i < D; ++i) ln_det_winv += 2.0 * std::log(llt.matrixL()(i, i));
        double dig = 0.0;
        for (int d = 1; d <= D; ++d) dig += digamma(0.5 * (q.nu[k] + 1.0 - d));
        q.ln_det_lambda[k] = dig + D * std::log(2.0) - ln_det_winv;
      }
    };

    auto e_step = [&]() {
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd ln_rho(K);
        for (int k = 0; k < K; ++k) {
          const Eigen::RowVectorXd diff = latent_means.row(i) - q.m.row(k);
          const double quad =
              (diff * q.w[static_cast<std::size_t>(k)] * diff.transpose())(0, 0);
          ln_rho[k] = q.ln_pi[k] + 0.5 * q.ln_det_lambda[k] - 0.5 * D * kLog2Pi -
                      0.5 * (D / q.beta[k] + q.nu[k] * quad);
        }
        const double lse = log_sum_exp(ln_rho);
        for (int k = 0; k < K; ++k) resp(i, k) = std::exp(ln_rho[k] - lse);
      }
    };

    auto elbo_value = [&](const detail::BgmmStats& st) {
      double lb = 0.0;
      // E[ln p(X | Z, mu, Lambda)]
      for (int k = 0; k < K; ++k) {
        const Eigen::RowVectorXd diff = st.xbar.row(k) - q.m.row(k);
        const double quad = (diff * q.w[static_cast<std::size_t>(k)] * diff.transpose())(0, 0);
        lb += 0.5 * st.nk[k] *
              (q.ln_det_lambda[k] - D / q.beta[k] -
               q.nu[k] * (st.sk[static_cast<std::size_t>(k)] * q.w[static_cast<std::size_t>(k)]).trace() -
               q.nu[k] * quad - D * kLog2Pi);
      }
      // E[ln p(Z | v)] - E[ln q(Z)]
      for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) {
          const double r = resp(i, k);
          if (r > 1e-300) lb += r * (q.ln_pi[k] - std::log(r));
        }
      // E[ln p(v)] - E[ln q(v)]
      for (int k = 0; k < K; ++k) {
        const double dig_sum = digamma(q.a[k] + q.b[k]);
        const double e_ln_v = digamma(q.a[k]) - dig_sum;
        const double e_ln_1mv = digamma(q.b[k]) - dig_sum;
        lb += std::log(gamma0) + (gamma0 - 1.0) * e_ln_1mv;
        lb -= (q.a[k] - 1.0) * e_ln_v + (q.b[k] - 1.0) * e_ln_1mv -
              (std::lgamma(q.a[k]) + std::lgamma(q.b[k]) - std::lgamma(q.a[k] + q.b[k]));
      }
      // E[ln p(mu, Lambda)] - E[ln q(mu, Lambda)]
      const double ln_b0 = detail::ln_wishart_b(w0inv, nu0, D);
      for (int k = 0; k < K; ++k) {
        const Eigen::RowVectorXd diff = q.m.row(k) - m0;
        const double quad = (diff * q.w[static_cast<std::size_t>(k)] * diff.transpose())(0, 0);
        lb += 0.5 * (D * std::log(beta0 / (2.0 * M_PI)) + q.ln_det_lambda[k] -
                     D * beta0 / q.beta[k] - beta0 * q.nu[k] * quad);
        lb += ln_b0 + 0.5 * (nu0 - D - 1.0) * q.ln_det_lambda[k] -
              0.5 * q.nu[k] * (w0inv * q.w[static_cast<std::size_t>(k)]).trace();
        // Entropy of q(mu_k, Lambda_k).
        const double ln_bk =
            detail::ln_wishart_b(q.winv[static_cast<std::size_t>(k)], q.nu[k], D);
        const double wishart_entropy =
            -ln_bk - 0.5 * (q.nu[k] - D - 1.0) * q.ln_det_lambda[k] + 0.5 * q.nu[k] * D;
        lb -= 0.5 * q.ln_det_lambda[k] + 0.5 * D * std::log(q.beta[k] / (2.0 * M_PI)) -
              0.5 * D - wishart_entropy;
      }
      return lb;
    };

    std::vector<double> trace;
    double prev = -std::numeric_limits<double>::infinity();
    detail::BgmmStats st = detail::compute_stats(latent_means, resp);
    m_step(st);
    for (int iter = 0; iter < config.max_iter; ++iter) {
      e_step();
      st = detail::compute_stats(latent_means, resp);
      const double lb = elbo_value(st);
      trace.push_back(lb);
      m_step(st);
      if (std::abs(lb - prev) < config.tol) break;
      prev = lb;
    }

    if (!trace.empty() && trace.back() > best.elbo) {
      BgmmModel model;
      model.k_max = K;
      model.elbo = trace.back();
      model.elbo_trace = trace;
      // Expected stick-breaking weights, renormalized over the truncation.
      model.weights.resize(K);
      double remaining = 1.0;
      for (int k = 0; k < K; ++k) {
        const double ev = q.a[k] / (q.a[k] + q.b[k]);
        model.weights[k] = ev * remaining;
        remaining *= 1.0 - ev;
      }
      model.weights /= model.weights.sum();
      model.means = q.m;
      model.covariances.resize(static_cast<std::size_t>(K));
      model.chol.resize(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd cov = q.winv[static_cast<std::size_t>(k)] / q.nu[k] +
                              config.reg_covar * Eigen::MatrixXd::Identity(D, D);
        model.covariances[static_cast<std::size_t>(k)] = cov;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success)
          throw NumericError("fit_bgmm: covariance is not positive definite");
        model.chol[static_cast<std::size_t>(k)] = llt.matrixL();
      }
      model.fitted = true;
      best = std::move(model);
    }
  }
  return best;
}

/// Draws n latent vectors: component ~ Categorical(pi), z ~ N(mu_k, Sigma_k)
/// via Cholesky, plus isotropic encoder-consistent jitter when enabled.
inline Eigen::MatrixXd bgmm_sample(const BgmmModel& model, std::size_t n, Rng& rng,
                                   bool with_jitter = true) {
  if (!model.fitted) throw NumericError("bgmm_sample: model is not fitted");
  const int D = model.dim();
  std::vector<double> weights(model.weights.data(), model.weights.data() + model.k_max);
  const double jitter_sd =
      with_jitter && model.jitter_var > 0.0 ? std::sqrt(model.jitter_var) : 0.0;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), D);
  Eigen::VectorXd eps(D);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.categorical(weights);
    for (int d = 0; d < D; ++d) eps[d] = rng.normal();
    Eigen::VectorXd zi = model.means.row(static_cast<Eigen::Index>(k)).transpose() +
                         model.chol[k] * eps;
    if (jitter_sd > 0.0)
      for (int d = 0; d < D; ++d) zi[d] += jitter_sd * rng.normal();
    z.row(static_cast<Eigen::Index>(i)) = zi.transpose();
  }
  return z;
}

inline double bgmm_log_density(const BgmmModel& model, const Eigen::VectorXd& z) {
  if (!model.fitted) throw NumericError("bgmm_log_density: model is not fitted");
  const int D = model.dim();
  Eigen::VectorXd terms(model.k_max);
  for (int k = 0; k < model.k_max; ++k) {
    const auto& L = model.chol[static_cast<std::size_t>(k)];
    Eigen::VectorXd diff = z - model.means.row(k).transpose();
    Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(diff);
    double ln_det = 0.0;
    for (int d = 0; d < D; ++d) ln_det += std::log(L(d, d));
    terms[k] = std::log(model.weights[k]) - 0.5 * D * kLog2Pi - ln_det - 0.5 * y.squaredNorm();
  }
  return log_sum_exp(terms);
}

inline int effective_components(const BgmmModel& model, double threshold = 0.01) {
  if (!model.fitted) throw NumericError("effective_components: model is not fitted");
  int count = 0;
  for (int k = 0; k < model.k_max; ++k)
    if (model.weights[k] > threshold) ++count;
  return count;
}

inline nlohmann::json bgmm_to_json(const BgmmModel& m) {
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& c : m.covariances) covs.push_back(matrix_to_json(c));
  return nlohmann::json{{"k_max", m.k_max},
                        {"weights", vector_to_json(m.weights)},
                        {"means", matrix_to_json(m.means)},
                        {"covariances", covs},
                        {"jitter_var", m.jitter_var}};
}

inline BgmmModel bgmm_from_json(const nlohmann::json& j) {
  BgmmModel m;
  m.k_max = j.at("k_max").get<int>();
  m.weights = vector_from_json(j.at("weights"));
  m.means = matrix_from_json(j.at("means"));
  for (const auto& jc : j.at("covariances")) {
    Eigen::MatrixXd cov = matrix_from_json(jc);
    m.covariances.push_back(cov);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw InputError("bgmm_from_json: covariance is not positive definite");
    m.chol.push_back(llt.matrixL());
  }
  m.jitter_var = j.at("jitter_var").get<double>();
  m.fitted = true;
  return m;
}

}  // namespace causalmix
