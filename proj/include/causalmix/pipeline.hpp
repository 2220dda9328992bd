#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "causalmix/bgmm.hpp"
#include "causalmix/causal_objective.hpp"
#include "causalmix/cvae.hpp"
#include "causalmix/expr.hpp"
#include "causalmix/preprocess.hpp"

namespace causalmix {

constexpr int kBundleFormatVersion = 1;

struct TrainConfig {
  int batch_size = 10;
  int max_epochs = 500;
  int patience = 10;
  double lr = 1e-3;
  double val_fraction = 0.2;
  double kl_weight = 1.0;
  PenaltyWeights penalties;
  std::uint64_t seed = 0;
  bool latent_jitter = true;
  std::vector<int> hidden{64};

  void validate() const {
    if (batch_size < 1 || max_epochs < 1 || patience < 1)
      throw InputError("train config: counts must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw InputError("train config: val_fraction must lie in (0, 1)");
    if (!(lr > 0.0)) throw InputError("train config: lr must be positive");
    if (!(kl_weight >= 0.0)) throw InputError("train config: kl_weight must be >= 0");
    penalties.validate();
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"batch_size", c.batch_size},
                        {"max_epochs", c.max_epochs},
                        {"patience", c.patience},
                        {"lr", c.lr},
                        {"val_fraction", c.val_fraction},
                        {"kl_weight", c.kl_weight},
                        {"seed", c.seed},
                        {"latent_jitter", c.latent_jitter},
                        {"hidden", c.hidden},
                        {"penalties",
                         {{"lambda_alpha", c.penalties.lambda_alpha},
                          {"lambda_tau", c.penalties.tau.lambda},
                          {"tau_mse", c.penalties.tau.mse},
                          {"tau_sl1", c.penalties.tau.sl1},
                          {"tau_var", c.penalties.tau.var},
                          {"lambda_kappa", c.penalties.kappa.lambda},
                          {"kappa_mse", c.penalties.kappa.mse},
                          {"kappa_sl1", c.penalties.kappa.sl1},
                          {"kappa_var", c.penalties.kappa.var}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("lr", c.lr);
  get("val_fraction", c.val_fraction);
  get("kl_weight", c.kl_weight);
  get("seed", c.seed);
  get("latent_jitter", c.latent_jitter);
  get("hidden", c.hidden);
  if (j.contains("penalties")) {
    const auto& p = j.at("penalties");
    auto getp = [&](const char* key, double& field) {
      if (p.contains(key)) field = p.at(key).get<double>();
    };
    getp("lambda_alpha", c.penalties.lambda_alpha);
    getp("lambda_tau", c.penalties.tau.lambda);
    getp("tau_mse", c.penalties.tau.mse);
    getp("tau_sl1", c.penalties.tau.sl1);
    getp("tau_var", c.penalties.tau.var);
    getp("lambda_kappa", c.penalties.kappa.lambda);
    getp("kappa_mse", c.penalties.kappa.mse);
    getp("kappa_sl1", c.penalties.kappa.sl1);
    getp("kappa_var", c.penalties.kappa.var);
  }
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open training config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("training config '" + path + "': " + e.what());
  }
  return train_config_from_json(j);
}

/// Empirical treated fraction; both classes must be present.
inline double fit_treatment(const Table& table) {
  const auto& t = table.col(table.schema->treatment);
  if (t.empty()) throw InputError("fit_treatment: empty table");
  const double sum = std::accumulate(t.begin(), t.end(), 0.0);
  const double p = sum / static_cast<double>(t.size());
  if (!(p > 0.0 && p < 1.0))
    throw InputError("fit_treatment: treatment column has a single class");
  return p;
}

struct EpochLog {
  int epoch = 0;
  LossComponents train;
  LossComponents val;
};

struct TrainedGenerator {
  Cvae model;
  BgmmModel bgmm;
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

namespace detail {

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - fraction)));
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end())};
}

inline Eigen::MatrixXd gather_columns(const EncodedMatrix& m, const std::vector<int>& cols,
                                      const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          m(static_cast<Eigen::Index>(rows[r]), cols[c]);
  return out;
}

inline std::vector<VariableSpec> covariate_specs(const DatasetSchema& schema) {
  std::vector<VariableSpec> specs;
  for (const auto& name : schema.covariates) {
    const auto& meta = schema.column(name);
    specs.push_back({meta.name, meta.kind, meta.num_classes});
  }
  return specs;
}

inline VariableSpec outcome_spec(const DatasetSchema& schema) {
  const auto& meta = schema.column(schema.outcome);
  return {meta.name, meta.kind, meta.num_classes};
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

/// Tracks the best validation loss and restores the best weights on stop.
struct EarlyStopper {
  int patience = 10;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;
  Cvae best_model;

  bool update(double val_loss, int epoch, const Cvae& model) {
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      best_model = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    return since_best >= patience;
  }
};

}  // namespace detail

/// One gradient step's in/out workspace for the covariate generator.
struct PreBatchData {
  Eigen::MatrixXd target_cols;  // encoded covariate columns
  Eigen::MatrixXd cond_obs;     // observed treatment column
  Eigen::VectorXd log_alpha_target;
};

/// Forward (and optionally backward) pass of the pre-treatment objective:
/// negative ELBO plus the overlap penalty from two decodes of the same z
/// under T=0 and T=1.
inline LossComponents pre_generator_batch(Cvae& model, const PreBatchData& batch,
                                          const Eigen::MatrixXd& noise, double kl_weight,
                                          const PenaltyWeights& weights, CvaeGrads* grads) {
  const Eigen::Index b = batch.target_cols.rows();
  const double inv_b = 1.0 / static_cast<double>(b);

  EncodeTrace etr;
  const PosteriorParams post = cvae_encode(model, batch.target_cols, batch.cond_obs, etr);
  const Eigen::MatrixXd z = reparameterize(post, noise);

  DecodeTrace dtr_obs, dtr_t0, dtr_t1;
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(b, 1);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(b, 1);
  const HeadOutputs out_obs = cvae_decode(model, z, batch.cond_obs, dtr_obs);
  const HeadOutputs out_t0 = cvae_decode(model, z, zeros, dtr_t0);
  const HeadOutputs out_t1 = cvae_decode(model, z, ones, dtr_t1);

  auto zero_head_grads = [&](const HeadOutputs& out) {
    std::vector<MatrixXd> g(out.head.size());
    for (std::size_t i = 0; i < out.head.size(); ++i)
      g[i] = MatrixXd::Zero(out.head[i].rows(), out.head[i].cols());
    return g;
  };
  std::vector<MatrixXd> hg_obs = zero_head_grads(out_obs);
  std::vector<MatrixXd> hg_t0 = zero_head_grads(out_t0);
  std::vector<MatrixXd> hg_t1 = zero_head_grads(out_t1);

  const double recon =
      reconstruction_loss(out_obs, batch.target_cols, nullptr, grads ? &hg_obs : nullptr) * inv_b;
  if (grads)
    for (auto& g : hg_obs) g *= inv_b;

  const Eigen::VectorXd ratio = log_density_ratio(batch.target_cols, out_t0, out_t1);
  Eigen::VectorXd dratio;
  const double l_alpha = overlap_penalty(ratio, batch.log_alpha_target, weights.lambda_alpha,
                                         grads ? &dratio : nullptr);
  if (grads)
    log_density_ratio_backward(batch.target_cols, out_t0, out_t1, dratio, hg_t0, hg_t1);

  MatrixXd kl_gmu, kl_glogvar;
  const double kl = kl_standard_gaussian(post.mu, post.logvar, kl_gmu, kl_glogvar) * inv_b;

  LossComponents comp;
  comp.vae = elbo_loss(recon, kl, kl_weight);
  comp.kl = kl;
  comp.l_alpha = l_alpha;
  if (!std::isfinite(comp.total())) throw NumericError("pre-generator loss is not finite");

  if (grads) {
    Eigen::MatrixXd dz = cvae_decode_backward(model, dtr_obs, hg_obs, *grads);
    dz += cvae_decode_backward(model, dtr_t0, hg_t0, *grads);
    dz += cvae_decode_backward(model, dtr_t1, hg_t1, *grads);
    const Eigen::MatrixXd sigma = (post.logvar.array() / 2.0).exp().matrix();
    const Eigen::MatrixXd dmu = kl_weight * inv_b * kl_gmu + dz;
    const Eigen::MatrixXd dlogvar =
        kl_weight * inv_b * kl_glogvar +
        (0.5 * dz.array() * noise.array() * sigma.array()).matrix();
    cvae_encode_backward(model, etr, dmu, dlogvar, *grads);
  }
  return comp;
}

struct PostBatchData {
  Eigen::MatrixXd target_cols;  // encoded outcome column
  Eigen::MatrixXd cond_obs;     // [expanded covariates, T]
  Eigen::MatrixXd cond_flip;    // [expanded covariates, 1-T]
  std::vector<int> arms;        // observed treatment per row
  Eigen::VectorXd tau_target;
  Eigen::VectorXd kappa_target;
  double outcome_scale = 1.0;   // raw outcome sd, 1 for binary outcomes
};

/// Negative ELBO on the observed arm plus treatment-effect and confounding
/// penalties from decodes under observed and flipped treatment conditioning.
inline LossComponents post_generator_batch(Cvae& model, const PostBatchData& batch,
                                           const Eigen::MatrixXd& noise, double kl_weight,
                                           const PenaltyWeights& weights, CvaeGrads* grads) {
  const Eigen::Index b = batch.target_cols.rows();
  const double inv_b = 1.0 / static_cast<double>(b);

  EncodeTrace etr;
  const PosteriorParams post = cvae_encode(model, batch.target_cols, batch.cond_obs, etr);
  const Eigen::MatrixXd z = reparameterize(post, noise);

  DecodeTrace dtr_obs, dtr_flip;
  const HeadOutputs out_obs = cvae_decode(model, z, batch.cond_obs, dtr_obs);
  const HeadOutputs out_flip = cvae_decode(model, z, batch.cond_flip, dtr_flip);

  auto zero_head_grads = [&](const HeadOutputs& out) {
    std::vector<MatrixXd> g(out.head.size());
    for (std::size_t i = 0; i < out.head.size(); ++i)
      g[i] = MatrixXd::Zero(out.head[i].rows(), out.head[i].cols());
    return g;
  };
  std::vector<MatrixXd> hg_obs = zero_head_grads(out_obs);
  std::vector<MatrixXd> hg_flip = zero_head_grads(out_flip);

  const double recon =
      reconstruction_loss(out_obs, batch.target_cols, &batch.arms, grads ? &hg_obs : nullptr) *
      inv_b;
  if (grads)
    for (auto& g : hg_obs) g *= inv_b;

  const Eigen::VectorXd tau = induced_tau(out_obs, 0, batch.outcome_scale);
  const Eigen::VectorXd delta_tau = tau - batch.tau_target;
  Eigen::VectorXd dtau;
  const CompositePenalty tau_pen =
      composite_penalty(delta_tau, weights.tau, grads ? &dtau : nullptr);
  if (grads) induced_tau_backward(out_obs, 0, batch.outcome_scale, dtau, hg_obs[0]);

  const Eigen::VectorXd kappa =
      induced_kappa(out_obs, out_flip, batch.arms, 0, batch.outcome_scale);
  const Eigen::VectorXd delta_kappa = kappa - batch.kappa_target;
  Eigen::VectorXd dkappa;
  const CompositePenalty kappa_pen =
      composite_penalty(delta_kappa, weights.kappa, grads ? &dkappa : nullptr);
  if (grads)
    induced_kappa_backward(out_obs, out_flip, batch.arms, 0, batch.outcome_scale, dkappa,
                           hg_obs[0], hg_flip[0]);

  MatrixXd kl_gmu, kl_glogvar;
  const double kl = kl_standard_gaussian(post.mu, post.logvar, kl_gmu, kl_glogvar) * inv_b;

  LossComponents comp;
  comp.vae = elbo_loss(recon, kl, kl_weight);
  comp.kl = kl;
  comp.l_tau_mean = tau_pen.mean_term;
  comp.l_tau_var = tau_pen.var_term;
  comp.l_kappa_mean = kappa_pen.mean_term;
  comp.l_kappa_var = kappa_pen.var_term;
  if (!std::isfinite(comp.total())) throw NumericError("post-generator loss is not finite");

  if (grads) {
    Eigen::MatrixXd dz = cvae_decode_backward(model, dtr_obs, hg_obs, *grads);
    dz += cvae_decode_backward(model, dtr_flip, hg_flip, *grads);
    const Eigen::MatrixXd sigma = (post.logvar.array() / 2.0).exp().matrix();
    const Eigen::MatrixXd dmu = kl_weight * inv_b * kl_gmu + dz;
    const Eigen::MatrixXd dlogvar =
        kl_weight * inv_b * kl_glogvar +
        (0.5 * dz.array() * noise.array() * sigma.array()).matrix();
    cvae_encode_backward(model, etr, dmu, dlogvar, *grads);
  }
  return comp;
}

namespace detail {

/// Shared epoch loop: seeded shuffling, Adam steps, fixed-noise validation,
/// early stopping with best-weight restore, and a post-hoc BGMM on latent
/// means of the training rows.
template <typename BatchFn, typename ValFn, typename LatentFn>
TrainedGenerator run_training(Cvae model, std::size_t n_train, const TrainConfig& config,
                              BatchFn&& run_batch, ValFn&& run_val, LatentFn&& train_latents) {
  CvaeGrads grads;
  grads.reset(model);
  std::vector<ParamBlock> blocks;
  collect_params(model, grads, blocks);
  AdamState adam;
  adam.reset(blocks);
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;

  Rng train_rng(config.seed + 1000003ull);
  detail::EarlyStopper stopper;
  stopper.patience = config.patience;

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainedGenerator result;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    train_rng.shuffle(order);
    LossComponents train_acc;
    double weight_acc = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      grads.reset(model);
      LossComponents comp;
      try {
        comp = run_batch(model, rows, train_rng, &grads);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                           ", batch starting at row " + std::to_string(start) + ")");
      }
      adam_step(blocks, adam, adam_cfg);
      const double w = static_cast<double>(rows.size());
      LossComponents weighted = comp;
      weighted.vae *= w;
      weighted.kl *= w;
      weighted.l_alpha *= w;
      weighted.l_tau_mean *= w;
      weighted.l_tau_var *= w;
      weighted.l_kappa_mean *= w;
      weighted.l_kappa_var *= w;
      train_acc += weighted;
      weight_acc += w;
    }
    train_acc /= weight_acc;

    const LossComponents val = run_val(model);
    result.log.push_back({epoch, train_acc, val});
    if (stopper.update(val.total(), epoch, model)) break;
  }
  model = stopper.best_model;
  result.best_epoch = stopper.best_epoch;

  // Latent means of the training set drive the generation-time prior.
  const auto [latent_mu, mean_posterior_var] = train_latents(model);
  BgmmFitConfig bgmm_cfg;
  bgmm_cfg.k_max = model.cfg.latent_dim;
  bgmm_cfg.seed = config.seed + 2000003ull;
  result.bgmm = fit_bgmm(latent_mu, bgmm_cfg);
  result.bgmm.jitter_var = mean_posterior_var;
  result.model = std::move(model);
  return result;
}

}  // namespace detail

/// Trains the covariate generator X | T with the overlap penalty.
/// Expects the full (unsplit) raw table; targets are evaluated on raw rows.
inline TrainedGenerator train_pre_generator(const Table& table, const TrainConfig& config,
                                            const ControlSpec& control,
                                            const PreprocessState& preprocess) {
  config.validate();
  control.validate(*table.schema);
  const auto& schema = *table.schema;
  const EncodedMatrix encoded = transform(table, preprocess);
  const ControlTargets targets = evaluate_targets(control, table);

  auto [train_rows, val_rows] =
      detail::split_indices(table.n_rows, config.val_fraction, config.seed);
  const std::vector<int> cov_cols = schema.covariate_indices();
  const int t_col = schema.column_index(schema.treatment);

  auto make_batch = [&](const std::vector<std::size_t>& rows) {
    PreBatchData b;
    b.target_cols = detail::gather_columns(encoded, cov_cols, rows);
    b.cond_obs = detail::gather_columns(encoded, {t_col}, rows);
    b.log_alpha_target.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      b.log_alpha_target[static_cast<Eigen::Index>(i)] = targets.log_alpha[rows[i]];
    return b;
  };

  CvaeConfig cfg;
  cfg.targets = detail::covariate_specs(schema);
  cfg.cond_width = 1;
  cfg.hidden = config.hidden;
  cfg.kl_weight = config.kl_weight;
  Rng init_rng(config.seed + 11ull);
  Cvae model = make_cvae(cfg, init_rng);

  const PreBatchData val_batch = make_batch(val_rows);
  Rng val_noise_rng(config.seed + 3000017ull);
  const Eigen::MatrixXd val_noise = detail::normal_matrix(
      static_cast<Eigen::Index>(val_rows.size()), model.cfg.latent_dim, val_noise_rng);

  const PreBatchData train_full = make_batch(train_rows);

  return detail::run_training(
      std::move(model), train_rows.size(), config,
      [&](Cvae& m, const std::vector<std::size_t>& batch_rows, Rng& rng, CvaeGrads* grads) {
        std::vector<std::size_t> abs_rows(batch_rows.size());
        for (std::size_t i = 0; i < batch_rows.size(); ++i) abs_rows[i] = train_rows[batch_rows[i]];
        const PreBatchData batch = make_batch(abs_rows);
        const Eigen::MatrixXd noise = detail::normal_matrix(
            static_cast<Eigen::Index>(abs_rows.size()), m.cfg.latent_dim, rng);
        return pre_generator_batch(m, batch, noise, config.kl_weight, config.penalties, grads);
      },
      [&](Cvae& m) {
        return pre_generator_batch(m, val_batch, val_noise, config.kl_weight, config.penalties,
                                   nullptr);
      },
      [&](Cvae& m) {
        EncodeTrace etr;
        const PosteriorParams post =
            cvae_encode(m, train_full.target_cols, train_full.cond_obs, etr);
        const double mean_var = post.logvar.array().exp().mean();
        return std::make_pair(post.mu, mean_var);
      });
}

/// Trains the potential-outcomes generator (Y(0), Y(1)) | X, T with the
/// treatment-effect and confounding penalties.
inline TrainedGenerator train_post_generator(const Table& table, const TrainConfig& config,
                                             const ControlSpec& control,
                                             const PreprocessState& preprocess) {
  config.validate();
  control.validate(*table.schema);
  const auto& schema = *table.schema;
  const VariableSpec outcome = detail::outcome_spec(schema);
  if (outcome.kind == ColumnKind::categorical && outcome.num_classes > 2)
    throw InputError("potential-outcomes mode forbids a multiclass outcome");

  const EncodedMatrix encoded = transform(table, preprocess);
  const ControlTargets targets = evaluate_targets(control, table);

  auto [train_rows, val_rows] =
      detail::split_indices(table.n_rows, config.val_fraction, config.seed);
  const std::vector<int> cov_cols = schema.covariate_indices();
  const int t_col = schema.column_index(schema.treatment);
  const int y_col = schema.column_index(schema.outcome);
  const std::vector<VariableSpec> cov_specs = detail::covariate_specs(schema);
  const double outcome_scale =
      is_numeric_scaled(outcome.kind) ? preprocess.scaling(schema.outcome).std : 1.0;

  auto make_batch = [&](const std::vector<std::size_t>& rows) {
    PostBatchData b;
    b.target_cols = detail::gather_columns(encoded, {y_col}, rows);
    const Eigen::MatrixXd cov_cols_m = detail::gather_columns(encoded, cov_cols, rows);
    const Eigen::MatrixXd cov_expanded = expand_inputs(cov_specs, cov_cols_m);
    const Eigen::MatrixXd t_m = detail::gather_columns(encoded, {t_col}, rows);
    b.cond_obs = detail::hconcat(cov_expanded, t_m);
    b.cond_flip = detail::hconcat(cov_expanded, (1.0 - t_m.array()).matrix());
    b.arms.resize(rows.size());
    b.tau_target.resize(static_cast<Eigen::Index>(rows.size()));
    b.kappa_target.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      b.arms[i] = static_cast<int>(t_m(static_cast<Eigen::Index>(i), 0));
      b.tau_target[static_cast<Eigen::Index>(i)] = targets.tau[rows[i]];
      b.kappa_target[static_cast<Eigen::Index>(i)] = targets.kappa[rows[i]];
    }
    b.outcome_scale = outcome_scale;
    return b;
  };

  CvaeConfig cfg;
  cfg.targets = {outcome};
  cfg.cond_width = [&] {
    int w = 1;  // treatment
    for (const auto& s : cov_specs) w += input_width(s);
    return w;
  }();
  cfg.hidden = config.hidden;
  cfg.kl_weight = config.kl_weight;
  cfg.po_mode = true;
  Rng init_rng(config.seed + 12ull);
  Cvae model = make_cvae(cfg, init_rng);

  const PostBatchData val_batch = make_batch(val_rows);
  Rng val_noise_rng(config.seed + 3000083ull);
  const Eigen::MatrixXd val_noise = detail::normal_matrix(
      static_cast<Eigen::Index>(val_rows.size()), model.cfg.latent_dim, val_noise_rng);

  const PostBatchData train_full = make_batch(train_rows);

  return detail::run_training(
      std::move(model), train_rows.size(), config,
      [&](Cvae& m, const std::vector<std::size_t>& batch_rows, Rng& rng, CvaeGrads* grads) {
        std::vector<std::size_t> abs_rows(batch_rows.size());
        for (std::size_t i = 0; i < batch_rows.size(); ++i) abs_rows[i] = train_rows[batch_rows[i]];
        const PostBatchData batch = make_batch(abs_rows);
        const Eigen::MatrixXd noise = detail::normal_matrix(
            static_cast<Eigen::Index>(abs_rows.size()), m.cfg.latent_dim, rng);
        return post_generator_batch(m, batch, noise, config.kl_weight, config.penalties, grads);
      },
      [&](Cvae& m) {
        return post_generator_batch(m, val_batch, val_noise, config.kl_weight, config.penalties,
                                    nullptr);
      },
      [&](Cvae& m) {
        EncodeTrace etr;
        const PosteriorParams post =
            cvae_encode(m, train_full.target_cols, train_full.cond_obs, etr);
        const double mean_var = post.logvar.array().exp().mean();
        return std::make_pair(post.mu, mean_var);
      });
}

// ---------------------------------------------------------------------------
// Bundle and generation
// ---------------------------------------------------------------------------

struct GeneratorBundle {
  double treatment_rate = 0.0;
  Cvae pre;
  Cvae post;
  BgmmModel pre_bgmm;
  BgmmModel post_bgmm;
  PreprocessState preprocess;
  ControlSpec control;
  TrainConfig train_config;
  std::shared_ptr<const DatasetSchema> schema;
};

enum class LatentPrior { bgmm, standard_normal };

struct SyntheticTable {
  Table table;
  std::vector<double> y0;  // raw-scale potential outcomes
  std::vector<double> y1;
  std::vector<double> tau_truth;
  std::vector<double> kappa_truth;
  std::vector<double> log_alpha_truth;
};

namespace detail {

inline double inverse_transform_value(const ColumnMeta& meta, const ColumnScaling& s, double v) {
  switch (meta.kind) {
    case ColumnKind::continuous:
      v = v * s.std + s.mean;
      return std::min(std::max(v, s.low), s.high);
    case ColumnKind::integer:
      v = std::round(v * s.std + s.mean);
      return std::min(std::max(v, std::ceil(s.low)), std::floor(s.high));
    case ColumnKind::binary:
      return (v == 0.0 || v == 1.0) ? v : (v >= 0.5 ? 1.0 : 0.0);
    case ColumnKind::categorical:
      return v;
  }
  return v;
}

}  // namespace detail

/// Sequential sampling: T' ~ Bernoulli(rate), X' | T' from the covariate
/// generator, (Y'(0), Y'(1)) | X', T' from the outcome generator, composed
/// as Y' = T'Y'(1) + (1-T')Y'(0), then mapped back to raw scale. Ground-truth
/// columns are the control functions evaluated on the generated raw rows.
inline SyntheticTable generate(const GeneratorBundle& bundle, std::size_t n, std::uint64_t seed,
                               LatentPrior prior = LatentPrior::bgmm) {
  if (!bundle.pre_bgmm.fitted || !bundle.post_bgmm.fitted)
    throw InputError("generate: bundle is not fully fitted");
  const auto& schema = *bundle.schema;
  Rng rng(seed);

  Eigen::MatrixXd t_col(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i)
    t_col(static_cast<Eigen::Index>(i), 0) = rng.bernoulli(bundle.treatment_rate) ? 1.0 : 0.0;

  auto draw_latents = [&](const BgmmModel& bgmm, int latent_dim) {
    if (prior == LatentPrior::bgmm)
      return bgmm_sample(bgmm, n, rng, bundle.train_config.latent_jitter);
    return detail::normal_matrix(static_cast<Eigen::Index>(n), latent_dim, rng);
  };

  // X' | T'.
  const Eigen::MatrixXd z_x = draw_latents(bundle.pre_bgmm, bundle.pre.cfg.latent_dim);
  DecodeTrace dtr_x;
  const HeadOutputs out_x = cvae_decode(bundle.pre, z_x, t_col, dtr_x);
  const Eigen::MatrixXd x_cols = sample_heads(out_x, 0, rng);

  // (Y'(0), Y'(1)) | X', T'.
  const Eigen::MatrixXd z_y = draw_latents(bundle.post_bgmm, bundle.post.cfg.latent_dim);
  const std::vector<VariableSpec> cov_specs = detail::covariate_specs(schema);
  const Eigen::MatrixXd cond_post = detail::hconcat(expand_inputs(cov_specs, x_cols), t_col);
  DecodeTrace dtr_y;
  const HeadOutputs out_y = cvae_decode(bundle.post, z_y, cond_post, dtr_y);
  const Eigen::MatrixXd y0_cols = sample_heads(out_y, 0, rng);
  const Eigen::MatrixXd y1_cols = sample_heads(out_y, 1, rng);

  // Assemble the full encoded matrix in schema column order.
  EncodedMatrix encoded = EncodedMatrix::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(schema.columns.size()));
  const std::vector<int> cov_cols = schema.covariate_indices();
  for (std::size_t c = 0; c < cov_cols.size(); ++c)
    encoded.col(cov_cols[c]) = x_cols.col(static_cast<Eigen::Index>(c));
  encoded.col(schema.column_index(schema.treatment)) = t_col;
  const int y_col = schema.column_index(schema.outcome);
  encoded.col(y_col) =
      (t_col.array() * y1_cols.col(0).array() + (1.0 - t_col.array()) * y0_cols.col(0).array())
          .matrix();

  SyntheticTable synth;
  synth.table = inverse_transform(encoded, bundle.preprocess);

  const auto& y_meta = schema.columns[static_cast<std::size_t>(y_col)];
  const auto& y_scaling = bundle.preprocess.scalings[static_cast<std::size_t>(y_col)];
  synth.y0.resize(n);
  synth.y1.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    synth.y0[i] = detail::inverse_transform_value(y_meta, y_scaling,
                                                  y0_cols(static_cast<Eigen::Index>(i), 0));
    synth.y1[i] = detail::inverse_transform_value(y_meta, y_scaling,
                                                  y1_cols(static_cast<Eigen::Index>(i), 0));
  }
  // Keep the compositional identity exact on the raw scale as well.
  const auto& t_raw = synth.table.col(schema.treatment);
  auto& y_raw = synth.table.values[static_cast<std::size_t>(y_col)];
  for (std::size_t i = 0; i < n; ++i)
    y_raw[i] = t_raw[i] == 1.0 ? synth.y1[i] : synth.y0[i];

  if (n > 0) {
    const ControlTargets truths = evaluate_targets(bundle.control, synth.table);
    synth.tau_truth = truths.tau;
    synth.kappa_truth = truths.kappa;
    synth.log_alpha_truth = truths.log_alpha;
  }
  return synth;
}

/// R independent generate calls with seeds base_seed .. base_seed+R-1.
inline std::vector<SyntheticTable> replicate(const GeneratorBundle& bundle, std::size_t r,
                                             std::size_t n, std::uint64_t base_seed,
                                             LatentPrior prior = LatentPrior::bgmm) {
  std::vector<SyntheticTable> out;
  out.reserve(r);
  for (std::size_t i = 0; i < r; ++i)
    out.push_back(generate(bundle, n, base_seed + i, prior));
  return out;
}

/// Decoder-level induced quantities on an existing raw table, for the causal
/// evaluation: latent is the posterior mean (no sampling), tau/kappa come
/// from observed-and-flipped decodes, and delta is the appendix-convention
/// log-density ratio negated to the diagnostic sign
/// (log p(X|T'=0) - log p(X|T'=1)).
struct InducedQuantities {
  Eigen::VectorXd tau_theta;
  Eigen::VectorXd kappa_theta;
  Eigen::VectorXd delta_theta;
};

inline InducedQuantities induced_on_table(const GeneratorBundle& bundle, const Table& table) {
  const auto& schema = *bundle.schema;
  const EncodedMatrix encoded = transform(table, bundle.preprocess);
  const std::vector<int> cov_cols = schema.covariate_indices();
  const int t_col = schema.column_index(schema.treatment);
  const int y_col = schema.column_index(schema.outcome);

  std::vector<std::size_t> all_rows(table.n_rows);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  const Eigen::MatrixXd x_cols = detail::gather_columns(encoded, cov_cols, all_rows);
  const Eigen::MatrixXd t_m = detail::gather_columns(encoded, {t_col}, all_rows);
  const Eigen::MatrixXd y_m = detail::gather_columns(encoded, {y_col}, all_rows);

  InducedQuantities out;

  // Outcome generator: tau and kappa at the posterior mean latent.
  {
    const std::vector<VariableSpec> cov_specs = detail::covariate_specs(schema);
    const Eigen::MatrixXd cov_expanded = expand_inputs(cov_specs, x_cols);
    const Eigen::MatrixXd cond_obs = detail::hconcat(cov_expanded, t_m);
    const Eigen::MatrixXd cond_flip =
        detail::hconcat(cov_expanded, (1.0 - t_m.array()).matrix());
    EncodeTrace etr;
    const PosteriorParams post = cvae_encode(bundle.post, y_m, cond_obs, etr);
    DecodeTrace d_obs, d_flip;
    const HeadOutputs out_obs = cvae_decode(bundle.post, post.mu, cond_obs, d_obs);
    const HeadOutputs out_flip = cvae_decode(bundle.post, post.mu, cond_flip, d_flip);
    std::vector<int> arms(table.n_rows);
    for (std::size_t i = 0; i < table.n_rows; ++i)
      arms[i] = static_cast<int>(t_m(static_cast<Eigen::Index>(i), 0));
    const auto& y_meta = schema.columns[static_cast<std::size_t>(y_col)];
    const double scale =
        is_numeric_scaled(y_meta.kind) ? bundle.preprocess.scaling(schema.outcome).std : 1.0;
    out.tau_theta = induced_tau(out_obs, 0, scale);
    out.kappa_theta = induced_kappa(out_obs, out_flip, arms, 0, scale);
  }

  // Covariate generator: decoder log-density ratio at the posterior mean.
  {
    EncodeTrace etr;
    const PosteriorParams post = cvae_encode(bundle.pre, x_cols, t_m, etr);
    DecodeTrace d0, d1;
    const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(t_m.rows(), 1);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(t_m.rows(), 1);
    const HeadOutputs out_t0 = cvae_decode(bundle.pre, post.mu, zeros, d0);
    const HeadOutputs out_t1 = cvae_decode(bundle.pre, post.mu, ones, d1);
    out.delta_theta = -log_density_ratio(x_cols, out_t0, out_t1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundle serialization
// ---------------------------------------------------------------------------

inline nlohmann::json preprocess_to_json(const PreprocessState& p) {
  nlohmann::json scalings = nlohmann::json::array();
  for (const auto& s : p.scalings)
    scalings.push_back({{"mean", s.mean},
                        {"std", s.std},
                        {"low", s.low},
                        {"high", s.high},
                        {"scaled", s.scaled}});
  return nlohmann::json{{"scalings", scalings}};
}

inline PreprocessState preprocess_from_json(const nlohmann::json& j,
                                            std::shared_ptr<const DatasetSchema> schema) {
  PreprocessState p;
  p.schema = std::move(schema);
  for (const auto& js : j.at("scalings")) {
    ColumnScaling s;
    s.mean = js.at("mean").get<double>();
    s.std = js.at("std").get<double>();
    s.low = js.at("low").get<double>();
    s.high = js.at("high").get<double>();
    s.scaled = js.at("scaled").get<bool>();
    p.scalings.push_back(s);
  }
  if (p.scalings.size() != p.schema->columns.size())
    throw InputError("preprocess state does not match schema column count");
  return p;
}

inline nlohmann::json bundle_to_json(const GeneratorBundle& b) {
  return nlohmann::json{{"format_version", kBundleFormatVersion},
                        {"schema", schema_to_json(*b.schema)},
                        {"schema_hash", schema_hash(*b.schema)},
                        {"preprocess", preprocess_to_json(b.preprocess)},
                        {"control", control_spec_to_json(b.control)},
                        {"treatment_rate", b.treatment_rate},
                        {"train_config", train_config_to_json(b.train_config)},
                        {"pre", {{"cvae", cvae_to_json(b.pre)}, {"bgmm", bgmm_to_json(b.pre_bgmm)}}},
                        {"post", {{"cvae", cvae_to_json(b.post)}, {"bgmm", bgmm_to_json(b.post_bgmm)}}}};
}

inline void save_bundle(const GeneratorBundle& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << bundle_to_json(b).dump(1) << '\n';
  if (!out) throw InputError("failed writing bundle '" + path + "'");
}

inline GeneratorBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open bundle '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bundle '" + path + "' is corrupt: " + e.what());
  }
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kBundleFormatVersion)
    throw InputError("bundle '" + path + "': unsupported format version");
  GeneratorBundle b;
  b.schema = std::make_shared<DatasetSchema>(schema_from_json(j.at("schema")));
  if (j.at("schema_hash").get<std::string>() != schema_hash(*b.schema))
    throw InputError("bundle '" + path + "': schema hash mismatch");
  b.preprocess = preprocess_from_json(j.at("preprocess"), b.schema);
  b.control = control_spec_from_json(j.at("control"));
  b.treatment_rate = j.at("treatment_rate").get<double>();
  if (!(b.treatment_rate > 0.0 && b.treatment_rate < 1.0))
    throw InputError("bundle '" + path + "': treatment rate out of range");
  b.train_config = train_config_from_json(j.at("train_config"));
  b.pre = cvae_from_json(j.at("pre").at("cvae"));
  b.pre_bgmm = bgmm_from_json(j.at("pre").at("bgmm"));
  b.post = cvae_from_json(j.at("post").at("cvae"));
  b.post_bgmm = bgmm_from_json(j.at("post").at("bgmm"));
  return b;
}

struct FitResult {
  GeneratorBundle bundle;
  std::vector<EpochLog> pre_log;
  std::vector<EpochLog> post_log;
  int pre_best_epoch = 0;
  int post_best_epoch = 0;
};

/// End-to-end fit: treatment rate, both generators, both priors.
inline FitResult fit_bundle(const Table& table, const TrainConfig& config,
                            const ControlSpec& control) {
  FitResult result;
  GeneratorBundle& b = result.bundle;
  b.schema = table.schema;
  b.treatment_rate = fit_treatment(table);
  b.preprocess = fit_preprocess(table);
  b.control = control;
  b.train_config = config;
  TrainedGenerator pre = train_pre_generator(table, config, control, b.preprocess);
  TrainedGenerator post = train_post_generator(table, config, control, b.preprocess);
  b.pre = std::move(pre.model);
  b.pre_bgmm = std::move(pre.bgmm);
  b.post = std::move(post.model);
  b.post_bgmm = std::move(post.bgmm);
  result.pre_log = std::move(pre.log);
  result.post_log = std::move(post.log);
  result.pre_best_epoch = pre.best_epoch;
  result.post_best_epoch = post.best_epoch;
  return result;
}

// Synthetic table CSV: schema columns plus potential-outcome and ground-truth
// extras understood by the evaluator.
inline void write_synthetic_csv(const SyntheticTable& synth, const std::string& path) {
  const std::string outcome = synth.table.schema->outcome;
  write_csv(synth.table, path,
            {{outcome + "__po0", synth.y0},
             {outcome + "__po1", synth.y1},
             {"tau__truth", synth.tau_truth},
             {"kappa__truth", synth.kappa_truth},
             {"log_alpha__truth", synth.log_alpha_truth}});
}

}  // namespace causalmix
