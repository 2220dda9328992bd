#pragma once

#include <string>
#include <vector>

#include "causalmix/json_util.hpp"
#include "causalmix/losses.hpp"
#include "causalmix/nn.hpp"
#include "causalmix/schema.hpp"

namespace causalmix {

/// One modeled variable in encoded (model) space.
struct VariableSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  int num_classes = 0;
};

/// Width the variable occupies as a network input (one-hot for categorical).
inline int input_width(const VariableSpec& v) {
  return v.kind == ColumnKind::categorical ? v.num_classes : 1;
}

/// Head parameter count per potential-outcome arm: (mu, logvar) for
/// continuous, one logit for binary, K logits for categorical.
inline int head_param_width(const VariableSpec& v) {
  switch (v.kind) {
    case ColumnKind::continuous:
    case ColumnKind::integer: return 2;
    case ColumnKind::binary: return 1;
    case ColumnKind::categorical: return v.num_classes;
  }
  return 0;
}

struct CvaeConfig {
  std::vector<VariableSpec> targets;
  int cond_width = 0;
  int latent_dim = 0;  // 0 -> number of target variables
  std::vector<int> hidden{64};
  double kl_weight = 1.0;
  double logvar_min = -7.0;
  double logvar_max = 7.0;
  bool po_mode = false;

  int arms() const { return po_mode ? 2 : 1; }

  int target_input_width() const {
    int w = 0;
    for (const auto& t : targets) w += input_width(t);
    return w;
  }

  void validate() const {
    if (targets.empty()) throw InputError("CVAE config: no target variables");
    if (hidden.empty()) throw InputError("CVAE config: hidden widths must be nonempty");
    if (latent_dim < 0) throw InputError("CVAE config: latent_dim must be >= 1");
    if (!(logvar_min < logvar_max)) throw InputError("CVAE config: bad logvar clamp range");
    if (po_mode)
      for (const auto& t : targets)
        if (t.kind == ColumnKind::categorical && t.num_classes > 2)
          throw InputError("potential-outcomes mode forbids categorical targets with more than 2 classes");
  }
};

/// Expands model-space scalar columns (batch x n_vars) into network inputs
/// (batch x target_input_width): categorical indices become one-hot blocks.
inline MatrixXd expand_inputs(const std::vector<VariableSpec>& vars, const MatrixXd& columns) {
  if (columns.cols() != static_cast<Eigen::Index>(vars.size()))
    throw NumericError("expand_inputs: column count does not match variable specs");
  int width = 0;
  for (const auto& v : vars) width += input_width(v);
  MatrixXd out = MatrixXd::Zero(columns.rows(), width);
  int offset = 0;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& v = vars[i];
    if (v.kind == ColumnKind::categorical) {
      for (Eigen::Index r = 0; r < columns.rows(); ++r) {
        const int k = static_cast<int>(columns(r, static_cast<Eigen::Index>(i)));
        if (k < 0 || k >= v.num_classes)
          throw NumericError("expand_inputs: categorical index out of range for '" + v.name + "'");
        out(r, offset + k) = 1.0;
      }
      offset += v.num_classes;
    } else {
      out.col(offset) = columns.col(static_cast<Eigen::Index>(i));
      ++offset;
    }
  }
  return out;
}

struct PosteriorParams {
  MatrixXd mu;      // batch x latent
  MatrixXd logvar;  // batch x latent, clamped
};

/// Per-variable decoder outputs, batch x (arms * head_param_width).
/// Continuous log-variances are clamped to the config range.
struct HeadOutputs {
  const CvaeConfig* cfg = nullptr;
  std::vector<MatrixXd> head;

  Eigen::Index batch() const { return head.empty() ? 0 : head[0].rows(); }

  int param_offset(std::size_t var, int arm) const {
    return arm * head_param_width(cfg->targets[var]);
  }
  double continuous_mu(std::size_t var, Eigen::Index row, int arm = 0) const {
    return head[var](row, param_offset(var, arm));
  }
  double continuous_logvar(std::size_t var, Eigen::Index row, int arm = 0) const {
    return head[var](row, param_offset(var, arm) + 1);
  }
  double logit(std::size_t var, Eigen::Index row, int arm = 0) const {
    return head[var](row, param_offset(var, arm));
  }
  Eigen::VectorXd logits(std::size_t var, Eigen::Index row, int arm = 0) const {
    const int k = cfg->targets[var].num_classes;
    return head[var].row(row).segment(param_offset(var, arm), k).transpose();
  }
  /// Conditional expectation of the variable: mu for continuous, success
  /// probability for binary. Categorical has no scalar mean.
  double mean(std::size_t var, Eigen::Index row, int arm = 0) const {
    const auto& v = cfg->targets[var];
    if (v.kind == ColumnKind::binary) return sigmoid(logit(var, row, arm));
    if (v.kind == ColumnKind::categorical)
      throw NumericError("head mean undefined for multiclass variable '" + v.name + "'");
    return continuous_mu(var, row, arm);
  }
};

struct EncodeTrace {
  MlpTrace trunk;
  DenseCache mu_cache, logvar_cache;
  MatrixXd raw_logvar;  // pre-clamp, for the backward mask
};

struct DecodeTrace {
  MlpTrace trunk;
  std::vector<DenseCache> head_caches;
  std::vector<MatrixXd> raw_head;  // pre-clamp
};

struct Cvae {
  CvaeConfig cfg;
  Mlp encoder;
  DenseLayer enc_mu, enc_logvar;
  Mlp decoder;
  std::vector<DenseLayer> heads;
};

struct CvaeGrads {
  MlpGrads encoder;
  DenseGrads enc_mu, enc_logvar;
  MlpGrads decoder;
  std::vector<DenseGrads> heads;

  void reset(const Cvae& model) {
    encoder.reset(model.encoder);
    enc_mu.reset(model.enc_mu);
    enc_logvar.reset(model.enc_logvar);
    decoder.reset(model.decoder);
    heads.resize(model.heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) heads[i].reset(model.heads[i]);
  }
};

inline Cvae make_cvae(CvaeConfig cfg, Rng& rng) {
  if (cfg.latent_dim == 0) cfg.latent_dim = static_cast<int>(cfg.targets.size());
  cfg.validate();
  Cvae model;
  model.cfg = cfg;
  const int enc_in = cfg.target_input_width() + cfg.cond_width;
  model.encoder = make_mlp(enc_in, cfg.hidden, rng);
  model.enc_mu = make_dense(cfg.hidden.back(), cfg.latent_dim, rng);
  model.enc_logvar = make_dense(cfg.hidden.back(), cfg.latent_dim, rng);
  model.decoder = make_mlp(cfg.latent_dim + cfg.cond_width, cfg.hidden, rng);
  for (const auto& t : cfg.targets)
    model.heads.push_back(
        make_dense(cfg.hidden.back(), cfg.arms() * head_param_width(t), rng));
  return model;
}

inline void collect_params(Cvae& model, CvaeGrads& grads, std::vector<ParamBlock>& out) {
  collect_params(model.encoder, grads.encoder, out);
  collect_params(model.enc_mu, grads.enc_mu, out);
  collect_params(model.enc_logvar, grads.enc_logvar, out);
  collect_params(model.decoder, grads.decoder, out);
  for (std::size_t i = 0; i < model.heads.size(); ++i)
    collect_params(model.heads[i], grads.heads[i], out);
}

namespace detail {

inline MatrixXd hconcat(const MatrixXd& a, const MatrixXd& b) {
  if (b.cols() == 0) return a;
  MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace detail

/// targets_cols: model-space scalar columns of the target variables.
/// cond: already-expanded conditioning block (may have zero columns).
inline PosteriorParams cvae_encode(const Cvae& model, const MatrixXd& target_cols,
                                   const MatrixXd& cond, EncodeTrace& trace) {
  if (cond.cols() > 0 && target_cols.rows() != cond.rows())
    throw NumericError("cvae_encode: batch size mismatch between targets and conditioning");
  const MatrixXd input =
      detail::hconcat(expand_inputs(model.cfg.targets, target_cols), cond);
  trace.trunk = mlp_forward(model.encoder, input);
  PosteriorParams post;
  post.mu = dense_forward(model.enc_mu, trace.trunk.output, trace.mu_cache);
  trace.raw_logvar = dense_forward(model.enc_logvar, trace.trunk.output, trace.logvar_cache);
  post.logvar = trace.raw_logvar.cwiseMax(model.cfg.logvar_min).cwiseMin(model.cfg.logvar_max);
  return post;
}

/// z = mu + exp(logvar/2) * noise.
inline MatrixXd reparameterize(const PosteriorParams& post, const MatrixXd& noise) {
  if (noise.rows() != post.mu.rows() || noise.cols() != post.mu.cols())
    throw NumericError("reparameterize: noise shape mismatch");
  return post.mu + ((post.logvar.array() / 2.0).exp() * noise.array()).matrix();
}

inline HeadOutputs cvae_decode(const Cvae& model, const MatrixXd& z, const MatrixXd& cond,
                               DecodeTrace& trace) {
  if (z.cols() != model.cfg.latent_dim)
    throw NumericError("cvae_decode: latent width mismatch");
  const MatrixXd input = detail::hconcat(z, cond);
  trace.trunk = mlp_forward(model.decoder, input);
  trace.head_caches.resize(model.heads.size());
  trace.raw_head.resize(model.heads.size());
  HeadOutputs out;
  out.cfg = &model.cfg;
  out.head.resize(model.heads.size());
  for (std::size_t i = 0; i < model.heads.size(); ++i) {
    trace.raw_head[i] = dense_forward(model.heads[i], trace.trunk.output, trace.head_caches[i]);
    MatrixXd clamped = trace.raw_head[i];
    const auto& v = model.cfg.targets[i];
    if (v.kind == ColumnKind::continuous || v.kind == ColumnKind::integer) {
      const int pw = head_param_width(v);
      for (int arm = 0; arm < model.cfg.arms(); ++arm) {
        const int col = arm * pw + 1;
        clamped.col(col) =
            clamped.col(col).cwiseMax(model.cfg.logvar_min).cwiseMin(model.cfg.logvar_max);
      }
    }
    out.head[i] = std::move(clamped);
  }
  return out;
}

/// Backpropagates head gradients (taken w.r.t. the clamped outputs) through
/// the decoder; returns the gradient w.r.t. z. Conditioning gradients are
/// discarded (conditioning is data, not parameters).
inline MatrixXd cvae_decode_backward(const Cvae& model, const DecodeTrace& trace,
                                     const std::vector<MatrixXd>& head_grads,
                                     CvaeGrads& grads) {
  MatrixXd trunk_grad = MatrixXd::Zero(trace.trunk.output.rows(), trace.trunk.output.cols());
  for (std::size_t i = 0; i < model.heads.size(); ++i) {
    MatrixXd g = head_grads[i];
    const auto& v = model.cfg.targets[i];
    if (v.kind == ColumnKind::continuous || v.kind == ColumnKind::integer) {
      const int pw = head_param_width(v);
      for (int arm = 0; arm < model.cfg.arms(); ++arm) {
        const int col = arm * pw + 1;
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double raw = trace.raw_head[i](r, col);
          if (raw < model.cfg.logvar_min || raw > model.cfg.logvar_max) g(r, col) = 0.0;
        }
      }
    }
    trunk_grad += dense_backward(model.heads[i], trace.head_caches[i], g, grads.heads[i]);
  }
  const MatrixXd input_grad = mlp_backward(model.decoder, trace.trunk, trunk_grad, grads.decoder);
  return input_grad.leftCols(model.cfg.latent_dim);
}

/// Backpropagates posterior-parameter gradients (w.r.t. clamped logvar)
/// through the encoder.
inline void cvae_encode_backward(const Cvae& model, const EncodeTrace& trace,
                                 const MatrixXd& grad_mu, const MatrixXd& grad_logvar,
                                 CvaeGrads& grads) {
  MatrixXd g_logvar = grad_logvar;
  for (Eigen::Index i = 0; i < g_logvar.size(); ++i) {
    const double raw = trace.raw_logvar(i);
    if (raw < model.cfg.logvar_min || raw > model.cfg.logvar_max) g_logvar(i) = 0.0;
  }
  MatrixXd trunk_grad = dense_backward(model.enc_mu, trace.mu_cache, grad_mu, grads.enc_mu);
  trunk_grad += dense_backward(model.enc_logvar, trace.logvar_cache, g_logvar, grads.enc_logvar);
  mlp_backward(model.encoder, trace.trunk, trunk_grad, grads.encoder);
}

/// Sum of per-variable NLLs over the batch. In po_mode only the observed
/// arm's parameters contribute; the other arm receives zero gradient.
/// head_grads, when supplied, must be zero-initialized to the head shapes.
inline double reconstruction_loss(const HeadOutputs& outputs, const MatrixXd& target_cols,
                                  const std::vector<int>* observed_arm,
                                  std::vector<MatrixXd>* head_grads) {
  const CvaeConfig& cfg = *outputs.cfg;
  if (cfg.po_mode && observed_arm == nullptr)
    throw NumericError("reconstruction_loss: observed arm required in potential-outcomes mode");
  const Eigen::Index n = outputs.batch();
  double loss = 0.0;
  for (std::size_t var = 0; var < cfg.targets.size(); ++var) {
    const auto& v = cfg.targets[var];
    const int pw = head_param_width(v);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int arm = cfg.po_mode ? (*observed_arm)[static_cast<std::size_t>(r)] : 0;
      const int off = arm * pw;
      const double x = target_cols(r, static_cast<Eigen::Index>(var));
      switch (v.kind) {
        case ColumnKind::continuous:
        case ColumnKind::integer: {
          const double mu = outputs.head[var](r, off);
          const double logvar = outputs.head[var](r, off + 1);
          const double diff = x - mu;
          const double inv_var = std::exp(-logvar);
          loss += 0.5 * (kLog2Pi + logvar + diff * diff * inv_var);
          if (head_grads) {
            (*head_grads)[var](r, off) += -diff * inv_var;
            (*head_grads)[var](r, off + 1) += 0.5 * (1.0 - diff * diff * inv_var);
          }
          break;
        }
        case ColumnKind::binary: {
          double g;
          loss += bernoulli_nll(x, outputs.head[var](r, off), g);
          if (head_grads) (*head_grads)[var](r, off) += g;
          break;
        }
        case ColumnKind::categorical: {
          Eigen::VectorXd logits =
              outputs.head[var].row(r).segment(off, v.num_classes).transpose();
          Eigen::VectorXd g;
          loss += categorical_nll(static_cast<int>(x), logits, g);
          if (head_grads)
            (*head_grads)[var].row(r).segment(off, v.num_classes) += g.transpose();
          break;
        }
      }
    }
  }
  return loss;
}

inline double elbo_loss(double recon, double kl, double kl_weight) {
  return recon + kl_weight * kl;
}

/// Draws model-space scalar columns from the head distributions of one arm.
inline MatrixXd sample_heads(const HeadOutputs& outputs, int arm, Rng& rng) {
  const CvaeConfig& cfg = *outputs.cfg;
  const Eigen::Index n = outputs.batch();
  MatrixXd cols(n, static_cast<Eigen::Index>(cfg.targets.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t var = 0; var < cfg.targets.size(); ++var) {
      const auto& v = cfg.targets[var];
      const int off = arm * head_param_width(v);
      double value = 0.0;
      switch (v.kind) {
        case ColumnKind::continuous:
        case ColumnKind::integer: {
          const double mu = outputs.head[var](r, off);
          const double sd = std::exp(0.5 * outputs.head[var](r, off + 1));
          value = mu + sd * rng.normal();
          break;
        }
        case ColumnKind::binary:
          value = rng.bernoulli(sigmoid(outputs.head[var](r, off))) ? 1.0 : 0.0;
          break;
        case ColumnKind::categorical: {
          Eigen::VectorXd logits =
              outputs.head[var].row(r).segment(off, v.num_classes).transpose();
          const double lse = log_sum_exp(logits);
          std::vector<double> probs(static_cast<std::size_t>(v.num_classes));
          for (int k = 0; k < v.num_classes; ++k)
            probs[static_cast<std::size_t>(k)] = std::exp(logits[k] - lse);
          value = static_cast<double>(rng.categorical(probs));
          break;
        }
      }
      cols(r, static_cast<Eigen::Index>(var)) = value;
    }
  }
  return cols;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json dense_to_json(const DenseLayer& l) {
  return nlohmann::json{{"W", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}};
}

inline DenseLayer dense_from_json(const nlohmann::json& j) {
  DenseLayer l;
  l.W = matrix_from_json(j.at("W"));
  l.b = vector_from_json(j.at("b"));
  return l;
}

inline nlohmann::json cvae_to_json(const Cvae& m) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : m.cfg.targets)
    targets.push_back({{"name", t.name}, {"kind", to_string(t.kind)}, {"num_classes", t.num_classes}});
  nlohmann::json enc_layers = nlohmann::json::array();
  for (const auto& l : m.encoder.layers) enc_layers.push_back(dense_to_json(l));
  nlohmann::json dec_layers = nlohmann::json::array();
  for (const auto& l : m.decoder.layers) dec_layers.push_back(dense_to_json(l));
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& l : m.heads) heads.push_back(dense_to_json(l));
  return nlohmann::json{
      {"config",
       {{"targets", targets},
        {"cond_width", m.cfg.cond_width},
        {"latent_dim", m.cfg.latent_dim},
        {"hidden", m.cfg.hidden},
        {"kl_weight", m.cfg.kl_weight},
        {"logvar_min", m.cfg.logvar_min},
        {"logvar_max", m.cfg.logvar_max},
        {"po_mode", m.cfg.po_mode}}},
      {"encoder", enc_layers},
      {"enc_mu", dense_to_json(m.enc_mu)},
      {"enc_logvar", dense_to_json(m.enc_logvar)},
      {"decoder", dec_layers},
      {"heads", heads}};
}

inline Cvae cvae_from_json(const nlohmann::json& j) {
  Cvae m;
  const auto& jc = j.at("config");
  for (const auto& jt : jc.at("targets")) {
    VariableSpec t;
    t.name = jt.at("name").get<std::string>();
    t.kind = column_kind_from_string(jt.at("kind").get<std::string>());
    t.num_classes = jt.at("num_classes").get<int>();
    m.cfg.targets.push_back(std::move(t));
  }
  m.cfg.cond_width = jc.at("cond_width").get<int>();
  m.cfg.latent_dim = jc.at("latent_dim").get<int>();
  m.cfg.hidden = jc.at("hidden").get<std::vector<int>>();
  m.cfg.kl_weight = jc.at("kl_weight").get<double>();
  m.cfg.logvar_min = jc.at("logvar_min").get<double>();
  m.cfg.logvar_max = jc.at("logvar_max").get<double>();
  m.cfg.po_mode = jc.at("po_mode").get<bool>();
  for (const auto& jl : j.at("encoder")) m.encoder.layers.push_back(dense_from_json(jl));
  m.enc_mu = dense_from_json(j.at("enc_mu"));
  m.enc_logvar = dense_from_json(j.at("enc_logvar"));
  for (const auto& jl : j.at("decoder")) m.decoder.layers.push_back(dense_from_json(jl));
  for (const auto& jl : j.at("heads")) m.heads.push_back(dense_from_json(jl));
  return m;
}

}  // namespace causalmix
