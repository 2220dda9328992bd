#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalmix/common.hpp"
#include "causalmix/rng.hpp"

namespace causalmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLeakySlope = 0.01;

/// Affine layer, out x in weights. Gradients accumulate into a paired
/// DenseGrads so several forward passes can share one parameter set.
struct DenseLayer {
  MatrixXd W;  // out x in
  VectorXd b;  // out

  int in_width() const { return static_cast<int>(W.cols()); }
  int out_width() const { return static_cast<int>(W.rows()); }
};

struct DenseGrads {
  MatrixXd W;
  VectorXd b;

  void reset(const DenseLayer& layer) {
    W = MatrixXd::Zero(layer.W.rows(), layer.W.cols());
    b = VectorXd::Zero(layer.b.size());
  }
};

/// Cached forward-pass state needed by the backward pass.
struct DenseCache {
  MatrixXd input;  // batch x in

  bool filled() const { return input.size() > 0; }
};

/// init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), seeded.
inline DenseLayer make_dense(int in_width, int out_width, Rng& rng) {
  DenseLayer layer;
  layer.W.resize(out_width, in_width);
  layer.b = VectorXd::Zero(out_width);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_width));
  for (int r = 0; r < out_width; ++r)
    for (int c = 0; c < in_width; ++c) layer.W(r, c) = rng.uniform(-bound, bound);
  return layer;
}

inline MatrixXd dense_forward(const DenseLayer& layer, const MatrixXd& input,
                              DenseCache& cache) {
  if (input.cols() != layer.W.cols())
    throw NumericError("dense_forward: input width " + std::to_string(input.cols()) +
                       " does not match layer in-width " + std::to_string(layer.W.cols()));
  cache.input = input;
  return (input * layer.W.transpose()).rowwise() + layer.b.transpose();
}

inline MatrixXd dense_backward(const DenseLayer& layer, const DenseCache& cache,
                               const MatrixXd& grad_out, DenseGrads& grads) {
  if (!cache.filled()) throw NumericError("dense_backward: no cached forward pass");
  if (grad_out.rows() != cache.input.rows() || grad_out.cols() != layer.W.rows())
    throw NumericError("dense_backward: gradient shape mismatch");
  grads.W.noalias() += grad_out.transpose() * cache.input;
  grads.b.noalias() += grad_out.colwise().sum().transpose();
  return grad_out * layer.W;
}

inline MatrixXd leaky_relu(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

inline MatrixXd leaky_relu_backward(const MatrixXd& pre_activation, const MatrixXd& grad_out) {
  return grad_out.binaryExpr(pre_activation, [](double g, double pre) {
    return pre > 0.0 ? g : kLeakySlope * g;
  });
}

/// Stack of dense layers with LeakyReLU after every layer. Forward returns a
/// trace so multiple passes through the same parameters can be backpropagated
/// independently, accumulating into shared gradients.
struct Mlp {
  std::vector<DenseLayer> layers;

  int in_width() const { return layers.front().in_width(); }
  int out_width() const { return layers.back().out_width(); }
};

struct MlpGrads {
  std::vector<DenseGrads> layers;

  void reset(const Mlp& mlp) {
    layers.resize(mlp.layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].reset(mlp.layers[i]);
  }
};

struct MlpTrace {
  std::vector<DenseCache> caches;
  std::vector<MatrixXd> pre_activations;
  MatrixXd output;
};

inline Mlp make_mlp(int in_width, const std::vector<int>& widths, Rng& rng) {
  Mlp mlp;
  int prev = in_width;
  for (int w : widths) {
    mlp.layers.push_back(make_dense(prev, w, rng));
    prev = w;
  }
  return mlp;
}

inline MlpTrace mlp_forward(const Mlp& mlp, const MatrixXd& input) {
  MlpTrace trace;
  trace.caches.resize(mlp.layers.size());
  trace.pre_activations.resize(mlp.layers.size());
  MatrixXd x = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    trace.pre_activations[i] = dense_forward(mlp.layers[i], x, trace.caches[i]);
    x = leaky_relu(trace.pre_activations[i]);
  }
  trace.output = x;
  return trace;
}

inline MatrixXd mlp_backward(const Mlp& mlp, const MlpTrace& trace, const MatrixXd& grad_out,
                             MlpGrads& grads) {
  MatrixXd g = grad_out;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    g = leaky_relu_backward(trace.pre_activations[i], g);
    g = dense_backward(mlp.layers[i], trace.caches[i], g, grads.layers[i]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Flat view over one parameter tensor and its gradient.
struct ParamBlock {
  double* value = nullptr;
  const double* grad = nullptr;
  std::size_t size = 0;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long t = 0;

  void reset(const std::vector<ParamBlock>& blocks) {
    m.resize(blocks.size());
    v.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      m[i].assign(blocks[i].size, 0.0);
      v[i].assign(blocks[i].size, 0.0);
    }
    t = 0;
  }
};

inline void adam_step(const std::vector<ParamBlock>& blocks, AdamState& state,
                      const AdamConfig& cfg) {
  if (state.m.size() != blocks.size()) state.reset(blocks);
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const ParamBlock& blk = blocks[i];
    if (state.m[i].size() != blk.size)
      throw NumericError("adam_step: parameter block shape changed");
    for (std::size_t j = 0; j < blk.size; ++j) {
      const double g = blk.grad[j];
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
      state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      blk.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

inline void collect_params(DenseLayer& layer, DenseGrads& grads,
                           std::vector<ParamBlock>& out) {
  out.push_back({layer.W.data(), grads.W.data(), static_cast<std::size_t>(layer.W.size())});
  out.push_back({layer.b.data(), grads.b.data(), static_cast<std::size_t>(layer.b.size())});
}

inline void collect_params(Mlp& mlp, MlpGrads& grads, std::vector<ParamBlock>& out) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i)
    collect_params(mlp.layers[i], grads.layers[i], out);
}

}  // namespace causalmix
