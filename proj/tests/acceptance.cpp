// Acceptance suite: end-to-end checks over the full stack, one printed
// pass/fail line per criterion. Exits nonzero if any criterion fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "causalmix/demo.hpp"
#include "causalmix/eval_causal.hpp"
#include "causalmix/eval_distributional.hpp"
#include "causalmix/eval_privacy.hpp"
#include "causalmix/pipeline.hpp"

#ifndef CAUSALMIX_CLI_PATH
#define CAUSALMIX_CLI_PATH "causalmix"
#endif
#ifndef CAUSALMIX_CONFIG_DIR
#define CAUSALMIX_CONFIG_DIR "configs"
#endif

using namespace causalmix;

namespace {

int g_failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s -- %s\n", pass ? "PASS" : "FAIL", criterion, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Gradient check tolerance: relative 1e-4 with an absolute floor of 1e-7
/// (central differences bottom out near 1e-9).
bool grad_close(double analytic, double fd) {
  return std::fabs(analytic - fd) <= 1e-4 * std::max({1e-3, std::fabs(analytic), std::fabs(fd)});
}

template <typename F>
double fd_at(F&& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness
// ---------------------------------------------------------------------------

Table small_mixed_table(std::uint64_t seed) {
  DatasetSchema s;
  s.columns = {
      {"x1", ColumnKind::continuous, 0, std::nullopt, {}},
      {"x2", ColumnKind::binary, 0, std::nullopt, {}},
      {"grp", ColumnKind::categorical, 3, std::nullopt, {"a", "b", "c"}},
      {"t", ColumnKind::binary, 0, std::nullopt, {}},
      {"y", ColumnKind::continuous, 0, std::nullopt, {}},
  };
  s.treatment = "t";
  s.outcome = "y";
  s.covariates = {"x1", "x2", "grp"};
  Table t;
  t.schema = std::make_shared<DatasetSchema>(s);
  t.n_rows = 5;
  t.values.assign(5, std::vector<double>(5));
  Rng rng(seed);
  for (std::size_t i = 0; i < 5; ++i) {
    t.values[0][i] = rng.uniform(-2, 2);
    t.values[1][i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    t.values[2][i] = static_cast<double>(rng.below(3));
    t.values[3][i] = i % 2 == 0 ? 0.0 : 1.0;
    t.values[4][i] = 0.4 * t.values[0][i] + 0.3 * rng.normal();
  }
  return t;
}

void criterion1_gradients() {
  const auto start = std::chrono::steady_clock::now();
  int bad = 0;
  int total = 0;
  auto check = [&](double analytic, double fd) {
    ++total;
    if (!grad_close(analytic, fd)) ++bad;
  };

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 7919 + 3);

    // Gaussian NLL.
    {
      MatrixXd x(1, 2), mu(1, 2), lv(1, 2), gm, gl;
      for (int c = 0; c < 2; ++c) {
        x(0, c) = rng.uniform(-2, 2);
        mu(0, c) = rng.uniform(-2, 2);
        lv(0, c) = rng.uniform(-1.5, 1.5);
      }
      gaussian_nll(x, mu, lv, gm, gl);
      auto f = [&]() {
        MatrixXd a, b;
        return gaussian_nll(x, mu, lv, a, b);
      };
      for (int c = 0; c < 2; ++c) {
        check(gm(0, c), fd_at(f, mu(0, c), 1e-5));
        check(gl(0, c), fd_at(f, lv(0, c), 1e-5));
      }
    }
    // Bernoulli NLL.
    {
      const double x = rng.bernoulli(0.5) ? 1.0 : 0.0;
      double logit = rng.uniform(-4, 4), g;
      bernoulli_nll(x, logit, g);
      auto f = [&]() {
        double gg;
        return bernoulli_nll(x, logit, gg);
      };
      check(g, fd_at(f, logit, 1e-5));
    }
    // Categorical NLL.
    {
      Eigen::VectorXd logits(4), g;
      for (int k = 0; k < 4; ++k) logits[k] = rng.uniform(-3, 3);
      const int idx = static_cast<int>(rng.below(4));
      categorical_nll(idx, logits, g);
      auto f = [&]() {
        Eigen::VectorXd gg;
        return categorical_nll(idx, logits, gg);
      };
      for (int k = 0; k < 4; ++k) check(g[k], fd_at(f, logits[k], 1e-5));
    }
    // KL.
    {
      MatrixXd mu(1, 2), lv(1, 2), gm, gl;
      for (int c = 0; c < 2; ++c) {
        mu(0, c) = rng.uniform(-2, 2);
        lv(0, c) = rng.uniform(-2, 2);
      }
      kl_standard_gaussian(mu, lv, gm, gl);
      auto f = [&]() {
        MatrixXd a, b;
        return kl_standard_gaussian(mu, lv, a, b);
      };
      for (int c = 0; c < 2; ++c) {
        check(gm(0, c), fd_at(f, mu(0, c), 1e-5));
        check(gl(0, c), fd_at(f, lv(0, c), 1e-5));
      }
    }
    // Smooth L1 (either branch).
    {
      double r = rng.uniform(-2.5, 2.5), g;
      if (std::fabs(std::fabs(r) - 1.0) < 1e-3) r += 0.01;  // stay off the C1 seam
      smooth_l1(r, g);
      auto f = [&]() {
        double gg;
        return smooth_l1(r, gg);
      };
      check(g, fd_at(f, r, 1e-5));
    }
    // Composite tau/kappa penalty.
    {
      PenaltyTermWeights w{rng.uniform(0.5, 3.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                           rng.uniform(0.1, 1.0)};
      Eigen::VectorXd delta(6), grad;
      for (int i = 0; i < 6; ++i) delta[i] = rng.uniform(-2, 2);
      composite_penalty(delta, w, &grad);
      auto f = [&]() { return composite_penalty(delta, w).total(); };
      for (int i = 0; i < 6; ++i) check(grad[i], fd_at(f, delta[i], 1e-5));
    }
    // Overlap penalty.
    {
      Eigen::VectorXd theta(5), target(5), grad;
      for (int i = 0; i < 5; ++i) {
        theta[i] = rng.uniform(-2, 2);
        target[i] = rng.uniform(-2, 2);
      }
      overlap_penalty(theta, target, 4.0, &grad);
      auto f = [&]() { return overlap_penalty(theta, target, 4.0); };
      for (int i = 0; i < 5; ++i) check(grad[i], fd_at(f, theta[i], 1e-5));
    }

    // Full per-batch totals, both generators, all parameters.
    const Table toy = small_mixed_table(seed + 1000);
    const PreprocessState prep = fit_preprocess(toy);
    const EncodedMatrix encoded = transform(toy, prep);
    PenaltyWeights weights;
    weights.lambda_alpha = 3.0;
    weights.tau.lambda = 10.0;
    weights.kappa.lambda = 10.0;
    {
      PreBatchData batch;
      batch.target_cols = encoded.leftCols(3);
      batch.cond_obs = encoded.col(3);
      batch.log_alpha_target = Eigen::VectorXd::Constant(5, 0.2);
      CvaeConfig cfg;
      cfg.targets = {{"x1", ColumnKind::continuous, 0},
                     {"x2", ColumnKind::binary, 0},
                     {"grp", ColumnKind::categorical, 3}};
      cfg.cond_width = 1;
      cfg.hidden = {5};
      Rng init(seed * 13 + 1);
      Cvae model = make_cvae(cfg, init);
      Rng noise_rng(seed * 17 + 2);
      MatrixXd noise(5, model.cfg.latent_dim);
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < model.cfg.latent_dim; ++c) noise(r, c) = noise_rng.normal();
      CvaeGrads grads;
      grads.reset(model);
      pre_generator_batch(model, batch, noise, 1.0, weights, &grads);
      std::vector<ParamBlock> blocks;
      collect_params(model, grads, blocks);
      auto f = [&]() {
        return pre_generator_batch(model, batch, noise, 1.0, weights, nullptr).total();
      };
      for (auto& blk : blocks)
        for (std::size_t i = 0; i < blk.size; ++i) check(blk.grad[i], fd_at(f, blk.value[i], 1e-6));
    }
    {
      PostBatchData batch;
      batch.target_cols = encoded.col(4);
      std::vector<VariableSpec> cov_specs = {{"x1", ColumnKind::continuous, 0},
                                             {"x2", ColumnKind::binary, 0},
                                             {"grp", ColumnKind::categorical, 3}};
      const MatrixXd cov_expanded = expand_inputs(cov_specs, encoded.leftCols(3));
      MatrixXd t_col = encoded.col(3);
      batch.cond_obs.resize(5, cov_expanded.cols() + 1);
      batch.cond_obs << cov_expanded, t_col;
      batch.cond_flip.resize(5, cov_expanded.cols() + 1);
      batch.cond_flip << cov_expanded, (1.0 - t_col.array()).matrix();
      batch.arms.resize(5);
      for (int i = 0; i < 5; ++i)
        batch.arms[static_cast<std::size_t>(i)] = static_cast<int>(t_col(i, 0));
      batch.tau_target = Eigen::VectorXd::Constant(5, 0.1);
      batch.kappa_target = Eigen::VectorXd::Zero(5);
      batch.outcome_scale = prep.scaling("y").std;
      CvaeConfig cfg;
      cfg.targets = {{"y", ColumnKind::continuous, 0}};
      cfg.cond_width = static_cast<int>(cov_expanded.cols()) + 1;
      cfg.hidden = {5};
      cfg.po_mode = true;
      Rng init(seed * 19 + 5);
      Cvae model = make_cvae(cfg, init);
      Rng noise_rng(seed * 23 + 6);
      MatrixXd noise(5, 1);
      for (int r = 0; r < 5; ++r) noise(r, 0) = noise_rng.normal();
      CvaeGrads grads;
      grads.reset(model);
      post_generator_batch(model, batch, noise, 1.0, weights, &grads);
      std::vector<ParamBlock> blocks;
      collect_params(model, grads, blocks);
      auto f = [&]() {
        return post_generator_batch(model, batch, noise, 1.0, weights, nullptr).total();
      };
      for (auto& blk : blocks)
        for (std::size_t i = 0; i < blk.size; ++i) check(blk.grad[i], fd_at(f, blk.value[i], 1e-6));
    }
  }
  const double secs = elapsed_s(start);
  std::ostringstream detail;
  detail << total << " gradient coordinates over 100 seeds, " << bad << " outside 1e-4, "
         << secs << " s";
  report(1, "gradient correctness", bad == 0 && secs < 60.0, detail.str());
}

// ---------------------------------------------------------------------------
// Criterion 2: metric oracles
// ---------------------------------------------------------------------------

void criterion2_oracles() {
  Rng rng(424242);
  bool ok = true;
  std::ostringstream detail;

  // W1 vs exhaustive assignment on n <= 7.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<double> a(7), b(7);
      for (auto& v : a) v = rng.uniform(-3, 3);
      for (auto& v : b) v = rng.uniform(-3, 3);
      std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5, 6};
      double best = 1e300;
      do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) cost += std::fabs(a[i] - b[perm[i]]);
        best = std::min(best, cost / 7.0);
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::fabs(wasserstein1(a, b) - best));
    }
    ok &= worst < 1e-12;
    detail << "W1 max dev " << worst;
  }

  // MMD^2 vs a re-derived double loop at n = 50.
  {
    Eigen::MatrixXd ca(50, 2), da(50, 1), cb(50, 2), db(50, 1);
    for (int i = 0; i < 50; ++i) {
      for (int c = 0; c < 2; ++c) {
        ca(i, c) = rng.normal();
        cb(i, c) = 0.2 + rng.normal();
      }
      da(i, 0) = rng.bernoulli(0.5) ? 1 : 0;
      db(i, 0) = rng.bernoulli(0.6) ? 1 : 0;
    }
    // Median bandwidth over the pooled continuous sample, recomputed
    // independently with full sort.
    std::vector<double> dists;
    Eigen::MatrixXd pooled(100, 2);
    pooled << ca, cb;
    for (int i = 0; i < 100; ++i)
      for (int j = i + 1; j < 100; ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    std::sort(dists.begin(), dists.end());
    const double h2 = dists[dists.size() / 2] * dists[dists.size() / 2];
    auto kfn = [&](const Eigen::MatrixXd& xc, const Eigen::MatrixXd& xd, int i,
                   const Eigen::MatrixXd& yc, const Eigen::MatrixXd& yd, int j) {
      return std::exp(-(xc.row(i) - yc.row(j)).squaredNorm() / (2 * h2)) *
             (xd(i, 0) == yd(j, 0) ? 1.0 : 0.0);
    };
    double kaa = 0, kbb = 0, kab = 0;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        if (i != j) {
          kaa += kfn(ca, da, i, ca, da, j);
          kbb += kfn(cb, db, i, cb, db, j);
        }
        kab += kfn(ca, da, i, cb, db, j);
      }
    const double oracle = kaa / (50.0 * 49.0) + kbb / (50.0 * 49.0) - 2.0 * kab / 2500.0;
    const double dev = std::fabs(mmd2_mixed(ca, da, cb, db) - oracle);
    ok &= dev < 1e-12;
    detail << ", MMD2 dev " << dev;
  }

  // Energy distance vs direct pair sums at n = 40.
  {
    Eigen::MatrixXd a(40, 3), b(45, 3);
    for (int i = 0; i < 40; ++i)
      for (int c = 0; c < 3; ++c) a(i, c) = rng.normal();
    for (int i = 0; i < 45; ++i)
      for (int c = 0; c < 3; ++c) b(i, c) = 0.4 + rng.normal();
    double cross = 0, wa = 0, wb = 0;
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 45; ++j) cross += (a.row(i) - b.row(j)).norm();
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j) wa += (a.row(i) - a.row(j)).norm();
    for (int i = 0; i < 45; ++i)
      for (int j = 0; j < 45; ++j) wb += (b.row(i) - b.row(j)).norm();
    const double ec = cross / (40.0 * 45.0);
    const double oracle = (2 * ec - wa / 1600.0 - wb / 2025.0) / (2 * ec);
    const double dev = std::fabs(energy_distance_normalized(a, b) - oracle);
    ok &= dev < 1e-12;
    detail << ", energy dev " << dev;
  }

  // AUC vs exhaustive pair counting.
  {
    std::vector<double> scores(40);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
      scores[static_cast<std::size_t>(i)] = rng.uniform(0, 1);
      if (i % 4 == 0) scores[static_cast<std::size_t>(i)] = 0.5;  // force ties
      labels[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    double num = 0, pairs = 0;
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j)
        if (labels[static_cast<std::size_t>(i)] == 1 && labels[static_cast<std::size_t>(j)] == 0) {
          pairs += 1;
          if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(j)])
            num += 1;
          else if (scores[static_cast<std::size_t>(i)] == scores[static_cast<std::size_t>(j)])
            num += 0.5;
        }
    const double dev = std::fabs(auc_midrank(scores, labels) - num / pairs);
    ok &= dev < 1e-12;
    detail << ", AUC dev " << dev;
  }

  // DCR neighbor statistics vs an exhaustive recomputation at n <= 50.
  {
    const Table real = make_demo_table(40, 9001);
    const Table synth = make_demo_table(30, 9002);
    const PrivacyReport rep = dcr_protection(real, synth);
    const EncodedPair enc = metric_encode(real, synth);
    std::vector<double> ratios;
    double fraction = 0.0;
    for (Eigen::Index i = 0; i < enc.real_full.rows(); ++i) {
      double ds = 1e300, dr = 1e300;
      for (Eigen::Index j = 0; j < enc.synth_full.rows(); ++j) {
        double acc = 0;
        for (Eigen::Index c = 0; c < enc.real_full.cols(); ++c) {
          const double d = enc.real_full(i, c) - enc.synth_full(j, c);
          acc += d * d;
        }
        ds = std::min(ds, std::sqrt(acc));
      }
      for (Eigen::Index j = 0; j < enc.real_full.rows(); ++j) {
        if (i == j) continue;
        double acc = 0;
        for (Eigen::Index c = 0; c < enc.real_full.cols(); ++c) {
          const double d = enc.real_full(i, c) - enc.real_full(j, c);
          acc += d * d;
        }
        dr = std::min(dr, std::sqrt(acc));
      }
      if (ds > dr) fraction += 1.0 / static_cast<double>(enc.real_full.rows());
      ratios.push_back(ds / (dr + 1e-8));
    }
    const double dev = std::max(std::fabs(rep.protection_fraction - fraction),
                                std::fabs(rep.ratio_mean - mean_of(ratios)));
    ok &= dev < 1e-12;
    detail << ", DCR dev " << dev;
  }

  // Closed-form KL vs a 1e5-draw Monte Carlo estimate.
  {
    MatrixXd mu(1, 1), lv(1, 1), gm, gl;
    mu << 0.7;
    lv << 0.8;
    const double closed = kl_standard_gaussian(mu, lv, gm, gl);
    Rng mc(555);
    const double sigma = std::exp(0.4);
    double acc = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const double z = 0.7 + sigma * mc.normal();
      const double diff = z - 0.7;
      const double log_q = -0.5 * (kLog2Pi + 0.8 + diff * diff / (sigma * sigma));
      const double log_p = -0.5 * (kLog2Pi + z * z);
      acc += log_q - log_p;
    }
    const double mc_kl = acc / 100000.0;
    const double rel = std::fabs(mc_kl - closed) / closed;
    ok &= rel < 0.02;
    detail << ", KL MC rel " << rel;
  }

  report(2, "metric oracles", ok, detail.str());
}

// ---------------------------------------------------------------------------
// Criteria 3-8: end-to-end on the demo table
// ---------------------------------------------------------------------------

GeneratorBundle fit_scenario(const Table& demo, const std::string& scenario_file,
                             const TrainConfig& config) {
  const ControlSpec control = load_control_spec(scenario_file);
  control.validate(*demo.schema);
  return fit_bundle(demo, config, control).bundle;
}

struct ScenarioEval {
  TeDiagnostics te;
  ConfoundingDiagnostics confounding;
  OverlapDecoderDiagnostics decoder;
  OverlapPropensityBlock propensity;
  C2stResult c2st_result;
  double energy = 0.0;
};

ScenarioEval evaluate_scenario(const GeneratorBundle& bundle, const Table& real,
                               const SyntheticTable& synth) {
  ScenarioEval ev;
  const InducedQuantities induced = induced_on_table(bundle, synth.table);
  const ControlTargets targets = evaluate_targets(bundle.control, synth.table);
  auto to_vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  ev.te = te_diagnostics(to_vec(induced.tau_theta), targets.tau);
  ev.confounding = confounding_diagnostics(to_vec(induced.kappa_theta), targets.kappa,
                                           synth.table.col(real.schema->treatment));
  ev.decoder = overlap_decoder_diagnostics(to_vec(induced.delta_theta), targets.log_alpha);
  ev.propensity = propensity_overlap(synth.table);
  const EncodedPair enc = metric_encode(real, synth.table);
  ev.c2st_result = c2st(enc.real_full, enc.synth_full, 77);
  ev.energy = energy_distance_normalized(enc.real_full, enc.synth_full);
  return ev;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main() {
  const std::string config_dir = CAUSALMIX_CONFIG_DIR;
  const std::string cli = CAUSALMIX_CLI_PATH;
  const std::filesystem::path work =
      std::filesystem::temp_directory_path() / "causalmix_acceptance";
  std::filesystem::create_directories(work);

  criterion1_gradients();
  criterion2_oracles();

  const Table demo = make_demo_table(4000, 17);
  const TrainConfig config = load_train_config(config_dir + "/train_default.json");

  // Scenario 1: homogeneous effect, no confounding, perfect overlap.
  const auto s1_start = std::chrono::steady_clock::now();
  const GeneratorBundle s1 = fit_scenario(demo, config_dir + "/scenario1.json", config);
  const SyntheticTable s1_synth = generate(s1, 4000, 101);
  const ScenarioEval s1_eval = evaluate_scenario(s1, demo, s1_synth);
  const double s1_secs = elapsed_s(s1_start);
  {
    const bool pass = std::fabs(s1_eval.te.ate_theta - 0.1) <= 0.02 &&
                      s1_eval.confounding.mae <= 0.01 &&
                      s1_eval.decoder.fraction_within >= 0.90 &&
                      s1_eval.c2st_result.score >= 0.5 && s1_eval.propensity.auc >= 0.45 &&
                      s1_eval.propensity.auc <= 0.60 && s1_secs <= 900.0;
    std::ostringstream d;
    d << "ATE " << s1_eval.te.ate_theta << " (target 0.1), kappa MAE " << s1_eval.confounding.mae
      << ", decoder fraction " << s1_eval.decoder.fraction_within << ", C2ST complement "
      << s1_eval.c2st_result.score << ", propensity AUC " << s1_eval.propensity.auc << ", "
      << s1_secs << " s";
    report(3, "Scenario-1 end-to-end recovery", pass, d.str());
  }

  // Scenario 3: nonlinear effect, covariate-dependent confounding and overlap.
  const GeneratorBundle s3 = fit_scenario(demo, config_dir + "/scenario3.json", config);
  const SyntheticTable s3_synth = generate(s3, 4000, 101);
  const ScenarioEval s3_eval = evaluate_scenario(s3, demo, s3_synth);
  {
    const bool pass = !s3_eval.te.correlation_na && s3_eval.te.correlation >= 0.85 &&
                      s3_eval.propensity.auc >= 0.75 &&
                      s3_eval.decoder.fraction_within >= 0.85;
    std::ostringstream d;
    d << "CATE correlation " << s3_eval.te.correlation << ", propensity AUC "
      << s3_eval.propensity.auc << ", decoder fraction " << s3_eval.decoder.fraction_within;
    report(4, "Scenario-3 structural recovery", pass, d.str());
  }

  // BGMM vs standard-normal prior ordering across 3 seeds.
  {
    bool pass = true;
    std::ostringstream d;
    for (std::uint64_t seed : {201, 202, 203}) {
      const SyntheticTable bg = generate(s3, 4000, seed, LatentPrior::bgmm);
      const SyntheticTable ga = generate(s3, 4000, seed, LatentPrior::standard_normal);
      const EncodedPair eb = metric_encode(demo, bg.table);
      const EncodedPair eg = metric_encode(demo, ga.table);
      const double energy_b = energy_distance_normalized(eb.real_full, eb.synth_full);
      const double energy_g = energy_distance_normalized(eg.real_full, eg.synth_full);
      const double score_b = c2st(eb.real_full, eb.synth_full, seed).score;
      const double score_g = c2st(eg.real_full, eg.synth_full, seed).score;
      pass &= energy_b <= energy_g && score_b >= score_g;
      d << "[seed " << seed << ": energy " << energy_b << " vs " << energy_g << ", c2st "
        << score_b << " vs " << score_g << "] ";
    }
    report(5, "BGMM-vs-Gaussian prior ordering", pass, d.str());
  }

  // Privacy sanity.
  {
    const PrivacyReport copy = dcr_protection(demo, demo);
    bool copy_baseline_na = false;
    const double copy_score = dcr_baseline_protection(demo, demo, 11, &copy_baseline_na);
    Table far = demo;
    for (std::size_t c = 0; c < demo.schema->columns.size(); ++c)
      if (is_numeric_scaled(demo.schema->columns[c].kind))
        for (auto& v : far.values[c]) v += 1e5;
    const PrivacyReport apart = dcr_protection(demo, far);
    const PrivacyReport generated = privacy_report(demo, s1_synth.table, 13);
    const bool pass = copy.protection_fraction == 0.0 && copy_score == 0.0 &&
                      apart.protection_fraction == 1.0 &&
                      generated.protection_fraction >= 0.5 && generated.ratio_p50 >= 1.0;
    std::ostringstream d;
    d << "copy fraction " << copy.protection_fraction << ", copy baseline " << copy_score
      << ", far fraction " << apart.protection_fraction << ", generated fraction "
      << generated.protection_fraction << ", generated median ratio " << generated.ratio_p50;
    report(6, "privacy sanity", pass, d.str());
  }

  // CLI determinism: byte-identical artifacts across two identical runs.
  {
    const Table small = make_demo_table(600, 23);
    const std::string data_path = (work / "small.csv").string();
    const std::string schema_path = (work / "small_schema.json").string();
    write_csv(small, data_path);
    {
      std::ofstream out(schema_path);
      out << schema_to_json(*small.schema).dump(2) << '\n';
    }
    TrainConfig quick = config;
    quick.max_epochs = 15;
    quick.patience = 5;
    quick.batch_size = 16;
    quick.hidden = {16};
    quick.seed = 3;
    const std::string quick_path = (work / "quick_config.json").string();
    {
      std::ofstream out(quick_path);
      out << train_config_to_json(quick).dump(2) << '\n';
    }
    bool pass = true;
    std::string detail;
    for (int run = 0; run < 2; ++run) {
      const std::string bundle_path = (work / ("det_bundle_" + std::to_string(run) + ".json")).string();
      const std::string synth_path = (work / ("det_synth_" + std::to_string(run) + ".csv")).string();
      std::ostringstream fit_cmd;
      fit_cmd << cli << " fit --data " << data_path << " --schema " << schema_path
              << " --scenario " << config_dir << "/scenario1.json --train-config " << quick_path
              << " --out " << bundle_path << " > /dev/null 2>&1";
      std::ostringstream gen_cmd;
      gen_cmd << cli << " generate --bundle " << bundle_path
              << " --n 500 --seed 9 --out " << synth_path << " > /dev/null 2>&1";
      pass &= std::system(fit_cmd.str().c_str()) == 0;
      pass &= std::system(gen_cmd.str().c_str()) == 0;
    }
    const std::string b0 = slurp((work / "det_bundle_0.json").string());
    const std::string b1 = slurp((work / "det_bundle_1.json").string());
    const std::string l0 = slurp((work / "det_bundle_0.json.loss_log.csv").string());
    const std::string l1 = slurp((work / "det_bundle_1.json.loss_log.csv").string());
    const std::string s0 = slurp((work / "det_synth_0.csv").string());
    const std::string s1b = slurp((work / "det_synth_1.csv").string());
    pass &= !b0.empty() && b0 == b1 && !l0.empty() && l0 == l1 && !s0.empty() && s0 == s1b;
    std::ostringstream d;
    d << "bundle bytes " << b0.size() << (b0 == b1 ? " identical" : " DIFFER") << ", loss log "
      << (l0 == l1 ? "identical" : "DIFFERS") << ", synthetic CSV "
      << (s0 == s1b ? "identical" : "DIFFERS");
    report(7, "CLI determinism", pass, d.str());
  }

  // Replication protocol.
  {
    const auto start = std::chrono::steady_clock::now();
    const auto reps = replicate(s1, 50, 4098, 300);
    const double secs = elapsed_s(start);
    bool pass = reps.size() == 50 && secs <= 300.0;
    const double first_ate = mean_of(reps[0].tau_truth);
    double max_dev = 0.0;
    for (const auto& rep : reps)
      max_dev = std::max(max_dev, std::fabs(mean_of(rep.tau_truth) - first_ate));
    pass &= max_dev == 0.0;
    std::ostringstream d;
    d << "50 replicates of 4098 rows in " << secs << " s, ground-truth ATE " << first_ate
      << ", max deviation across replicates " << max_dev;
    report(8, "replication protocol", pass, d.str());
  }

  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
