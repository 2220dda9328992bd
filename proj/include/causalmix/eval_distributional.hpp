#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "causalmix/common.hpp"
#include "causalmix/eval_common.hpp"

namespace causalmix {

// ---------------------------------------------------------------------------
// Marginal metrics
// ---------------------------------------------------------------------------

/// 1-D W1 via the CDF-difference integral; reduces to the sorted-sample
/// coupling for equal sizes and handles unequal sizes as the quantile
/// integral.
inline double wasserstein1(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InputError("wasserstein1: empty sample");
  std::vector<double> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double wa = 1.0 / static_cast<double>(sa.size());
  const double wb = 1.0 / static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double cdf_diff = 0.0, prev = 0.0, w1 = 0.0;
  bool first = true;
  while (ia < sa.size() || ib < sb.size()) {
    const double x = (ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib])) ? sa[ia] : sb[ib];
    if (!first) w1 += std::fabs(cdf_diff) * (x - prev);
    while (ia < sa.size() && sa[ia] == x) {
      cdf_diff += wa;
      ++ia;
    }
    while (ib < sb.size() && sb[ib] == x) {
      cdf_diff -= wb;
      ++ib;
    }
    prev = x;
    first = false;
  }
  return w1;
}

inline double normalized_wasserstein(const std::vector<double>& real_col,
                                     const std::vector<double>& synth_col) {
  return wasserstein1(real_col, synth_col) / (population_sd(real_col) + 1e-8);
}

/// 1 - sup |F_real - F_synth| over the merged support.
inline double ks_complement(const std::vector<double>& real_col,
                            const std::vector<double>& synth_col) {
  if (real_col.empty() || synth_col.empty()) throw InputError("ks_complement: empty sample");
  std::vector<double> sa = real_col, sb = synth_col;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double wa = 1.0 / static_cast<double>(sa.size());
  const double wb = 1.0 / static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double fa = 0.0, fb = 0.0, sup = 0.0;
  while (ia < sa.size() || ib < sb.size()) {
    const double x = (ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib])) ? sa[ia] : sb[ib];
    while (ia < sa.size() && sa[ia] == x) {
      fa += wa;
      ++ia;
    }
    while (ib < sb.size() && sb[ib] == x) {
      fb += wb;
      ++ib;
    }
    sup = std::max(sup, std::fabs(fa - fb));
  }
  return 1.0 - sup;
}

/// 1 - (1/2) sum |p_real - p_synth| over the union of observed categories.
inline double tv_complement(const std::vector<double>& real_col,
                            const std::vector<double>& synth_col) {
  std::map<double, double> p_real, p_synth;
  for (double v : real_col) p_real[v] += 1.0 / static_cast<double>(real_col.size());
  for (double v : synth_col) p_synth[v] += 1.0 / static_cast<double>(synth_col.size());
  double tv = 0.0;
  for (const auto& [v, p] : p_real) {
    auto it = p_synth.find(v);
    tv += std::fabs(p - (it == p_synth.end() ? 0.0 : it->second));
  }
  for (const auto& [v, p] : p_synth)
    if (p_real.find(v) == p_real.end()) tv += p;
  return 1.0 - 0.5 * tv;
}

// ---------------------------------------------------------------------------
// Pairwise dependence
// ---------------------------------------------------------------------------

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double sa = population_sd(a), sb = population_sd(b);
  if (!(sa > 0.0) || !(sb > 0.0)) throw InputError("pearson: constant column");
  const double ma = mean_of(a), mb = mean_of(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma) * (b[i] - mb);
  return acc / (static_cast<double>(a.size()) * sa * sb);
}

inline double correlation_similarity(const std::vector<double>& real_a,
                                     const std::vector<double>& real_b,
                                     const std::vector<double>& synth_a,
                                     const std::vector<double>& synth_b) {
  return 1.0 - std::fabs(pearson(real_a, real_b) - pearson(synth_a, synth_b)) / 2.0;
}

/// 1 - (1/2) sum over joint cells |p_real - p_synth|.
inline double contingency_similarity(const std::vector<double>& real_a,
                                     const std::vector<double>& real_b,
                                     const std::vector<double>& synth_a,
                                     const std::vector<double>& synth_b) {
  std::map<std::pair<double, double>, double> p_real, p_synth;
  for (std::size_t i = 0; i < real_a.size(); ++i)
    p_real[{real_a[i], real_b[i]}] += 1.0 / static_cast<double>(real_a.size());
  for (std::size_t i = 0; i < synth_a.size(); ++i)
    p_synth[{synth_a[i], synth_b[i]}] += 1.0 / static_cast<double>(synth_a.size());
  double tv = 0.0;
  for (const auto& [cell, p] : p_real) {
    auto it = p_synth.find(cell);
    tv += std::fabs(p - (it == p_synth.end() ? 0.0 : it->second));
  }
  for (const auto& [cell, p] : p_synth)
    if (p_real.find(cell) == p_real.end()) tv += p;
  return 1.0 - 0.5 * tv;
}

namespace detail {

/// Plug-in MI and entropies from an add-1 smoothed contingency table over the
/// observed support.
struct DiscreteInfo {
  double mi = 0.0;
  double h_a = 0.0;
  double h_b = 0.0;
};

inline DiscreteInfo smoothed_contingency_info(const std::vector<double>& a,
                                              const std::vector<double>& b) {
  std::map<double, int> cat_a, cat_b;
  for (double v : a) cat_a.emplace(v, 0);
  for (double v : b) cat_b.emplace(v, 0);
  int idx = 0;
  for (auto& [v, i] : cat_a) i = idx++;
  idx = 0;
  for (auto& [v, i] : cat_b) i = idx++;
  const std::size_t ka = cat_a.size(), kb = cat_b.size();
  Eigen::MatrixXd joint = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(ka),
                                                static_cast<Eigen::Index>(kb));  // add-1
  for (std::size_t i = 0; i < a.size(); ++i)
    joint(cat_a[a[i]], cat_b[b[i]]) += 1.0;
  joint /= joint.sum();
  const Eigen::VectorXd pa = joint.rowwise().sum();
  const Eigen::VectorXd pb = joint.colwise().sum();
  DiscreteInfo info;
  for (Eigen::Index i = 0; i < pa.size(); ++i)
    if (pa[i] > 0.0) info.h_a -= pa[i] * std::log(pa[i]);
  for (Eigen::Index j = 0; j < pb.size(); ++j)
    if (pb[j] > 0.0) info.h_b -= pb[j] * std::log(pb[j]);
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j)
      if (joint(i, j) > 0.0)
        info.mi += joint(i, j) * std::log(joint(i, j) / (pa[i] * pb[j]));
  info.mi = std::max(info.mi, 0.0);
  return info;
}

/// Kraskov estimator (variant 1, max-norm) for continuous pairs, with
/// Kozachenko-Leonenko marginal entropies.
inline DiscreteInfo ksg_info(const std::vector<double>& a, const std::vector<double>& b, int k) {
  const std::size_t n = a.size();
  if (n < 50) throw InputError("SU estimation needs at least 50 rows for the kNN path");
  DiscreteInfo info;
  double mi_acc = 0.0, ha_acc = 0.0, hb_acc = 0.0;
  std::vector<double> dax(n), dby(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dax[j] = std::fabs(a[j] - a[i]);
      dby[j] = std::fabs(b[j] - b[i]);
    }
    // Joint k-th neighbor distance under the max norm, excluding self.
    std::vector<double> joint(n);
    for (std::size_t j = 0; j < n; ++j) joint[j] = std::max(dax[j], dby[j]);
    joint[i] = std::numeric_limits<double>::infinity();
    std::vector<double> tmp = joint;
    std::nth_element(tmp.begin(), tmp.begin() + (k - 1), tmp.end());
    const double eps = tmp[static_cast<std::size_t>(k - 1)];
    int nx = 0, ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (dax[j] < eps) ++nx;
      if (dby[j] < eps) ++ny;
    }
    mi_acc += digamma(nx + 1.0) + digamma(ny + 1.0);

    // Marginal k-th neighbor distances for the entropy estimates.
    auto kth = [&](std::vector<double> d) {
      d[i] = std::numeric_limits<double>::infinity();
      std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
      return std::max(d[static_cast<std::size_t>(k - 1)], 1e-12);
    };
    ha_acc += std::log(2.0 * kth(dax));
    hb_acc += std::log(2.0 * kth(dby));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  info.mi = std::max(digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) -
                         mi_acc * inv_n,
                     0.0);
  info.h_a = -digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) + ha_acc * inv_n;
  info.h_b = -digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) + hb_acc * inv_n;
  return info;
}

inline std::vector<double> quantile_bin(const std::vector<double>& col, int n_bins) {
  std::vector<double> edges;
  for (int b = 1; b < n_bins; ++b)
    edges.push_back(quantile(col, static_cast<double>(b) / n_bins));
  std::vector<double> binned(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) {
    int bin = 0;
    while (bin < static_cast<int>(edges.size()) && col[i] > edges[static_cast<std::size_t>(bin)])
      ++bin;
    binned[i] = bin;
  }
  return binned;
}

}  // namespace detail

/// Symmetric uncertainty of one variable pair within one dataset, clamped to
/// [0,1]. Estimator routing: Kraskov k=3 for genuinely continuous pairs,
/// add-1 contingency for discrete pairs (integer columns have category-like
/// support and take the discrete path), and 10 quantile bins bridge mixed
/// pairs onto the contingency path.
inline double symmetric_uncertainty(const std::vector<double>& a, ColumnKind kind_a,
                                    const std::vector<double>& b, ColumnKind kind_b) {
  const bool cont_a = kind_a == ColumnKind::continuous;
  const bool cont_b = kind_b == ColumnKind::continuous;
  detail::DiscreteInfo info;
  if (cont_a && cont_b) {
    info = detail::ksg_info(a, b, 3);
  } else if (!cont_a && !cont_b) {
    info = detail::smoothed_contingency_info(a, b);
  } else if (cont_a) {
    info = detail::smoothed_contingency_info(detail::quantile_bin(a, 10), b);
  } else {
    info = detail::smoothed_contingency_info(a, detail::quantile_bin(b, 10));
  }
  const double denom = info.h_a + info.h_b;
  if (!(denom > 1e-12)) return 0.0;
  return std::clamp(2.0 * info.mi / denom, 0.0, 1.0);
}

inline double su_similarity(const std::vector<double>& real_a, const std::vector<double>& real_b,
                            const std::vector<double>& synth_a,
                            const std::vector<double>& synth_b, ColumnKind kind_a,
                            ColumnKind kind_b) {
  const double su_real = symmetric_uncertainty(real_a, kind_a, real_b, kind_b);
  const double su_synth = symmetric_uncertainty(synth_a, kind_a, synth_b, kind_b);
  return std::clamp(1.0 - std::fabs(su_real - su_synth), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Joint metrics
// ---------------------------------------------------------------------------

/// Unbiased MMD^2 with the product kernel k = RBF(continuous) * Hamming
/// (discrete). RBF bandwidth is the median pairwise continuous distance over
/// the pooled sample; the Hamming part is the fraction of matching discrete
/// coordinates.
inline double mmd2_mixed(const Eigen::MatrixXd& cont_a, const Eigen::MatrixXd& disc_a,
                         const Eigen::MatrixXd& cont_b, const Eigen::MatrixXd& disc_b) {
  const Eigen::Index m = cont_a.rows() > 0 ? cont_a.rows() : disc_a.rows();
  const Eigen::Index n = cont_b.rows() > 0 ? cont_b.rows() : disc_b.rows();
  if (m < 2 || n < 2) throw InputError("mmd2_mixed: need at least 2 rows per sample");
  const bool has_cont = cont_a.cols() > 0;
  const bool has_disc = disc_a.cols() > 0;

  double bandwidth2 = 1.0;
  if (has_cont) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>((m + n) * (m + n - 1) / 2));
    Eigen::MatrixXd pooled(m + n, cont_a.cols());
    pooled << cont_a, cont_b;
    for (Eigen::Index i = 0; i < pooled.rows(); ++i)
      for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
        dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                     dists.end());
    const double median = dists[dists.size() / 2];
    bandwidth2 = median > 0.0 ? median * median : 1.0;
  }

  auto kernel = [&](const Eigen::MatrixXd& ca, Eigen::Index i, const Eigen::MatrixXd& da,
                    const Eigen::MatrixXd& cb, Eigen::Index j, const Eigen::MatrixXd& db) {
    double k = 1.0;
    if (has_cont) {
      const double d2 = (ca.row(i) - cb.row(j)).squaredNorm();
      k *= std::exp(-d2 / (2.0 * bandwidth2));
    }
    if (has_disc) {
      double match = 0.0;
      for (Eigen::Index c = 0; c < da.cols(); ++c)
        if (da(i, c) == db(j, c)) match += 1.0;
      k *= match / static_cast<double>(da.cols());
    }
    return k;
  };

  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) kaa += kernel(cont_a, i, disc_a, cont_a, j, disc_a);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) kbb += kernel(cont_b, i, disc_b, cont_b, j, disc_b);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kab += kernel(cont_a, i, disc_a, cont_b, j, disc_b);

  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  return kaa / (dm * (dm - 1.0)) + kbb / (dn * (dn - 1.0)) - 2.0 * kab / (dm * dn);
}

/// Biased (V-statistic) MMD^2 with the same mixed kernel. The conditional
/// ratio needs this variant: its finite-sample bias gives the within-real
/// reference a positive scale, so "ratio near one" means discrepancy
/// comparable to sampling variability. The unbiased estimator would center
/// the reference on zero and make the ratio meaningless.
inline double mmd2_mixed_biased(const Eigen::MatrixXd& cont_a, const Eigen::MatrixXd& disc_a,
                                const Eigen::MatrixXd& cont_b, const Eigen::MatrixXd& disc_b) {
  const Eigen::Index m = cont_a.rows() > 0 ? cont_a.rows() : disc_a.rows();
  const Eigen::Index n = cont_b.rows() > 0 ? cont_b.rows() : disc_b.rows();
  if (m < 1 || n < 1) throw InputError("mmd2_mixed_biased: empty sample");
  const bool has_cont = cont_a.cols() > 0;
  const bool has_disc = disc_a.cols() > 0;

  double bandwidth2 = 1.0;
  if (has_cont) {
    std::vector<double> dists;
    Eigen::MatrixXd pooled(m + n, cont_a.cols());
    pooled << cont_a, cont_b;
    for (Eigen::Index i = 0; i < pooled.rows(); ++i)
      for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
        dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    if (!dists.empty()) {
      std::nth_element(dists.begin(),
                       dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                       dists.end());
      const double median = dists[dists.size() / 2];
      bandwidth2 = median > 0.0 ? median * median : 1.0;
    }
  }
  auto kernel = [&](const Eigen::MatrixXd& ca, Eigen::Index i, const Eigen::MatrixXd& da,
                    const Eigen::MatrixXd& cb, Eigen::Index j, const Eigen::MatrixXd& db) {
    double k = 1.0;
    if (has_cont) k *= std::exp(-(ca.row(i) - cb.row(j)).squaredNorm() / (2.0 * bandwidth2));
    if (has_disc) {
      double match = 0.0;
      for (Eigen::Index c = 0; c < da.cols(); ++c)
        if (da(i, c) == db(j, c)) match += 1.0;
      k *= match / static_cast<double>(da.cols());
    }
    return k;
  };
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) kaa += kernel(cont_a, i, disc_a, cont_a, j, disc_a);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kbb += kernel(cont_b, i, disc_b, cont_b, j, disc_b);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) kab += kernel(cont_a, i, disc_a, cont_b, j, disc_b);
  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  return kaa / (dm * dm) + kbb / (dn * dn) - 2.0 * kab / (dm * dn);
}

struct ConditionalFidelity {
  double weighted_mmd2 = 0.0;
  double reference = 0.0;
  double ratio = 0.0;
  std::vector<std::string> warnings;
};

/// Stratum-size-weighted MMD^2 of all-but-C features across C strata,
/// normalized by the same computation between two stratified halves of the
/// real data.
inline ConditionalFidelity conditional_fidelity(const Table& real, const Table& synth,
                                                const std::string& cond_col, int n_bins = 5,
                                                std::uint64_t seed = 0) {
  const auto& schema = *real.schema;
  const auto& meta = schema.column(cond_col);
  const EncodedPair enc = metric_encode(real, synth);

  // Feature views excluding the conditioning column.
  auto drop_col = [](const Eigen::MatrixXd& m, int col) {
    if (col < 0) return m;
    Eigen::MatrixXd out(m.rows(), m.cols() - 1);
    out.leftCols(col) = m.leftCols(col);
    out.rightCols(m.cols() - 1 - col) = m.rightCols(m.cols() - 1 - col);
    return out;
  };
  int cont_idx = -1, disc_idx = -1;
  for (std::size_t i = 0; i < enc.cont_names.size(); ++i)
    if (enc.cont_names[i] == cond_col) cont_idx = static_cast<int>(i);
  for (std::size_t i = 0; i < enc.disc_names.size(); ++i)
    if (enc.disc_names[i] == cond_col) disc_idx = static_cast<int>(i);
  const Eigen::MatrixXd real_cont = drop_col(enc.real_cont, cont_idx);
  const Eigen::MatrixXd synth_cont = drop_col(enc.synth_cont, cont_idx);
  const Eigen::MatrixXd real_disc = drop_col(enc.real_disc, disc_idx);
  const Eigen::MatrixXd synth_disc = drop_col(enc.synth_disc, disc_idx);

  // Stratum labels: observed categories for discrete C, real-data quantile
  // bins for continuous C.
  std::vector<int> real_stratum(real.n_rows), synth_stratum(synth.n_rows);
  std::vector<int> strata_ids;
  const auto& real_c = real.col(cond_col);
  const auto& synth_c = synth.col(cond_col);
  if (is_discrete(meta.kind)) {
    std::map<double, int> ids;
    for (double v : real_c) ids.emplace(v, 0);
    int next = 0;
    for (auto& [v, id] : ids) id = next++;
    for (std::size_t i = 0; i < real.n_rows; ++i) real_stratum[i] = ids[real_c[i]];
    for (std::size_t i = 0; i < synth.n_rows; ++i) {
      auto it = ids.find(synth_c[i]);
      synth_stratum[i] = it == ids.end() ? -1 : it->second;
    }
    for (int s = 0; s < next; ++s) strata_ids.push_back(s);
  } else {
    std::vector<double> edges;
    for (int b = 1; b < n_bins; ++b)
      edges.push_back(quantile(real_c, static_cast<double>(b) / n_bins));
    auto assign = [&](double v) {
      int bin = 0;
      while (bin < static_cast<int>(edges.size()) && v > edges[static_cast<std::size_t>(bin)])
        ++bin;
      return bin;
    };
    for (std::size_t i = 0; i < real.n_rows; ++i) real_stratum[i] = assign(real_c[i]);
    for (std::size_t i = 0; i < synth.n_rows; ++i) synth_stratum[i] = assign(synth_c[i]);
    for (int s = 0; s < n_bins; ++s) strata_ids.push_back(s);
  }

  auto rows_of = [](const std::vector<int>& strata, int s) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (strata[i] == s) rows.push_back(static_cast<Eigen::Index>(i));
    return rows;
  };
  auto take = [](const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
  };

  ConditionalFidelity result;
  double weighted = 0.0, weight_total = 0.0;
  for (int s : strata_ids) {
    const auto r_rows = rows_of(real_stratum, s);
    const auto s_rows = rows_of(synth_stratum, s);
    if (r_rows.size() < 2 || s_rows.size() < 2) {
      result.warnings.push_back("stratum " + std::to_string(s) +
                                " has fewer than 2 rows on one side and was dropped");
      continue;
    }
    const double mmd = mmd2_mixed_biased(take(real_cont, r_rows), take(real_disc, r_rows),
                                         take(synth_cont, s_rows), take(synth_disc, s_rows));
    weighted += static_cast<double>(r_rows.size()) * mmd;
    weight_total += static_cast<double>(r_rows.size());
  }
  if (weight_total > 0.0) result.weighted_mmd2 = weighted / weight_total;

  // Within-real reference: the same statistic between two stratified halves.
  Rng rng(seed);
  double ref_weighted = 0.0, ref_total = 0.0;
  for (int s : strata_ids) {
    auto r_rows = rows_of(real_stratum, s);
    if (r_rows.size() < 4) continue;
    std::vector<Eigen::Index> shuffled = r_rows;
    rng.shuffle(shuffled);
    const std::size_t half = shuffled.size() / 2;
    const std::vector<Eigen::Index> h1(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<Eigen::Index> h2(shuffled.begin() + static_cast<std::ptrdiff_t>(half), shuffled.end());
    const double mmd = mmd2_mixed_biased(take(real_cont, h1), take(real_disc, h1),
                                         take(real_cont, h2), take(real_disc, h2));
    ref_weighted += static_cast<double>(r_rows.size()) * mmd;
    ref_total += static_cast<double>(r_rows.size());
  }
  result.reference = ref_total > 0.0 ? ref_weighted / ref_total : 0.0;
  result.ratio = result.weighted_mmd2 / std::max(result.reference, 1e-12);
  return result;
}

/// Normalized energy distance on encoded rows, in [0,1]:
/// D^2 = 2E||X-Y|| - E||X-X'|| - E||Y-Y'|| (V-statistics), over 2E||X-Y||.
inline double energy_distance_normalized(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index m = a.rows(), n = b.rows();
  if (m < 2 || n < 2) throw InputError("energy_distance: need at least 2 rows per sample");
  std::vector<double> cross_sums(static_cast<std::size_t>(m), 0.0);
  std::vector<double> within_a(static_cast<std::size_t>(m), 0.0);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
    double cs = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      cs += (a.row(static_cast<Eigen::Index>(i)) - b.row(j)).norm();
    cross_sums[i] = cs;
    double wa = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      wa += (a.row(static_cast<Eigen::Index>(i)) - a.row(j)).norm();
    within_a[i] = wa;
  });
  std::vector<double> within_b(static_cast<std::size_t>(n), 0.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    double wb = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      wb += (b.row(static_cast<Eigen::Index>(i)) - b.row(j)).norm();
    within_b[i] = wb;
  });
  const double e_cross = std::accumulate(cross_sums.begin(), cross_sums.end(), 0.0) /
                         (static_cast<double>(m) * static_cast<double>(n));
  const double e_a = std::accumulate(within_a.begin(), within_a.end(), 0.0) /
                     (static_cast<double>(m) * static_cast<double>(m));
  const double e_b = std::accumulate(within_b.begin(), within_b.end(), 0.0) /
                     (static_cast<double>(n) * static_cast<double>(n));
  const double d2 = 2.0 * e_cross - e_a - e_b;
  if (!(e_cross > 0.0)) return 0.0;
  return d2 / (2.0 * e_cross);
}

struct C2stResult {
  double auc = 0.5;
  double score = 1.0;  // 1 - 2|AUC - 0.5|
};

/// Classifier two-sample test: seeded stratified 50/50 split, logistic
/// regression on encoded features, held-out midrank AUC.
inline C2stResult c2st(const Eigen::MatrixXd& real, const Eigen::MatrixXd& synth,
                       std::uint64_t seed) {
  if (real.rows() < 50 || synth.rows() < 50)
    throw InputError("c2st: need at least 50 rows per sample");
  Rng rng(seed);
  auto split = [&](Eigen::Index n) {
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t half = order.size() / 2;
    return std::make_pair(
        std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half)),
        std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(half), order.end()));
  };
  const auto [real_train, real_test] = split(real.rows());
  const auto [synth_train, synth_test] = split(synth.rows());

  auto stack = [&](const Eigen::MatrixXd& a, const std::vector<std::size_t>& ra,
                   const Eigen::MatrixXd& b, const std::vector<std::size_t>& rb) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ra.size() + rb.size()), a.cols());
    Eigen::VectorXd y(x.rows());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = a.row(static_cast<Eigen::Index>(ra[i]));
      y[static_cast<Eigen::Index>(i)] = 0.0;
    }
    for (std::size_t i = 0; i < rb.size(); ++i) {
      x.row(static_cast<Eigen::Index>(ra.size() + i)) = b.row(static_cast<Eigen::Index>(rb[i]));
      y[static_cast<Eigen::Index>(ra.size() + i)] = 1.0;
    }
    return std::make_pair(x, y);
  };
  const auto [x_train, y_train] = stack(real, real_train, synth, synth_train);
  const auto [x_test, y_test] = stack(real, real_test, synth, synth_test);

  const LogisticFit fit = fit_logistic(x_train, y_train);
  const Eigen::VectorXd probs = logistic_predict(fit, x_test);
  std::vector<double> scores(static_cast<std::size_t>(probs.size()));
  std::vector<int> labels(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    scores[static_cast<std::size_t>(i)] = probs[i];
    labels[static_cast<std::size_t>(i)] = static_cast<int>(y_test[i]);
  }
  C2stResult out;
  out.auc = auc_midrank(scores, labels);
  out.score = 1.0 - 2.0 * std::fabs(out.auc - 0.5);
  return out;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct FidelityEntry {
  std::string category;
  std::string metric;
  std::string level;   // "aggregate", "column", or "pair"
  std::string column;  // column or "a|b" pair name, empty for aggregates
  double value = 0.0;
  std::string direction;  // "lower" or "higher"
};

struct FidelityReport {
  std::vector<FidelityEntry> entries;
  std::vector<std::string> warnings;
};

/// Full distributional-fidelity sweep: marginal, pairwise, conditional
/// (stratified on the treatment column), and joint metrics.
inline FidelityReport fidelity_report(const Table& real, const Table& synth,
                                      std::uint64_t seed = 0) {
  const auto& schema = *real.schema;
  FidelityReport report;
  auto add = [&](const std::string& cat, const std::string& metric, const std::string& level,
                 const std::string& column, double value, const std::string& dir) {
    report.entries.push_back({cat, metric, level, column, value, dir});
  };

  std::vector<double> nw_vals, ks_vals, tv_vals;
  for (const auto& meta : schema.columns) {
    const auto& rc = real.col(meta.name);
    const auto& sc = synth.col(meta.name);
    if (is_numeric_scaled(meta.kind)) {
      const double nw = normalized_wasserstein(rc, sc);
      const double ks = ks_complement(rc, sc);
      nw_vals.push_back(nw);
      ks_vals.push_back(ks);
      add("Marginal (cont.)", "Normalized Wasserstein", "column", meta.name, nw, "lower");
      add("Marginal (cont.)", "KSComplement", "column", meta.name, ks, "higher");
    } else {
      const double tv = tv_complement(rc, sc);
      tv_vals.push_back(tv);
      add("Marginal (disc.)", "TVComplement", "column", meta.name, tv, "higher");
    }
  }
  if (!nw_vals.empty()) {
    add("Marginal (cont.)", "Normalized Wasserstein (mean)", "aggregate", "", mean_of(nw_vals),
        "lower");
    add("Marginal (cont.)", "KSComplement (mean)", "aggregate", "", mean_of(ks_vals), "higher");
  }
  if (!tv_vals.empty())
    add("Marginal (disc.)", "TVComplement (mean)", "aggregate", "", mean_of(tv_vals), "higher");

  std::vector<double> corr_vals, su_vals, cont_vals;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    for (std::size_t j = i + 1; j < schema.columns.size(); ++j) {
      const auto& ma = schema.columns[i];
      const auto& mb = schema.columns[j];
      const std::string pair = ma.name + "|" + mb.name;
      const auto& ra = real.values[i];
      const auto& rb = real.values[j];
      const auto& sa = synth.values[i];
      const auto& sb = synth.values[j];
      const double su = su_similarity(ra, rb, sa, sb, ma.kind, mb.kind);
      su_vals.push_back(su);
      add("Pairwise (all vars)", "SU similarity", "pair", pair, su, "higher");
      if (is_numeric_scaled(ma.kind) && is_numeric_scaled(mb.kind)) {
        const double cs = correlation_similarity(ra, rb, sa, sb);
        corr_vals.push_back(cs);
        add("Pairwise (cont-cont.)", "CorrelationSimilarity", "pair", pair, cs, "higher");
      } else if (is_discrete(ma.kind) && is_discrete(mb.kind)) {
        const double cs = contingency_similarity(ra, rb, sa, sb);
        cont_vals.push_back(cs);
        add("Pairwise (disc-disc.)", "ContingencySimilarity", "pair", pair, cs, "higher");
      }
    }
  }
  if (!corr_vals.empty())
    add("Pairwise (cont-cont.)", "CorrelationSimilarity", "aggregate", "", mean_of(corr_vals),
        "higher");
  if (!su_vals.empty())
    add("Pairwise (all vars)", "SU similarity (mean)", "aggregate", "", mean_of(su_vals),
        "higher");
  if (!cont_vals.empty())
    add("Pairwise (disc-disc.)", "ContingencySimilarity (mean)", "aggregate", "",
        mean_of(cont_vals), "higher");

  const ConditionalFidelity cond = conditional_fidelity(real, synth, schema.treatment, 5, seed);
  for (const auto& w : cond.warnings) report.warnings.push_back(w);
  add("Conditional (all except C)", "Weighted MMD2", "aggregate", "", cond.weighted_mmd2,
      "lower");
  add("Conditional (all except C)", "Normalized MMD2 ratio vs real", "aggregate", "", cond.ratio,
      "lower");

  const EncodedPair enc = metric_encode(real, synth);
  add("Joint (all vars)", "Normalized Energy Distance", "aggregate", "",
      energy_distance_normalized(enc.real_full, enc.synth_full), "lower");
  const C2stResult c = c2st(enc.real_full, enc.synth_full, seed + 1);
  add("Joint (all vars)", "C2ST (AUC complement)", "aggregate", "", c.score, "higher");
  add("Joint (all vars)", "C2ST AUC", "aggregate", "", c.auc, "");
  return report;
}

}  // namespace causalmix
