#pragma once

#include <cmath>
#include <memory>

#include "causalmix/losses.hpp"
#include "causalmix/rng.hpp"
#include "causalmix/table.hpp"

namespace causalmix {

/// Bundled demo cohort: a seeded mixed-type table from a two-cluster
/// structural causal model. A latent severity cluster c ~ Bernoulli(0.45)
/// drives strongly bimodal age and psa marginals and shifts every
/// comorbidity rate, so the joint distribution is multimodal rather than
/// a single Gaussian blob:
///
///   age       = N(56, 5.5) or N(76, 4.5) by cluster, clipped to [40, 95]
///   psa       = exp(N(1.6 + 1.4c, 0.4)), clipped to [0.5, 200]
///   charlson  = Binomial(12, 0.06 + 0.015*(age-40)/10 + 0.12c)
///   mets      = 1 + Binomial(4, 0.20 + 0.35c)
///   cvd       = Bernoulli(sigmoid(-2.4 + 0.03(age-60) + 1.1c))
///   dementia  = Bernoulli(sigmoid(-3.2 + 0.05(age-60) + 0.6c))
///   abi_prev  = Bernoulli(0.30)
///   race      = Categorical(0.62, 0.23, 0.15)
///   t         = Bernoulli(sigmoid(-0.25 + 0.5*abi_prev + 0.012(age-65)))
///   y(t)      = 0.15 + 0.10t + 0.04(age-65)/10 + 0.06cvd + 0.015charlson
///               + 0.03(mets-1)/4 + 0.03dementia + N(0, 0.12), y = y(T)
///
/// so the homogeneous ground truth is tau = 0.10, kappa = 0 (assignment
/// depends only on observed covariates), with mildly covariate-dependent
/// treatment assignment.
inline DatasetSchema demo_schema() {
  DatasetSchema s;
  s.columns = {
      {"age", ColumnKind::continuous, 0, std::make_pair(40.0, 95.0), {}},
      {"psa", ColumnKind::continuous, 0, std::make_pair(0.5, 200.0), {}},
      {"charlson", ColumnKind::integer, 0, std::make_pair(0.0, 12.0), {}},
      {"mets_sites", ColumnKind::integer, 0, std::make_pair(1.0, 5.0), {}},
      {"cvd", ColumnKind::binary, 0, std::nullopt, {}},
      {"dementia", ColumnKind::binary, 0, std::nullopt, {}},
      {"abiraterone_prev", ColumnKind::binary, 0, std::nullopt, {}},
      {"race", ColumnKind::categorical, 3, std::nullopt, {"white", "black", "other"}},
      {"t", ColumnKind::binary, 0, std::nullopt, {}},
      {"y", ColumnKind::continuous, 0, std::nullopt, {}},
  };
  s.treatment = "t";
  s.outcome = "y";
  s.covariates = {"age", "psa", "charlson", "mets_sites", "cvd", "dementia",
                  "abiraterone_prev", "race"};
  s.validate();
  return s;
}

inline Table make_demo_table(std::size_t n, std::uint64_t seed) {
  const DatasetSchema schema = demo_schema();
  Table t;
  t.schema = std::make_shared<DatasetSchema>(schema);
  t.n_rows = n;
  t.values.assign(schema.columns.size(), std::vector<double>(n));
  Rng rng(seed);
  auto binomial = [&](int trials, double p) {
    int k = 0;
    for (int i = 0; i < trials; ++i)
      if (rng.bernoulli(p)) ++k;
    return static_cast<double>(k);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool cluster = rng.bernoulli(0.45);
    const double c = cluster ? 1.0 : 0.0;
    double age = cluster ? 76.0 + 4.5 * rng.normal() : 56.0 + 5.5 * rng.normal();
    age = std::min(std::max(age, 40.0), 95.0);
    double psa = std::exp(1.6 + 1.4 * c + 0.4 * rng.normal());
    psa = std::min(std::max(psa, 0.5), 200.0);
    const double p_charlson =
        std::min(std::max(0.06 + 0.015 * (age - 40.0) / 10.0 + 0.12 * c, 0.01), 0.95);
    const double charlson = binomial(12, p_charlson);
    const double mets = 1.0 + binomial(4, 0.20 + 0.35 * c);
    const double cvd = rng.bernoulli(sigmoid(-2.4 + 0.03 * (age - 60.0) + 1.1 * c)) ? 1.0 : 0.0;
    const double dementia =
        rng.bernoulli(sigmoid(-3.2 + 0.05 * (age - 60.0) + 0.6 * c)) ? 1.0 : 0.0;
    const double abi = rng.bernoulli(0.30) ? 1.0 : 0.0;
    const double u_race = rng.uniform();
    const double race = u_race < 0.62 ? 0.0 : (u_race < 0.85 ? 1.0 : 2.0);
    const double treat =
        rng.bernoulli(sigmoid(-0.25 + 0.5 * abi + 0.012 * (age - 65.0))) ? 1.0 : 0.0;
    const double noise = 0.12 * rng.normal();
    const double base = 0.15 + 0.04 * (age - 65.0) / 10.0 + 0.06 * cvd + 0.015 * charlson +
                        0.03 * (mets - 1.0) / 4.0 + 0.03 * dementia + noise;
    const double y = base + 0.10 * treat;

    t.values[0][i] = age;
    t.values[1][i] = psa;
    t.values[2][i] = charlson;
    t.values[3][i] = mets;
    t.values[4][i] = cvd;
    t.values[5][i] = dementia;
    t.values[6][i] = abi;
    t.values[7][i] = race;
    t.values[8][i] = treat;
    t.values[9][i] = y;
  }
  return t;
}

}  // namespace causalmix
