#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "causalmix/rng.hpp"
#include "causalmix/table.hpp"

namespace causalmix {

/// Model-space matrix: one column per schema column, continuous/integer
/// standardized, binary {0,1}, categorical class indices. One-hot expansion
/// happens at the VAE/metric boundary, not here.
using EncodedMatrix = Eigen::MatrixXd;

struct ColumnScaling {
  double mean = 0.0;
  double std = 1.0;
  double low = 0.0;   // raw-unit bounds, recorded at fit time
  double high = 0.0;
  bool scaled = false;  // true for continuous/integer columns
};

/// Reversible preprocessing fitted on a table. Standardization uses the
/// population (divide-by-n) convention.
struct PreprocessState {
  std::shared_ptr<const DatasetSchema> schema;
  std::vector<ColumnScaling> scalings;  // per schema column

  const ColumnScaling& scaling(const std::string& name) const {
    int idx = schema->column_index(name);
    if (idx < 0) throw InputError("no scaling for column '" + name + "'");
    return scalings[static_cast<std::size_t>(idx)];
  }
};

inline PreprocessState fit_preprocess(const Table& table) {
  if (table.n_rows == 0) throw InputError("fit_preprocess: table is empty");
  PreprocessState state;
  state.schema = table.schema;
  state.scalings.resize(table.schema->columns.size());
  const double n = static_cast<double>(table.n_rows);
  for (std::size_t c = 0; c < table.schema->columns.size(); ++c) {
    const auto& meta = table.schema->columns[c];
    const auto& col = table.values[c];
    ColumnScaling& s = state.scalings[c];
    double lo = col[0], hi = col[0];
    for (double v : col) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (meta.bounds) {
      s.low = meta.bounds->first;
      s.high = meta.bounds->second;
    } else {
      s.low = lo;
      s.high = hi;
    }
    if (is_numeric_scaled(meta.kind)) {
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      var /= n;
      const double sd = std::sqrt(var);
      if (!(sd > 0.0))
        throw InputError("column '" + meta.name + "' has zero variance and cannot be standardized");
      s.mean = mean;
      s.std = sd;
      s.scaled = true;
    }
  }
  return state;
}

inline EncodedMatrix transform(const Table& table, const PreprocessState& state) {
  if (schema_hash(*table.schema) != schema_hash(*state.schema))
    throw InputError("transform: table schema does not match preprocessing state");
  EncodedMatrix m(static_cast<Eigen::Index>(table.n_rows),
                  static_cast<Eigen::Index>(table.schema->columns.size()));
  for (std::size_t c = 0; c < table.schema->columns.size(); ++c) {
    const auto& s = state.scalings[c];
    for (std::size_t r = 0; r < table.n_rows; ++r) {
      const double v = table.values[c][r];
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          s.scaled ? (v - s.mean) / s.std : v;
    }
  }
  return m;
}

/// De-standardizes, clips continuous columns to recorded bounds, rounds and
/// clips integer columns, thresholds fractional binary values at 0.5, and
/// validates categorical indices.
inline Table inverse_transform(const EncodedMatrix& matrix, const PreprocessState& state) {
  const auto& schema = *state.schema;
  if (matrix.cols() != static_cast<Eigen::Index>(schema.columns.size()))
    throw InputError("inverse_transform: matrix column layout does not match state");
  Table t;
  t.schema = state.schema;
  t.n_rows = static_cast<std::size_t>(matrix.rows());
  t.values.assign(schema.columns.size(), std::vector<double>(t.n_rows));
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& meta = schema.columns[c];
    const auto& s = state.scalings[c];
    for (std::size_t r = 0; r < t.n_rows; ++r) {
      double v = matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      switch (meta.kind) {
        case ColumnKind::continuous:
          v = v * s.std + s.mean;
          v = std::min(std::max(v, s.low), s.high);
          break;
        case ColumnKind::integer:
          v = v * s.std + s.mean;
          v = std::round(v);
          v = std::min(std::max(v, std::ceil(s.low)), std::floor(s.high));
          break;
        case ColumnKind::binary:
          if (v != 0.0 && v != 1.0) v = v >= 0.5 ? 1.0 : 0.0;
          break;
        case ColumnKind::categorical: {
          const int k = static_cast<int>(std::llround(v));
          if (k < 0 || k >= meta.num_classes)
            throw InputError("column '" + meta.name + "': categorical index out of range");
          v = k;
          break;
        }
      }
      t.values[c][r] = v;
    }
  }
  return t;
}

/// Disjoint (train, validation) partition via a seeded shuffle. Sizes are
/// round(n*(1-f)) and the remainder; a pure function of (table, f, seed).
inline std::pair<Table, Table> split_train_val(const Table& table, double val_fraction,
                                               std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw InputError("split_train_val: fraction must lie in (0, 1)");
  if (table.n_rows < 5) throw InputError("split_train_val: need at least 5 rows");
  std::vector<std::size_t> order(table.n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(table.n_rows) * (1.0 - val_fraction)));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {table.select_rows(train), table.select_rows(val)};
}

}  // namespace causalmix
