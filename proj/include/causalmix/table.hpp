#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "causalmix/schema.hpp"

namespace causalmix {

/// Column-major mixed-type table. Continuous/integer columns hold raw floats,
/// binary columns hold {0,1}, categorical columns hold class indices.
struct Table {
  std::shared_ptr<const DatasetSchema> schema;
  std::size_t n_rows = 0;
  std::vector<std::vector<double>> values;  // one vector per schema column

  const std::vector<double>& col(const std::string& name) const {
    int idx = schema->column_index(name);
    if (idx < 0) throw InputError("table has no column '" + name + "'");
    return values[static_cast<std::size_t>(idx)];
  }

  Table select_rows(const std::vector<std::size_t>& rows) const {
    Table out;
    out.schema = schema;
    out.n_rows = rows.size();
    out.values.resize(values.size());
    for (std::size_t c = 0; c < values.size(); ++c) {
      out.values[c].reserve(rows.size());
      for (std::size_t r : rows) out.values[c].push_back(values[c][r]);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

/// Shortest representation that round-trips; '.' decimal separator.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline double parse_cell(const ColumnMeta& meta, const std::string& raw,
                         std::size_t row_1based) {
  const std::string cell = trim(raw);
  auto fail = [&](const std::string& why) -> double {
    std::ostringstream os;
    os << "row " << row_1based << ", column '" << meta.name << "': " << why
       << " (got '" << cell << "')";
    throw InputError(os.str());
  };
  if (cell.empty()) return fail("missing value");
  switch (meta.kind) {
    case ColumnKind::continuous:
    case ColumnKind::integer: {
      double v;
      if (!parse_double(cell, v)) return fail("unparsable numeric cell");
      if (!std::isfinite(v)) return fail("non-finite value");
      return v;
    }
    case ColumnKind::binary: {
      double v;
      if (!parse_double(cell, v)) return fail("unparsable binary cell");
      if (v != 0.0 && v != 1.0) return fail("binary value outside {0,1}");
      return v;
    }
    case ColumnKind::categorical: {
      for (int k = 0; k < meta.num_classes; ++k)
        if (meta.categories[static_cast<std::size_t>(k)] == cell) return k;
      return fail("unknown categorical label");
    }
  }
  return fail("unhandled column kind");
}

}  // namespace detail

/// Loads a strict CSV: UTF-8, comma separated, header row that covers the
/// schema columns (order-insensitive). When allow_extra_columns is set,
/// non-schema columns are ignored (used for synthetic tables that carry
/// potential-outcome and ground-truth columns).
inline Table load_csv(const std::string& path, const DatasetSchema& schema,
                      bool allow_extra_columns = false) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw InputError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("CSV file '" + path + "' is empty");
  const auto header = detail::split_csv_line(line);

  std::vector<int> field_of_column(schema.columns.size(), -1);
  for (std::size_t f = 0; f < header.size(); ++f) {
    const std::string name = detail::trim(header[f]);
    int idx = schema.column_index(name);
    if (idx >= 0) field_of_column[static_cast<std::size_t>(idx)] = static_cast<int>(f);
  }
  for (std::size_t c = 0; c < schema.columns.size(); ++c)
    if (field_of_column[c] < 0)
      throw InputError("CSV file '" + path + "' is missing schema column '" +
                       schema.columns[c].name + "'");
  if (!allow_extra_columns) {
    for (std::size_t f = 0; f < header.size(); ++f) {
      const std::string name = detail::trim(header[f]);
      if (schema.column_index(name) < 0)
        throw InputError("CSV file '" + path + "' has column '" + name +
                         "' not present in the schema");
    }
  }

  Table t;
  t.schema = std::make_shared<DatasetSchema>(schema);
  t.values.resize(schema.columns.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream os;
      os << "row " << row << ": expected " << header.size() << " fields, got "
         << fields.size();
      throw InputError(os.str());
    }
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& field = fields[static_cast<std::size_t>(field_of_column[c])];
      t.values[c].push_back(detail::parse_cell(schema.columns[c], field, row));
    }
  }
  t.n_rows = t.values.empty() ? 0 : t.values[0].size();
  return t;
}

/// Writes schema columns in schema order plus any extra columns appended
/// at the end (extras are written as plain numerics).
inline void write_csv(const Table& t, const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& extras = {}) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  const auto& schema = *t.schema;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c) out << ',';
    out << schema.columns[c].name;
  }
  for (const auto& [name, col] : extras) {
    (void)col;
    out << ',' << name;
  }
  out << '\n';
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out << ',';
      const auto& meta = schema.columns[c];
      const double v = t.values[c][r];
      if (meta.kind == ColumnKind::categorical) {
        const int k = static_cast<int>(v);
        if (k < 0 || k >= meta.num_classes)
          throw InputError("column '" + meta.name + "': categorical index out of range");
        out << meta.categories[static_cast<std::size_t>(k)];
      } else {
        out << detail::format_double(v);
      }
    }
    for (const auto& [name, col] : extras) {
      (void)name;
      out << ',' << detail::format_double(col[r]);
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace causalmix
