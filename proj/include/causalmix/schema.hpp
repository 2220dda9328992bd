#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causalmix/common.hpp"

namespace causalmix {

enum class ColumnKind { continuous, binary, categorical, integer };

inline const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::integer: return "integer";
  }
  return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "binary") return ColumnKind::binary;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "integer") return ColumnKind::integer;
  throw InputError("unknown column kind '" + s + "'");
}

/// A column is discrete if its values are category-like (binary/categorical);
/// integer columns ride the continuous pipeline.
inline bool is_discrete(ColumnKind k) {
  return k == ColumnKind::binary || k == ColumnKind::categorical;
}

inline bool is_numeric_scaled(ColumnKind k) {
  return k == ColumnKind::continuous || k == ColumnKind::integer;
}

struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  int num_classes = 0;                               // categorical only
  std::optional<std::pair<double, double>> bounds;   // raw units
  std::vector<std::string> categories;               // categorical only, ordered

  void validate() const {
    if (name.empty()) throw InputError("column with empty name");
    if (kind == ColumnKind::categorical) {
      if (num_classes < 2)
        throw InputError("column '" + name + "': categorical needs num_classes >= 2");
      if (static_cast<int>(categories.size()) != num_classes)
        throw InputError("column '" + name + "': categories length must equal num_classes");
    }
    if (bounds && !(bounds->first < bounds->second))
      throw InputError("column '" + name + "': bounds.low must be < bounds.high");
  }
};

struct DatasetSchema {
  std::vector<ColumnMeta> columns;
  std::string treatment;
  std::string outcome;
  std::vector<std::string> covariates;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const ColumnMeta& column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) throw InputError("schema has no column '" + name + "'");
    return columns[static_cast<std::size_t>(idx)];
  }

  std::vector<int> covariate_indices() const {
    std::vector<int> out;
    out.reserve(covariates.size());
    for (const auto& c : covariates) out.push_back(column_index(c));
    return out;
  }

  void validate() const {
    std::unordered_map<std::string, int> seen;
    for (const auto& c : columns) {
      c.validate();
      if (++seen[c.name] > 1) throw InputError("duplicate column '" + c.name + "'");
    }
    auto require = [&](const std::string& n, const char* role) {
      if (column_index(n) < 0)
        throw InputError(std::string(role) + " '" + n + "' does not resolve to a schema column");
    };
    require(treatment, "treatment");
    require(outcome, "outcome");
    if (column(treatment).kind != ColumnKind::binary)
      throw InputError("treatment column '" + treatment + "' must be binary");
    std::unordered_map<std::string, int> cov_seen;
    for (const auto& c : covariates) {
      require(c, "covariate");
      if (c == treatment || c == outcome)
        throw InputError("covariate '" + c + "' duplicates the treatment or outcome column");
      if (++cov_seen[c] > 1) throw InputError("duplicate covariate '" + c + "'");
    }
  }
};

inline nlohmann::json schema_to_json(const DatasetSchema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) {
    nlohmann::json jc{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.kind == ColumnKind::categorical) {
      jc["num_classes"] = c.num_classes;
      jc["categories"] = c.categories;
    }
    if (c.bounds) jc["bounds"] = {c.bounds->first, c.bounds->second};
    cols.push_back(jc);
  }
  return nlohmann::json{{"columns", cols},
                        {"treatment", s.treatment},
                        {"outcome", s.outcome},
                        {"covariates", s.covariates}};
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  if (!j.contains("columns") || !j["columns"].is_array())
    throw InputError("schema JSON: missing 'columns' array");
  for (const auto& jc : j["columns"]) {
    ColumnMeta c;
    c.name = jc.at("name").get<std::string>();
    c.kind = column_kind_from_string(jc.at("kind").get<std::string>());
    if (c.kind == ColumnKind::categorical) {
      c.categories = jc.at("categories").get<std::vector<std::string>>();
      c.num_classes = jc.contains("num_classes") ? jc["num_classes"].get<int>()
                                                 : static_cast<int>(c.categories.size());
    }
    if (jc.contains("bounds")) {
      auto b = jc["bounds"];
      if (!b.is_array() || b.size() != 2)
        throw InputError("column '" + c.name + "': bounds must be a [low, high] pair");
      c.bounds = std::make_pair(b[0].get<double>(), b[1].get<double>());
    }
    s.columns.push_back(std::move(c));
  }
  s.treatment = j.at("treatment").get<std::string>();
  s.outcome = j.at("outcome").get<std::string>();
  s.covariates = j.at("covariates").get<std::vector<std::string>>();
  s.validate();
  return s;
}

inline DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("schema file '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

/// Stable fingerprint used to detect bundle/schema drift.
inline std::string schema_hash(const DatasetSchema& s) {
  return fnv1a64_hex(schema_to_json(s).dump());
}

}  // namespace causalmix
