#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalmix/schema.hpp"
#include "causalmix/table.hpp"

namespace causalmix {

/// Expression AST for the causal control functions. Value-semantic tree;
/// immutable after parse, safe to evaluate concurrently.
struct Expr {
  enum class Kind { number, covariate, treatment, unary_minus, binary, call };
  enum class BinOp { add, sub, mul, div };

  Kind kind = Kind::number;
  double number = 0.0;
  std::string name;  // covariate or function name
  BinOp op = BinOp::add;
  std::vector<Expr> children;
};

class ExprError : public InputError {
public:
  ExprError(const std::string& msg, std::size_t offset)
      : InputError(msg + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

namespace detail {

struct ExprParser {
  std::string_view src;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ExprError(msg, pos); }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      skip_ws();
      if (eat('+')) {
        Expr node;
        node.kind = Expr::Kind::binary;
        node.op = Expr::BinOp::add;
        node.children = {std::move(lhs), parse_term()};
        lhs = std::move(node);
      } else if (eat('-')) {
        Expr node;
        node.kind = Expr::Kind::binary;
        node.op = Expr::BinOp::sub;
        node.children = {std::move(lhs), parse_term()};
        lhs = std::move(node);
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_factor();
    for (;;) {
      skip_ws();
      if (eat('*')) {
        Expr node;
        node.kind = Expr::Kind::binary;
        node.op = Expr::BinOp::mul;
        node.children = {std::move(lhs), parse_factor()};
        lhs = std::move(node);
      } else if (eat('/')) {
        Expr node;
        node.kind = Expr::Kind::binary;
        node.op = Expr::BinOp::div;
        node.children = {std::move(lhs), parse_factor()};
        lhs = std::move(node);
      } else {
        return lhs;
      }
    }
  }

  Expr parse_factor() {
    skip_ws();
    if (pos >= src.size()) fail("unexpected end of expression");
    const char c = src[pos];
    if (c == '-') {
      ++pos;
      Expr node;
      node.kind = Expr::Kind::unary_minus;
      node.children = {parse_factor()};
      return node;
    }
    if (c == '(') {
      ++pos;
      Expr inner = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    const std::size_t start = pos;
    while (pos < src.size() &&
           (std::isdigit(static_cast<unsigned char>(src[pos])) || src[pos] == '.' ||
            src[pos] == 'e' || src[pos] == 'E' ||
            ((src[pos] == '+' || src[pos] == '-') && pos > start &&
             (src[pos - 1] == 'e' || src[pos - 1] == 'E'))))
      ++pos;
    double v = 0.0;
    const std::string text(src.substr(start, pos - start));
    try {
      std::size_t consumed = 0;
      v = std::stod(text, &consumed);
      if (consumed != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      pos = start;
      fail("invalid numeric literal '" + text + "'");
    }
    Expr node;
    node.kind = Expr::Kind::number;
    node.number = v;
    return node;
  }

  Expr parse_ident() {
    const std::size_t start = pos;
    while (pos < src.size() && (std::isalnum(static_cast<unsigned char>(src[pos])) ||
                                src[pos] == '_'))
      ++pos;
    const std::string name(src.substr(start, pos - start));
    skip_ws();
    if (pos < src.size() && src[pos] == '(') {
      ++pos;
      std::vector<Expr> args;
      args.push_back(parse_expr());
      while (eat(',')) args.push_back(parse_expr());
      if (!eat(')')) fail("expected ')'");
      int want = 0;
      if (name == "tanh" || name == "exp" || name == "log" || name == "abs")
        want = 1;
      else if (name == "min" || name == "max")
        want = 2;
      else {
        pos = start;
        fail("unknown function '" + name + "'");
      }
      if (static_cast<int>(args.size()) != want) {
        pos = start;
        fail("function '" + name + "' expects " + std::to_string(want) + " argument(s)");
      }
      Expr node;
      node.kind = Expr::Kind::call;
      node.name = name;
      node.children = std::move(args);
      return node;
    }
    Expr node;
    if (name == "T") {
      node.kind = Expr::Kind::treatment;
    } else {
      node.kind = Expr::Kind::covariate;
      node.name = name;
    }
    return node;
  }
};

}  // namespace detail

inline Expr parse_expression(const std::string& source) {
  detail::ExprParser p{source};
  Expr root = p.parse_expr();
  p.skip_ws();
  if (p.pos != source.size()) p.fail("trailing input");
  return root;
}

/// Fully parenthesized form; reparses to a tree that evaluates identically.
inline std::string pretty_print(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::number: {
      std::ostringstream os;
      os.precision(17);
      os << e.number;
      return os.str();
    }
    case Expr::Kind::covariate: return e.name;
    case Expr::Kind::treatment: return "T";
    case Expr::Kind::unary_minus: return "(-" + pretty_print(e.children[0]) + ")";
    case Expr::Kind::binary: {
      const char* op = e.op == Expr::BinOp::add   ? " + "
                       : e.op == Expr::BinOp::sub ? " - "
                       : e.op == Expr::BinOp::mul ? " * "
                                                  : " / ";
      return "(" + pretty_print(e.children[0]) + op + pretty_print(e.children[1]) + ")";
    }
    case Expr::Kind::call: {
      std::string out = e.name + "(" + pretty_print(e.children[0]);
      for (std::size_t i = 1; i < e.children.size(); ++i)
        out += ", " + pretty_print(e.children[i]);
      return out + ")";
    }
  }
  return "";
}

/// Checks that every covariate reference resolves against the schema and that
/// the treatment symbol appears only where permitted.
inline void validate_expression(const Expr& e, const DatasetSchema& schema,
                                bool allow_treatment) {
  switch (e.kind) {
    case Expr::Kind::covariate: {
      for (const auto& c : schema.covariates)
        if (c == e.name) return;
      throw InputError("unknown covariate '" + e.name + "' in control expression");
    }
    case Expr::Kind::treatment:
      if (!allow_treatment)
        throw InputError("treatment symbol T is not allowed in this control expression");
      return;
    default:
      for (const auto& child : e.children) validate_expression(child, schema, allow_treatment);
  }
}

/// Row context for evaluation: raw-scale covariate values plus an optional
/// treatment value.
struct ExprRow {
  const DatasetSchema* schema = nullptr;
  const Table* table = nullptr;
  std::size_t row = 0;
  std::optional<double> treatment;

  double covariate(const std::string& name) const {
    const int idx = table->schema->column_index(name);
    if (idx < 0) throw InputError("row has no covariate '" + name + "'");
    return table->values[static_cast<std::size_t>(idx)][row];
  }
};

inline double evaluate_expression(const Expr& e, const ExprRow& row) {
  switch (e.kind) {
    case Expr::Kind::number: return e.number;
    case Expr::Kind::covariate: return row.covariate(e.name);
    case Expr::Kind::treatment:
      if (!row.treatment)
        throw InputError("expression uses T but no treatment value was supplied");
      return *row.treatment;
    case Expr::Kind::unary_minus: return -evaluate_expression(e.children[0], row);
    case Expr::Kind::binary: {
      const double a = evaluate_expression(e.children[0], row);
      const double b = evaluate_expression(e.children[1], row);
      switch (e.op) {
        case Expr::BinOp::add: return a + b;
        case Expr::BinOp::sub: return a - b;
        case Expr::BinOp::mul: return a * b;
        case Expr::BinOp::div:
          if (b == 0.0) throw NumericError("division by zero in control expression");
          return a / b;
      }
      return 0.0;
    }
    case Expr::Kind::call: {
      const double a = evaluate_expression(e.children[0], row);
      if (e.name == "tanh") return std::tanh(a);
      if (e.name == "exp") return std::exp(a);
      if (e.name == "abs") return std::fabs(a);
      if (e.name == "log") {
        if (!(a > 0.0)) throw NumericError("log of non-positive value in control expression");
        return std::log(a);
      }
      const double b = evaluate_expression(e.children[1], row);
      return e.name == "min" ? std::min(a, b) : std::max(a, b);
    }
  }
  return 0.0;
}

/// User-specified causal levers: effect, confounding, and log-overlap
/// expressions plus the heterogeneity scale.
struct ControlSpec {
  Expr tau;
  Expr kappa;
  Expr log_alpha;
  double eta = 1.0;
  // Original sources kept for serialization and reporting.
  std::string tau_source;
  std::string kappa_source;
  std::string log_alpha_source;

  void validate(const DatasetSchema& schema) const {
    validate_expression(tau, schema, /*allow_treatment=*/false);
    validate_expression(log_alpha, schema, /*allow_treatment=*/false);
    validate_expression(kappa, schema, /*allow_treatment=*/true);
    if (!(eta >= 0.0)) throw InputError("heterogeneity scale eta must be >= 0");
  }
};

inline ControlSpec control_spec_from_json(const nlohmann::json& j) {
  ControlSpec spec;
  spec.tau_source = j.at("tau").get<std::string>();
  spec.kappa_source = j.at("kappa").get<std::string>();
  spec.log_alpha_source = j.at("log_alpha").get<std::string>();
  spec.tau = parse_expression(spec.tau_source);
  spec.kappa = parse_expression(spec.kappa_source);
  spec.log_alpha = parse_expression(spec.log_alpha_source);
  if (j.contains("eta")) spec.eta = j["eta"].get<double>();
  return spec;
}

inline nlohmann::json control_spec_to_json(const ControlSpec& spec) {
  return nlohmann::json{{"tau", spec.tau_source},
                        {"kappa", spec.kappa_source},
                        {"log_alpha", spec.log_alpha_source},
                        {"eta", spec.eta}};
}

inline ControlSpec load_control_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("scenario file '" + path + "': " + e.what());
  }
  return control_spec_from_json(j);
}

/// Rescales per-row deviations from the mean: out_i = mean + eta*(x_i - mean).
/// The mean is preserved exactly.
inline std::vector<double> scale_heterogeneity(const std::vector<double>& tau_values,
                                               double eta) {
  if (tau_values.empty()) throw InputError("scale_heterogeneity: empty input");
  if (eta == 1.0) return tau_values;  // exact identity at the default
  const double mean = std::accumulate(tau_values.begin(), tau_values.end(), 0.0) /
                      static_cast<double>(tau_values.size());
  std::vector<double> out(tau_values.size());
  for (std::size_t i = 0; i < tau_values.size(); ++i)
    out[i] = mean + eta * (tau_values[i] - mean);
  return out;
}

/// Evaluates the three control functions on every row of a raw-scale table.
/// tau receives the heterogeneity scaling; kappa uses the table's treatment
/// column unless an override is supplied.
struct ControlTargets {
  std::vector<double> tau;
  std::vector<double> kappa;
  std::vector<double> log_alpha;
};

inline ControlTargets evaluate_targets(const ControlSpec& spec, const Table& table,
                                       const std::vector<double>* treatment_override = nullptr) {
  ControlTargets out;
  out.tau.resize(table.n_rows);
  out.kappa.resize(table.n_rows);
  out.log_alpha.resize(table.n_rows);
  const auto& t_col =
      treatment_override ? *treatment_override : table.col(table.schema->treatment);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    ExprRow row{table.schema.get(), &table, r, std::nullopt};
    out.tau[r] = evaluate_expression(spec.tau, row);
    out.log_alpha[r] = evaluate_expression(spec.log_alpha, row);
    row.treatment = t_col[r];
    out.kappa[r] = evaluate_expression(spec.kappa, row);
  }
  out.tau = scale_heterogeneity(out.tau, spec.eta);
  return out;
}

}  // namespace causalmix
