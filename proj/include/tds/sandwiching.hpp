#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/lp.hpp"
#include "tds/multi_index.hpp"

namespace tds {

inline constexpr std::size_t kSandwichMaxDim = 14;
inline constexpr std::size_t kVerifyMaxDim = 20;
inline constexpr double kSandwichMatrixCap = 2.5e7;  // dense constraint entries
inline constexpr double kSandwichTolerance = 1e-9;

// Multilinear polynomials p_down <= f <= p_up on {-1,1}^d.
struct SandwichPair {
  std::size_t dim = 0;
  unsigned degree = 0;
  std::vector<MultiIndex> indices;  // multilinear, |S| <= degree
  std::vector<double> up;
  std::vector<double> down;
  double gap = 0.0;             // E_unif[p_up - p_down]
  double coeff_bound = 0.0;     // max |coefficient| over both polynomials
  double dual_objective = 0.0;  // value of the measure LP certifying the gap
};

struct SandwichCheck {
  bool ok = false;
  double worst_violation = 0.0;
  double recomputed_gap = 0.0;
};

namespace detail {

// Cube point number `bits`: coordinate i is +1 when bit i is set.
inline void cube_point(std::size_t bits, std::size_t d, double* x) {
  for (std::size_t i = 0; i < d; ++i) x[i] = (bits >> i) & 1u ? 1.0 : -1.0;
}

inline double multilinear_monomial(const MultiIndex& s, const double* x) {
  double v = 1.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i]) v *= x[i];
  return v;
}

// Rows: cube points; columns: multilinear monomials.
inline Eigen::MatrixXd cube_design(std::size_t d, const std::vector<MultiIndex>& indices) {
  const std::size_t points = std::size_t{1} << d;
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(points), static_cast<Eigen::Index>(indices.size()));
  std::vector<double> x(d);
  for (std::size_t b = 0; b < points; ++b) {
    cube_point(b, d, x.data());
    for (std::size_t s = 0; s < indices.size(); ++s)
      phi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(s)) = multilinear_monomial(indices[s], x.data());
  }
  return phi;
}

inline Eigen::VectorXd cube_labels(const Concept& f, std::size_t d) {
  const std::size_t points = std::size_t{1} << d;
  Eigen::VectorXd y(static_cast<Eigen::Index>(points));
  std::vector<double> x(d);
  for (std::size_t b = 0; b < points; ++b) {
    cube_point(b, d, x.data());
    y[static_cast<Eigen::Index>(b)] = eval(f, std::span<const double>(x));
  }
  return y;
}

inline void check_sandwich_size(std::size_t d, unsigned degree) {
  if (d == 0) throw ConfigError("cube dimension must be positive");
  if (d > kSandwichMaxDim) throw BudgetRefused("sandwich LP dimension", static_cast<double>(d), kSandwichMaxDim);
  if (degree > d) throw ConfigError("sandwiching degree exceeds the dimension");
}

}  // namespace detail

inline double evaluate_multilinear(const std::vector<MultiIndex>& indices, const std::vector<double>& coef,
                                   std::span<const double> x) {
  double v = 0.0;
  for (std::size_t s = 0; s < indices.size(); ++s) v += coef[s] * detail::multilinear_monomial(indices[s], x.data());
  return v;
}

// Minimum L1 sandwiching gap at degree l, solved through the measure LP
//   max f.y - f.z  s.t.  Phi^T y = e_0,  Phi^T z = e_0,  y, z >= 0,
// whose multipliers are the coefficients of p_up (negated) and p_down.
inline SandwichPair exact_sandwich_lp(const Concept& f, std::size_t d, unsigned degree,
                                      const SimplexOptions& options = {}) {
  detail::check_sandwich_size(d, degree);
  detail::check_dim(f, d);
  const auto indices = enumerate_multilinear_indices(d, degree);
  const std::size_t n_idx = indices.size(), points = std::size_t{1} << d;
  const double entries = 2.0 * static_cast<double>(n_idx) * 2.0 * static_cast<double>(points);
  if (entries > kSandwichMatrixCap) throw BudgetRefused("sandwich LP constraint entries", entries, kSandwichMatrixCap);
  const Eigen::MatrixXd phi = detail::cube_design(d, indices);
  const Eigen::VectorXd y = detail::cube_labels(f, d);

  const auto rows = static_cast<Eigen::Index>(2 * n_idx), cols = static_cast<Eigen::Index>(2 * points);
  const auto ni = static_cast<Eigen::Index>(n_idx), np = static_cast<Eigen::Index>(points);
  LinearProgram lp;
  lp.A = Eigen::MatrixXd::Zero(rows, cols);
  lp.A.block(0, 0, ni, np) = phi.transpose();
  lp.A.block(ni, np, ni, np) = phi.transpose();
  lp.b = Eigen::VectorXd::Zero(rows);
  lp.b[0] = 1.0;   // the empty monomial comes first
  lp.b[ni] = 1.0;
  lp.c.resize(cols);
  lp.c.head(np) = -y;
  lp.c.tail(np) = y;
  lp.lower = Eigen::VectorXd::Zero(cols);
  lp.upper = Eigen::VectorXd::Constant(cols, std::numeric_limits<double>::infinity());
  const LpSolution sol = solve_lp(lp, options);
  if (sol.status != LpStatus::Optimal)
    throw NumericalError(std::string("sandwich LP ended with status ") + to_string(sol.status));

  SandwichPair pair;
  pair.dim = d;
  pair.degree = degree;
  pair.indices = indices;
  pair.up.resize(n_idx);
  pair.down.resize(n_idx);
  for (std::size_t s = 0; s < n_idx; ++s) {
    pair.up[s] = -sol.duals[static_cast<Eigen::Index>(s)];
    pair.down[s] = sol.duals[static_cast<Eigen::Index>(n_idx + s)];
  }
  pair.dual_objective = -sol.objective;
  // Nonconstant multilinear monomials average to zero on the cube.
  pair.gap = pair.up[0] - pair.down[0];
  double bound = 0.0;
  for (std::size_t s = 0; s < n_idx; ++s) bound = std::max({bound, std::abs(pair.up[s]), std::abs(pair.down[s])});
  pair.coeff_bound = bound;
  if (!(std::abs(pair.gap - pair.dual_objective) <= 1e-8))
    throw NumericalError("sandwich LP duality gap " + std::to_string(pair.gap - pair.dual_objective) +
                         " exceeds 1e-8");
  return pair;
}

// Optimal gap from the coefficient-space LP
//   min c_up[0] - c_down[0]  s.t.  Phi c_up - s_up = f,  Phi c_down + s_down = f,  s >= 0,
// an independent formulation used to cross-check exact_sandwich_lp.
inline double sandwich_gap_primal(const Concept& f, std::size_t d, unsigned degree, const SimplexOptions& options = {}) {
  detail::check_sandwich_size(d, degree);
  detail::check_dim(f, d);
  const auto indices = enumerate_multilinear_indices(d, degree);
  const Eigen::MatrixXd phi = detail::cube_design(d, indices);
  const Eigen::VectorXd y = detail::cube_labels(f, d);
  const auto ni = static_cast<Eigen::Index>(indices.size()), np = phi.rows();
  const double entries = 2.0 * static_cast<double>(np) * static_cast<double>(2 * ni + 2 * np);
  if (entries > kSandwichMatrixCap) throw BudgetRefused("primal sandwich LP entries", entries, kSandwichMatrixCap);
  LinearProgram lp;
  lp.A = Eigen::MatrixXd::Zero(2 * np, 2 * ni + 2 * np);
  lp.A.block(0, 0, np, ni) = phi;
  lp.A.block(np, ni, np, ni) = phi;
  lp.A.block(0, 2 * ni, np, np) = -Eigen::MatrixXd::Identity(np, np);
  lp.A.block(np, 2 * ni + np, np, np) = Eigen::MatrixXd::Identity(np, np);
  lp.b.resize(2 * np);
  lp.b << y, y;
  lp.c = Eigen::VectorXd::Zero(2 * ni + 2 * np);
  lp.c[0] = 1.0;
  lp.c[ni] = -1.0;
  const double inf = std::numeric_limits<double>::infinity();
  lp.lower = Eigen::VectorXd::Constant(2 * ni + 2 * np, 0.0);
  lp.upper = Eigen::VectorXd::Constant(2 * ni + 2 * np, inf);
  lp.lower.head(2 * ni).setConstant(-inf);
  SimplexOptions opt = options;
  opt.exact_resolve_max_rows = std::min<std::size_t>(opt.exact_resolve_max_rows, 128);
  const LpSolution sol = solve_lp(lp, opt);
  if (sol.status != LpStatus::Optimal)
    throw NumericalError(std::string("primal sandwich LP ended with status ") + to_string(sol.status));
  return sol.objective;
}

// Checks p_down <= f <= p_up on every cube point within 1e-9.
inline SandwichCheck verify_sandwich(const SandwichPair& pair, const Concept& f) {
  const std::size_t d = pair.dim;
  if (d == 0 || d > kVerifyMaxDim) throw ConfigError("verification enumerates at most 2^20 points");
  if (pair.up.size() != pair.indices.size() || pair.down.size() != pair.indices.size())
    throw InvalidInput("sandwich pair coefficient count does not match its indices");
  detail::check_dim(f, d);
  const std::size_t points = std::size_t{1} << d;
  std::vector<double> x(d);
  SandwichCheck out;
  double total = 0.0;
  for (std::size_t b = 0; b < points; ++b) {
    detail::cube_point(b, d, x.data());
    const double fx = eval(f, std::span<const double>(x));
    const double up = evaluate_multilinear(pair.indices, pair.up, x);
    const double down = evaluate_multilinear(pair.indices, pair.down, x);
    out.worst_violation = std::max({out.worst_violation, fx - up, down - fx});
    total += up - down;
  }
  out.recomputed_gap = total / static_cast<double>(points);
  out.ok = out.worst_violation <= kSandwichTolerance;
  return out;
}

inline json sandwich_to_json(const SandwichPair& p) {
  json up = json::object(), down = json::object();
  for (std::size_t s = 0; s < p.indices.size(); ++s) {
    up[index_key(p.indices[s])] = p.up[s];
    down[index_key(p.indices[s])] = p.down[s];
  }
  return {{"dim", p.dim},   {"degree", p.degree},          {"p_up", up},
          {"p_down", down}, {"gap", p.gap},                {"coeff_bound", p.coeff_bound},
          {"dual_certificate", p.dual_objective}};
}

inline SandwichPair sandwich_from_json(const json& j) {
  try {
    SandwichPair p;
    p.dim = j.at("dim").get<std::size_t>();
    p.degree = j.at("degree").get<unsigned>();
    p.indices = enumerate_multilinear_indices(p.dim, p.degree);
    for (const auto& a : p.indices) {
      const auto key = index_key(a);
      p.up.push_back(j.at("p_up").value(key, 0.0));
      p.down.push_back(j.at("p_down").value(key, 0.0));
    }
    p.gap = j.at("gap").get<double>();
    p.coeff_bound = j.at("coeff_bound").get<double>();
    p.dual_objective = j.value("dual_certificate", p.gap);
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed sandwich pair JSON: ") + e.what(), 0, 0);
  }
}

}  // namespace tds
