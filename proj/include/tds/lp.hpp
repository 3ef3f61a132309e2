#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "tds/errors.hpp"

namespace tds {

// minimize c.x  subject to  A x = b,  lower <= x <= upper  (bounds may be infinite)
struct LinearProgram {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration limit";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::IterationLimit;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd duals;           // simplex multipliers, one per row
  Eigen::VectorXd reduced_costs;   // c - A^T duals
  std::vector<std::size_t> basis;  // column index per row; >= n marks a leftover artificial
  std::size_t iterations = 0;
  bool exact_resolve = false;
};

struct SimplexOptions {
  double tolerance = 1e-9;
  std::size_t max_iterations = 5'000'000;
  std::size_t refactor_every = 64;
  // Re-solve the final basis in rational arithmetic when the row count is at most this.
  std::size_t exact_resolve_max_rows = 256;
};

namespace detail {

using Rational = boost::multiprecision::cpp_rational;

// Solves M z = rhs exactly by Gauss-Jordan with the first nonzero pivot.
inline std::vector<Rational> solve_rational(std::vector<std::vector<Rational>> M, std::vector<Rational> rhs) {
  const std::size_t m = rhs.size();
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    while (piv < m && M[piv][col] == 0) ++piv;
    if (piv == m) throw NumericalError("final simplex basis is singular");
    std::swap(M[piv], M[col]);
    std::swap(rhs[piv], rhs[col]);
    const Rational inv = Rational(1) / M[col][col];
    for (std::size_t k = col; k < m; ++k) M[col][k] *= inv;
    rhs[col] *= inv;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col || M[r][col] == 0) continue;
      const Rational f = M[r][col];
      for (std::size_t k = col; k < m; ++k) M[r][k] -= f * M[col][k];
      rhs[r] -= f * rhs[col];
    }
  }
  return rhs;
}

class BoundedSimplex {
 public:
  enum class State { Basic, AtLower, AtUpper, Free };

  BoundedSimplex(const LinearProgram& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {
    m_ = static_cast<std::size_t>(lp.A.rows());
    n_ = static_cast<std::size_t>(lp.A.cols());
    if (static_cast<std::size_t>(lp.b.size()) != m_ || static_cast<std::size_t>(lp.c.size()) != n_ ||
        static_cast<std::size_t>(lp.lower.size()) != n_ || static_cast<std::size_t>(lp.upper.size()) != n_)
      throw InvalidInput("linear program has inconsistent shapes");
    for (std::size_t j = 0; j < n_; ++j)
      if (lp.lower[j] > lp.upper[j]) throw InvalidInput("variable " + std::to_string(j) + " has lower > upper");
    const std::size_t total = n_ + m_;
    lower_.resize(total);
    upper_.resize(total);
    x_.assign(total, 0.0);
    state_.assign(total, State::AtLower);
    art_sign_.assign(m_, 1.0);
    for (std::size_t j = 0; j < n_; ++j) {
      lower_[j] = lp.lower[j];
      upper_[j] = lp.upper[j];
      if (std::isfinite(lower_[j])) x_[j] = lower_[j], state_[j] = State::AtLower;
      else if (std::isfinite(upper_[j])) x_[j] = upper_[j], state_[j] = State::AtUpper;
      else x_[j] = 0.0, state_[j] = State::Free;
    }
    Eigen::VectorXd r = lp.b;
    for (std::size_t j = 0; j < n_; ++j)
      if (x_[j] != 0.0) r -= lp.A.col(static_cast<Eigen::Index>(j)) * x_[j];
    basis_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t a = n_ + i;
      art_sign_[i] = r[static_cast<Eigen::Index>(i)] >= 0 ? 1.0 : -1.0;
      lower_[a] = 0.0;
      upper_[a] = std::numeric_limits<double>::infinity();
      x_[a] = std::abs(r[static_cast<Eigen::Index>(i)]);
      state_[a] = State::Basic;
      basis_[i] = a;
    }
    binv_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i) binv_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = art_sign_[i];
  }

  LpSolution run() {
    LpSolution out;
    // Phase 1: drive the artificial sum to zero.
    std::vector<double> cost(n_ + m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) cost[n_ + i] = 1.0;
    LpStatus st = iterate(cost);
    out.iterations = iterations_;
    if (st == LpStatus::IterationLimit) {
      out.status = st;
      return out;
    }
    double infeas = 0.0;
    for (std::size_t i = 0; i < m_; ++i) infeas += x_[n_ + i];
    if (infeas > opt_.tolerance * (1.0 + lp_.b.lpNorm<1>()) * 10) {
      out.status = LpStatus::Infeasible;
      return out;
    }
    drive_out_artificials();
    for (std::size_t i = 0; i < m_; ++i) {
      upper_[n_ + i] = 0.0;
      if (state_[n_ + i] != State::Basic) x_[n_ + i] = 0.0;
    }
    // Phase 2.
    for (std::size_t j = 0; j < n_; ++j) cost[j] = lp_.c[static_cast<Eigen::Index>(j)];
    for (std::size_t i = 0; i < m_; ++i) cost[n_ + i] = 0.0;
    st = iterate(cost);
    out.iterations = iterations_;
    out.status = st;
    if (st != LpStatus::Optimal) return out;
    refactor();
    Eigen::VectorXd duals = compute_duals(cost);
    if (m_ <= opt_.exact_resolve_max_rows) {
      exact_resolve(cost, duals);
      out.exact_resolve = true;
    }
    out.x = Eigen::Map<const Eigen::VectorXd>(x_.data(), static_cast<Eigen::Index>(n_));
    out.objective = lp_.c.dot(out.x);
    out.duals = duals;
    out.reduced_costs = lp_.c - lp_.A.transpose() * duals;
    out.basis = basis_;
    return out;
  }

 private:
  // Column j of [A | diag(art_sign)].
  Eigen::VectorXd column(std::size_t j) const {
    if (j < n_) return lp_.A.col(static_cast<Eigen::Index>(j));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    e[static_cast<Eigen::Index>(j - n_)] = art_sign_[j - n_];
    return e;
  }

  double column_dot(std::size_t j, const Eigen::VectorXd& v) const {
    if (j < n_) return lp_.A.col(static_cast<Eigen::Index>(j)).dot(v);
    return art_sign_[j - n_] * v[static_cast<Eigen::Index>(j - n_)];
  }

  Eigen::VectorXd compute_duals(const std::vector<double>& cost) const {
    Eigen::VectorXd cb(static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i) cb[static_cast<Eigen::Index>(i)] = cost[basis_[i]];
    return binv_.transpose() * cb;
  }

  void refactor() {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    for (std::size_t i = 0; i < m_; ++i) B.col(static_cast<Eigen::Index>(i)) = column(basis_[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
    Eigen::VectorXd rhs = lp_.b;
    for (std::size_t j = 0; j < n_ + m_; ++j)
      if (state_[j] != State::Basic && x_[j] != 0.0) rhs -= column(j) * x_[j];
    const Eigen::VectorXd xb = binv_ * rhs;
    for (std::size_t i = 0; i < m_; ++i) x_[basis_[i]] = xb[static_cast<Eigen::Index>(i)];
  }

  LpStatus iterate(const std::vector<double>& cost) {
    const double tol = opt_.tolerance;
    std::size_t since_refactor = 0;
    for (;;) {
      if (iterations_ >= opt_.max_iterations) return LpStatus::IterationLimit;
      if (since_refactor >= opt_.refactor_every) {
        refactor();
        since_refactor = 0;
      }
      const Eigen::VectorXd pi = compute_duals(cost);
      // Bland: first eligible column by index.
      std::size_t q = n_ + m_;
      double dir = 0.0;
      for (std::size_t j = 0; j < n_ + m_; ++j) {
        if (state_[j] == State::Basic || lower_[j] == upper_[j]) continue;
        const double dj = cost[j] - column_dot(j, pi);
        if ((state_[j] == State::AtLower || state_[j] == State::Free) && dj < -tol) dir = 1.0;
        else if ((state_[j] == State::AtUpper || state_[j] == State::Free) && dj > tol) dir = -1.0;
        else continue;
        q = j;
        break;
      }
      if (q == n_ + m_) return LpStatus::Optimal;
      const Eigen::VectorXd alpha = binv_ * column(q);
      // x_B moves by -dir * t * alpha.
      double best = upper_[q] - lower_[q];
      std::size_t leave = m_;
      bool leave_to_upper = false;
      for (std::size_t r = 0; r < m_; ++r) {
        const double delta = -dir * alpha[static_cast<Eigen::Index>(r)];
        const std::size_t bv = basis_[r];
        double limit;
        bool to_upper;
        if (delta < -tol && std::isfinite(lower_[bv])) {
          limit = std::max(0.0, (x_[bv] - lower_[bv]) / -delta);
          to_upper = false;
        } else if (delta > tol && std::isfinite(upper_[bv])) {
          limit = std::max(0.0, (upper_[bv] - x_[bv]) / delta);
          to_upper = true;
        } else {
          continue;
        }
        if (limit < best || (limit == best && leave < m_ && bv < basis_[leave])) {
          best = limit;
          leave = r;
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(best)) return LpStatus::Unbounded;
      ++iterations_;
      ++since_refactor;
      for (std::size_t r = 0; r < m_; ++r) x_[basis_[r]] -= dir * best * alpha[static_cast<Eigen::Index>(r)];
      x_[q] += dir * best;
      if (leave == m_) {
        // Entering variable runs to its opposite bound; basis unchanged.
        state_[q] = dir > 0 ? State::AtUpper : State::AtLower;
        x_[q] = dir > 0 ? upper_[q] : lower_[q];
        continue;
      }
      const std::size_t out = basis_[leave];
      state_[out] = leave_to_upper ? State::AtUpper : State::AtLower;
      x_[out] = leave_to_upper ? upper_[out] : lower_[out];
      pivot(leave, q, alpha);
    }
  }

  void pivot(std::size_t r, std::size_t q, const Eigen::VectorXd& alpha) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double p = alpha[ri];
    binv_.row(ri) /= p;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m_); ++i)
      if (i != ri && alpha[i] != 0.0) binv_.row(i) -= alpha[i] * binv_.row(ri);
    basis_[r] = q;
    state_[q] = State::Basic;
  }

  // Degenerate pivots replacing basic artificials (all at zero) by structural columns.
  void drive_out_artificials() {
    for (std::size_t r = 0; r < m_; ++r) {
      if (basis_[r] < n_) continue;
      const Eigen::VectorXd row = binv_.row(static_cast<Eigen::Index>(r));
      for (std::size_t j = 0; j < n_; ++j) {
        if (state_[j] == State::Basic) continue;
        const double a = lp_.A.col(static_cast<Eigen::Index>(j)).dot(row);
        if (std::abs(a) <= 1e-7) continue;
        const Eigen::VectorXd alpha = binv_ * column(j);
        const std::size_t out = basis_[r];
        state_[out] = State::AtLower;
        x_[out] = 0.0;
        pivot(r, j, alpha);
        break;
      }
    }
    refactor();
  }

  // Recomputes basic values and multipliers of the final basis exactly.
  void exact_resolve(const std::vector<double>& cost, Eigen::VectorXd& duals) {
    std::vector<std::vector<Rational>> B(m_, std::vector<Rational>(m_)), Bt(m_, std::vector<Rational>(m_));
    for (std::size_t i = 0; i < m_; ++i) {
      const Eigen::VectorXd col = column(basis_[i]);
      for (std::size_t r = 0; r < m_; ++r) {
        B[r][i] = Rational(col[static_cast<Eigen::Index>(r)]);
        Bt[i][r] = B[r][i];
      }
    }
    std::vector<Rational> rhs(m_), cb(m_);
    for (std::size_t r = 0; r < m_; ++r) rhs[r] = Rational(lp_.b[static_cast<Eigen::Index>(r)]);
    for (std::size_t j = 0; j < n_; ++j) {
      if (state_[j] == State::Basic || x_[j] == 0.0) continue;
      const Rational xj(x_[j]);
      for (std::size_t r = 0; r < m_; ++r) {
        const double a = lp_.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        if (a != 0.0) rhs[r] -= Rational(a) * xj;
      }
    }
    for (std::size_t i = 0; i < m_; ++i) cb[i] = Rational(cost[basis_[i]]);
    const auto xb = solve_rational(B, rhs);
    const auto pi = solve_rational(Bt, cb);
    for (std::size_t i = 0; i < m_; ++i) {
      const double v = static_cast<double>(xb[i]);
      const std::size_t bv = basis_[i];
      const double slack = 1e-7 * (1.0 + std::abs(v));
      if (v < lower_[bv] - slack || v > upper_[bv] + slack)
        throw NumericalError("LP numerically degenerate: exact re-solve of the final basis is infeasible");
      x_[bv] = v;
    }
    for (std::size_t r = 0; r < m_; ++r) duals[static_cast<Eigen::Index>(r)] = static_cast<double>(pi[r]);
  }

  const LinearProgram& lp_;
  SimplexOptions opt_;
  std::size_t m_ = 0, n_ = 0;
  std::vector<double> lower_, upper_, x_, art_sign_;
  std::vector<State> state_;
  std::vector<std::size_t> basis_;
  Eigen::MatrixXd binv_;
  std::size_t iterations_ = 0;
};

}  // namespace detail

// Bounded-variable revised simplex, two phases, Bland's rule throughout.
inline LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options = {}) {
  return detail::BoundedSimplex(lp, options).run();
}

}  // namespace tds
