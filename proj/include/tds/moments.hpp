#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/errors.hpp"
#include "tds/multi_index.hpp"

namespace tds {

// Values indexed by the multi-indices of degree <= `degree`, in enumeration order.
// Serves both as a moment vector E[x^a] and a Chow vector E[f(x) x^a].
struct MomentTable {
  unsigned degree = 0;
  std::vector<MultiIndex> indices;
  std::vector<double> values;
  std::string source = "empirical";

  std::size_t size() const { return indices.size(); }

  double at(const MultiIndex& a) const {
    const auto it = std::lower_bound(indices.begin(), indices.end(), a);
    if (it == indices.end() || *it != a) throw InvalidInput("multi-index " + index_key(a) + " not in table");
    return values[static_cast<std::size_t>(it - indices.begin())];
  }
};

using MomentVector = MomentTable;
using ChowVector = MomentTable;

inline json to_json_value(const MomentTable& t) {
  json entries = json::object();
  for (std::size_t i = 0; i < t.size(); ++i) entries[index_key(t.indices[i])] = t.values[i];
  return json{{"degree", t.degree}, {"source", t.source}, {"entries", entries}};
}

inline MomentTable moment_table_from_json(const json& j) {
  MomentTable t;
  t.degree = j.at("degree").get<unsigned>();
  t.source = j.value("source", std::string("file"));
  std::vector<std::pair<MultiIndex, double>> rows;
  for (const auto& [key, v] : j.at("entries").items()) rows.emplace_back(parse_index_key(key), v.get<double>());
  std::sort(rows.begin(), rows.end());
  for (auto& [a, v] : rows) {
    t.indices.push_back(a);
    t.values.push_back(v);
  }
  if (!t.indices.empty()) {
    const auto expected = enumerate_multi_indices(t.indices.front().size(), t.degree);
    if (expected != t.indices) throw InvalidInput("moment table does not hold exactly the indices of its degree");
  }
  return t;
}

inline double double_factorial(int n) {
  double v = 1.0;
  for (int i = n; i > 1; i -= 2) v *= i;
  return v;
}

inline double gaussian_moment(const MultiIndex& a) {
  double v = 1.0;
  for (unsigned e : a) {
    if (e % 2) return 0.0;
    v *= double_factorial(static_cast<int>(e) - 1);
  }
  return v;
}

inline double cube_moment(const MultiIndex& a) {
  for (unsigned e : a)
    if (e % 2) return 0.0;
  return 1.0;
}

inline MomentTable gaussian_moment_table(std::size_t d, unsigned degree) {
  MomentTable t{degree, enumerate_multi_indices(d, degree), {}, "closed-form"};
  for (const auto& a : t.indices) t.values.push_back(gaussian_moment(a));
  return t;
}

inline MomentTable cube_moment_table(std::size_t d, unsigned degree) {
  MomentTable t{degree, enumerate_multi_indices(d, degree), {}, "closed-form"};
  for (const auto& a : t.indices) t.values.push_back(cube_moment(a));
  return t;
}

// Running sums of x^a and f(x) x^a over points fed in order. Each index is summed
// in input order, so splitting the input into chunks does not change any bit.
class MomentAccumulator {
 public:
  MomentAccumulator(std::size_t dim, unsigned degree)
      : dim_(dim), degree_(degree), indices_(enumerate_multi_indices(dim, degree)), plan_(indices_),
        moment_sums_(indices_.size(), 0.0), chow_sums_(indices_.size(), 0.0), mono_(indices_.size()) {}

  // labels may be null when only moments are needed.
  void add(const double* points, const int* labels, std::size_t count) {
    const std::size_t m = indices_.size();
    for (std::size_t j = 0; j < count; ++j) {
      plan_.evaluate(points + j * dim_, mono_.data());
      for (std::size_t i = 0; i < m; ++i) moment_sums_[i] += mono_[i];
      if (labels) {
        const double f = labels[j];
        for (std::size_t i = 0; i < m; ++i) chow_sums_[i] += f * mono_[i];
      }
    }
    count_ += count;
  }

  void add(const Dataset& ds, const Concept* f = nullptr) {
    if (ds.dim() != dim_) throw DimensionMismatch(dim_, ds.dim());
    if (!f) {
      add(ds.data(), nullptr, ds.size());
      return;
    }
    std::vector<int> labels(std::min<std::size_t>(ds.size(), 4096));
    for (std::size_t start = 0; start < ds.size(); start += labels.size()) {
      const std::size_t count = std::min(labels.size(), ds.size() - start);
      eval_many(*f, ds.data() + start * dim_, count, dim_, labels.data());
      add(ds.data() + start * dim_, labels.data(), count);
    }
  }

  std::size_t count() const { return count_; }
  const std::vector<MultiIndex>& indices() const { return indices_; }

  MomentVector moments() const { return finish(moment_sums_); }
  ChowVector chow() const { return finish(chow_sums_); }

 private:
  MomentTable finish(const std::vector<double>& sums) const {
    if (count_ == 0) throw InvalidInput("no points accumulated");
    MomentTable t{degree_, indices_, std::vector<double>(sums.size()), "empirical"};
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < sums.size(); ++i) {
      t.values[i] = sums[i] / n;
      if (!std::isfinite(t.values[i]))
        throw NumericalError("moment for index " + index_key(indices_[i]) + " overflowed");
    }
    return t;
  }

  std::size_t dim_;
  unsigned degree_;
  std::vector<MultiIndex> indices_;
  detail::MonomialPlan plan_;
  std::vector<double> moment_sums_;
  std::vector<double> chow_sums_;
  std::vector<double> mono_;
  std::size_t count_ = 0;
};

inline MomentVector empirical_moments(const Dataset& ds, unsigned degree) {
  MomentAccumulator acc(ds.dim(), degree);
  acc.add(ds);
  return acc.moments();
}

inline ChowVector empirical_chow(const Dataset& ds, const Concept& f, unsigned degree) {
  const std::size_t cd = concept_dim(f);
  if (cd != 0 && cd != ds.dim()) throw DimensionMismatch(cd, ds.dim());
  MomentAccumulator acc(ds.dim(), degree);
  acc.add(ds, &f);
  return acc.chow();
}

// ---- Gaussian CDF and cells ----

// Phi(x) through erfc, which is accurate to a few ulp across the range; the
// complement form avoids cancellation in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Phi(b) - Phi(a), computed on whichever side of zero loses less precision.
inline double normal_interval_probability(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) throw InvalidInput("interval bound is NaN");
  if (a > b) throw InvalidInput("inverted interval bounds");
  if (a == b) return 0.0;
  if (a >= 0.0) return 0.5 * (std::erfc(a / std::sqrt(2.0)) - std::erfc(b / std::sqrt(2.0)));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / std::sqrt(2.0)) - std::erfc(-a / std::sqrt(2.0)));
  return 1.0 - 0.5 * std::erfc(-a / std::sqrt(2.0)) - 0.5 * std::erfc(b / std::sqrt(2.0));
}

// Standard Gaussian mass of the box prod [lower_i, upper_i].
inline double gaussian_cell_probability(std::span<const double> lower, std::span<const double> upper) {
  if (lower.size() != upper.size()) throw DimensionMismatch(lower.size(), upper.size());
  double p = 1.0;
  for (std::size_t i = 0; i < lower.size(); ++i) p *= normal_interval_probability(lower[i], upper[i]);
  return p;
}

// ---- second moments and the top eigenvalue ----

// M = (1/n) sum x x^T, row-major d x d.
inline std::vector<double> second_moment_matrix(const Dataset& ds) {
  const std::size_t d = ds.dim(), n = ds.size();
  if (n == 0) throw InvalidInput("second moments of an empty dataset");
  std::vector<double> m(d * d, 0.0);
  const double* x = ds.data();
  for (std::size_t j = 0; j < n; ++j, x += d)
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = x[a];
      for (std::size_t b = a; b < d; ++b) m[a * d + b] += xa * x[b];
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      m[a * d + b] /= static_cast<double>(n);
      m[b * d + a] = m[a * d + b];
    }
  for (double v : m)
    if (!std::isfinite(v)) throw NumericalError("second-moment matrix has non-finite entries");
  return m;
}

inline constexpr double kJacobiTolerance = 1e-10;
inline constexpr std::size_t kJacobiMaxDim = 200;

// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, stopping once the
// off-diagonal Frobenius norm is <= tolerance. Returned in ascending order.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t d,
                                              double tolerance = kJacobiTolerance) {
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = 0; q < d; ++q)
        if (p != q) s += a[p * d + q] * a[p * d + q];
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < 100 && off_norm() > tolerance; ++sweep) {
    for (std::size_t p = 0; p + 1 < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double app = a[p * d + p], aqq = a[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t r = 0; r < d; ++r) {
          const double arp = a[r * d + p], arq = a[r * d + q];
          a[r * d + p] = c * arp - s * arq;
          a[r * d + q] = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < d; ++r) {
          const double apr = a[p * d + r], aqr = a[q * d + r];
          a[p * d + r] = c * apr - s * aqr;
          a[q * d + r] = s * apr + c * aqr;
        }
      }
  }
  if (off_norm() > tolerance) throw NumericalError("Jacobi iteration did not converge");
  std::vector<double> ev(d);
  for (std::size_t i = 0; i < d; ++i) ev[i] = a[i * d + i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

// Largest eigenvalue of a PSD matrix by power iteration from the all-ones vector:
// 1000 iterations, stopping early once successive Rayleigh quotients agree to 1e-8.
inline double power_iteration_max_eigenvalue(const std::vector<double>& a, std::size_t d) {
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d))), w(d);
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += a[r * d + c] * v[c];
      w[r] = s;
    }
    double num = 0.0, n2 = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      num += v[r] * w[r];
      n2 += w[r] * w[r];
    }
    const double n = std::sqrt(n2);
    if (n == 0.0) return 0.0;
    for (std::size_t r = 0; r < d; ++r) v[r] = w[r] / n;
    if (it > 0 && std::abs(num - lambda) <= 1e-8 * std::max(1.0, std::abs(num))) return num;
    lambda = num;
  }
  return lambda;
}

inline double symmetric_max_eigenvalue(const std::vector<double>& a, std::size_t d) {
  if (a.size() != d * d) throw DimensionMismatch(d * d, a.size());
  for (double v : a)
    if (!std::isfinite(v)) throw NumericalError("matrix has non-finite entries");
  if (d > kJacobiMaxDim) return power_iteration_max_eigenvalue(a, d);
  return jacobi_eigenvalues(a, d).back();
}

inline double max_eigenvalue(const Dataset& ds) {
  return symmetric_max_eigenvalue(second_moment_matrix(ds), ds.dim());
}

}  // namespace tds
