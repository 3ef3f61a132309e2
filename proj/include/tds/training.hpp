#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/distributions.hpp"
#include "tds/estimates.hpp"
#include "tds/lp.hpp"
#include "tds/multi_index.hpp"

namespace tds {

enum class RegressionLoss { L1, L2 };

struct PolyRegression {
  unsigned degree = 1;
  RegressionLoss loss = RegressionLoss::L2;
};

// Heuristic proper learner for intersections of k halfspaces. No optimality claim.
struct ProperIntersectionERM {
  std::size_t k = 1;
  std::size_t restarts = 4;
  std::size_t iterations = 10;
};

// Returns a controlled perturbation of a known concept: its basis rotated so that
// |W - V|_2 = basis_rotation, and/or one boundary translated until the Gaussian
// disagreement with the truth is within [0.8, 1.2] * disagreement_target.
struct PlantedOracle {
  Concept truth = ConstantLabel{};
  double basis_rotation = 0.0;
  double disagreement_target = 0.0;
  std::size_t calibration_samples = 200000;
};

using TrainerSpec = std::variant<PolyRegression, ProperIntersectionERM, PlantedOracle>;

struct TrainingReport {
  Concept hypothesis = ConstantLabel{};
  double err_train = 0.0;  // 0-1 error on the holdout split
  double wall_time = 0.0;  // seconds
  json details = json::object();
};

inline constexpr double kHoldoutFraction = 0.2;
inline constexpr double kRidge = 1e-8;

// Threshold t minimizing the 0-1 error of sign(score - t) (ties to +1), over
// -inf, the midpoints of consecutive distinct sorted scores, and +inf. Ties go
// to the smallest t. Returns (t, error fraction).
inline std::pair<double, double> fit_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch(scores.size(), labels.size());
  if (scores.empty()) throw InvalidInput("threshold fit needs at least one score");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  long errors = 0;
  for (int y : labels) errors += y < 0;
  long best = errors;
  double best_t = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    errors += labels[order[i]] > 0 ? 1 : -1;  // point i moves below the threshold
    const bool last = i + 1 == n;
    if (!last && scores[order[i]] == scores[order[i + 1]]) continue;
    if (errors < best) {
      best = errors;
      if (last) {
        best_t = std::numeric_limits<double>::infinity();
      } else {
        const double a = scores[order[i]], b = scores[order[i + 1]];
        double t = a + (b - a) / 2.0;
        if (t <= a) t = b;
        best_t = t;
      }
    }
  }
  return {best_t, static_cast<double>(best) / static_cast<double>(n)};
}

inline double zero_one_error(const Concept& h, const LabeledDataset& data) {
  std::vector<int> pred(data.size());
  eval_many(h, data.data().data(), data.size(), data.dim(), pred.data());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) wrong += pred[i] != data.labels()[i];
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Spectral norm of the difference of two k x d matrices.
inline double spectral_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size() || a.empty()) throw InvalidInput("basis shapes differ");
  const auto k = static_cast<Eigen::Index>(a.size()), d = static_cast<Eigen::Index>(a.front().size());
  Eigen::MatrixXd diff(k, d);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < d; ++j) diff(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(diff);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

namespace detail {

inline Eigen::MatrixXd feature_matrix(const Dataset& ds, const std::vector<MultiIndex>& indices) {
  const MonomialPlan plan(indices);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(indices.size()));
  std::vector<double> row(indices.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    plan.evaluate(ds.point(j).data(), row.data());
    for (std::size_t i = 0; i < indices.size(); ++i) phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = row[i];
  }
  return phi;
}

inline Eigen::VectorXd labels_vector(const LabeledDataset& data) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.labels()[i];
  return y;
}

inline Eigen::VectorXd fit_l2(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y) {
  Eigen::MatrixXd g = phi.transpose() * phi;
  g.diagonal().array() += kRidge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericalError("normal equations are singular");
  return ldlt.solve(phi.transpose() * y);
}

// Least absolute deviations through the LP dual
//   max y.lambda  s.t.  Phi^T lambda = 0,  -1 <= lambda <= 1,
// whose simplex multipliers are minus the optimal coefficients.
inline Eigen::VectorXd fit_l1(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, double* objective = nullptr) {
  LinearProgram lp;
  lp.A = phi.transpose();
  lp.b = Eigen::VectorXd::Zero(phi.cols());
  lp.c = -y;
  lp.lower = Eigen::VectorXd::Constant(phi.rows(), -1.0);
  lp.upper = Eigen::VectorXd::Constant(phi.rows(), 1.0);
  SimplexOptions opt;
  opt.exact_resolve_max_rows = 0;
  const auto sol = solve_lp(lp, opt);
  if (sol.status != LpStatus::Optimal)
    throw NumericalError(std::string("L1 regression LP ended with status ") + to_string(sol.status));
  if (objective) *objective = -sol.objective;
  return -sol.duals;
}

inline Concept threshold_concept(std::size_t d, unsigned degree, const std::vector<MultiIndex>& indices,
                                 const Eigen::VectorXd& coef, double t) {
  if (t == -std::numeric_limits<double>::infinity()) return ConstantLabel{1, d};
  if (t == std::numeric_limits<double>::infinity()) return ConstantLabel{-1, d};
  PolynomialThreshold p{d, degree, {}, t};
  for (std::size_t i = 0; i < indices.size(); ++i)
    if (coef[static_cast<Eigen::Index>(i)] != 0.0) p.coeffs[indices[i]] = coef[static_cast<Eigen::Index>(i)];
  return p;
}

inline Concept train_poly(const PolyRegression& spec, const LabeledDataset& fit, json& details) {
  if (spec.degree < 1) throw ConfigError("regression degree must be at least 1");
  const std::size_t d = fit.dim();
  const auto indices = enumerate_multi_indices(d, spec.degree);
  const Eigen::MatrixXd phi = feature_matrix(fit.data(), indices);
  const Eigen::VectorXd y = labels_vector(fit);
  Eigen::VectorXd coef;
  if (spec.loss == RegressionLoss::L2) {
    coef = fit_l2(phi, y);
  } else {
    double obj = 0.0;
    coef = fit_l1(phi, y, &obj);
    details["l1_objective"] = obj;
  }
  const Eigen::VectorXd scores = phi * coef;
  const auto [t, err] = fit_threshold(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                                      fit.labels());
  details["fit_error"] = err;
  return threshold_concept(d, spec.degree, indices, coef, t);
}

// Best threshold for halfspace `i` with the others held fixed. Points outside the
// other halfspaces are labeled -1 whatever tau is.
inline double best_tau(const std::vector<double>& w, const Dataset& X, const std::vector<int>& y,
                       const std::vector<char>& active) {
  std::vector<double> s;
  std::vector<int> lab;
  for (std::size_t j = 0; j < X.size(); ++j) {
    if (!active[j]) continue;
    double v = 0.0;
    const auto x = X.point(j);
    for (std::size_t a = 0; a < w.size(); ++a) v += w[a] * x[a];
    s.push_back(v);
    lab.push_back(y[j]);
  }
  if (s.empty()) return 0.0;
  auto [t, err] = fit_threshold(s, lab);
  if (t == -std::numeric_limits<double>::infinity()) t = *std::min_element(s.begin(), s.end()) - 1.0;
  if (t == std::numeric_limits<double>::infinity()) t = *std::max_element(s.begin(), s.end()) + 1.0;
  return t;
}

inline std::vector<char> active_without(const HalfspaceIntersection& f, std::size_t skip, const Dataset& X) {
  std::vector<char> active(X.size(), 1);
  for (std::size_t j = 0; j < X.size(); ++j)
    for (std::size_t i = 0; i < f.halfspaces.size(); ++i)
      if (i != skip && f.halfspaces[i].margin(X.point(j)) < 0.0) {
        active[j] = 0;
        break;
      }
  return active;
}

inline std::vector<double> normalized(std::vector<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (!(n > 0.0)) {
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

// Least-squares direction of y on (x, 1) over the active points.
inline std::vector<double> refit_direction(const Dataset& X, const std::vector<int>& y, const std::vector<char>& active) {
  const std::size_t d = X.dim();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd z(static_cast<Eigen::Index>(d + 1));
  for (std::size_t j = 0; j < X.size(); ++j) {
    if (!active[j]) continue;
    const auto x = X.point(j);
    for (std::size_t a = 0; a < d; ++a) z[static_cast<Eigen::Index>(a)] = x[a];
    z[static_cast<Eigen::Index>(d)] = 1.0;
    g.noalias() += z * z.transpose();
    r += y[j] * z;
  }
  g.diagonal().array() += kRidge;
  const Eigen::VectorXd beta = g.ldlt().solve(r);
  std::vector<double> w(d);
  for (std::size_t a = 0; a < d; ++a) w[a] = beta[static_cast<Eigen::Index>(a)];
  return normalized(std::move(w));
}

inline std::size_t count_errors(const HalfspaceIntersection& f, const Dataset& X, const std::vector<int>& y) {
  std::size_t wrong = 0;
  for (std::size_t j = 0; j < X.size(); ++j) wrong += (intersection_contains(f, X.point(j)) ? 1 : -1) != y[j];
  return wrong;
}

inline Concept train_intersection(const ProperIntersectionERM& spec, const LabeledDataset& fit, RngSpec rng,
                                  json& details) {
  if (spec.k < 1 || spec.restarts < 1) throw ConfigError("ERM needs k >= 1 and restarts >= 1");
  const Dataset& X = fit.data();
  const auto& y = fit.labels();
  const std::size_t d = X.dim();
  std::vector<double> mean(d, 0.0);
  for (std::size_t j = 0; j < X.size(); ++j)
    for (std::size_t a = 0; a < d; ++a) mean[a] += y[j] * X.point(j)[a];
  mean = normalized(std::move(mean));

  HalfspaceIntersection best;
  std::size_t best_err = std::numeric_limits<std::size_t>::max();
  for (std::size_t r = 0; r < spec.restarts; ++r) {
    CounterEngine eng(rng.child(r));
    HalfspaceIntersection f;
    for (std::size_t i = 0; i < spec.k; ++i) {
      std::vector<double> w = mean;
      const double jitter = (r == 0 && i == 0) ? 0.0 : 0.75;
      for (double& v : w) v += jitter * eng.normal();
      f.halfspaces.push_back({normalized(std::move(w)), 0.0});
    }
    for (std::size_t i = 0; i < spec.k; ++i)
      f.halfspaces[i].tau = best_tau(f.halfspaces[i].w, X, y, active_without(f, i, X));
    std::size_t err = count_errors(f, X, y);
    for (std::size_t it = 0; it < spec.iterations; ++it) {
      const std::size_t before = err;
      for (std::size_t i = 0; i < spec.k; ++i) {
        const auto active = active_without(f, i, X);
        f.halfspaces[i].tau = best_tau(f.halfspaces[i].w, X, y, active);
        err = count_errors(f, X, y);
        HalfspaceIntersection trial = f;
        trial.halfspaces[i].w = refit_direction(X, y, active);
        trial.halfspaces[i].tau = best_tau(trial.halfspaces[i].w, X, y, active);
        const std::size_t trial_err = count_errors(trial, X, y);
        if (trial_err < err) {
          f = std::move(trial);
          err = trial_err;
        }
      }
      if (err >= before && it > 0) break;
    }
    if (err < best_err) {
      best_err = err;
      best = f;
    }
  }
  details["fit_error"] = static_cast<double>(best_err) / static_cast<double>(X.size());
  return best;
}

// ---- planted perturbations ----

// Unit a in the row span of `rows`, unit b orthogonal to it.
inline std::pair<std::vector<double>, std::vector<double>> rotation_plane(const std::vector<std::vector<double>>& rows,
                                                                          CounterEngine& eng) {
  const std::size_t d = rows.front().size();
  std::vector<std::vector<double>> q;  // orthonormal basis of the span
  for (const auto& r : rows) {
    std::vector<double> v = r;
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 > 1e-18) {
      for (double& x : v) x /= std::sqrt(n2);
      q.push_back(std::move(v));
    }
  }
  if (q.size() >= d) throw ConfigError("planted rotation impossible: basis spans the whole space");
  std::vector<double> a(d, 0.0);
  for (const auto& u : q) {
    const double g = eng.normal();
    for (std::size_t i = 0; i < d; ++i) a[i] += g * u[i];
  }
  a = normalized(std::move(a));
  std::vector<double> b(d);
  for (;;) {
    for (double& x : b) x = eng.normal();
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += u[i] * b[i];
      for (std::size_t i = 0; i < d; ++i) b[i] -= dot * u[i];
    }
    double n2 = 0.0;
    for (double x : b) n2 += x * x;
    if (n2 > 1e-12) break;
  }
  return {a, normalized(std::move(b))};
}

// Rotates every row by angle theta in the plane (a, b).
inline std::vector<std::vector<double>> rotate_rows(const std::vector<std::vector<double>>& rows, const std::vector<double>& a,
                                                    const std::vector<double>& b, double theta) {
  auto out = rows;
  const double c = std::cos(theta), s = std::sin(theta);
  for (auto& r : out) {
    double ra = 0.0, rb = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) ra += a[i] * r[i], rb += b[i] * r[i];
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += (c - 1.0) * (ra * a[i] + rb * b[i]) + s * (ra * b[i] - rb * a[i]);
  }
  return out;
}

inline std::vector<std::vector<double>> halfspace_rows(const HalfspaceIntersection& f) {
  std::vector<std::vector<double>> rows;
  for (const auto& h : f.halfspaces) rows.push_back(h.w);
  return rows;
}

inline Concept rotate_concept(const Concept& truth, double delta_s, CounterEngine& eng, json& details) {
  if (delta_s == 0.0) return truth;
  auto rotate = [&](const std::vector<std::vector<double>>& rows) {
    const auto [a, b] = rotation_plane(rows, eng);
    // |W - V|_2 = |V a| * 2 sin(theta/2): the difference is the rank-one (V a) u^T.
    double va2 = 0.0;
    for (const auto& r : rows) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) dot += r[i] * a[i];
      va2 += dot * dot;
    }
    const double half = delta_s / (2.0 * std::sqrt(va2));
    if (half > 1.0) throw ConfigError("planted rotation impossible: requested basis distance too large");
    auto out = rotate_rows(rows, a, b, 2.0 * std::asin(half));
    details["basis_distance"] = spectral_distance(out, rows);
    return out;
  };
  if (const auto* j = std::get_if<SubspaceJunta>(&truth)) {
    SubspaceJunta r = *j;
    r.basis = rotate(j->basis);
    return r;
  }
  if (const auto* h = std::get_if<Halfspace>(&truth)) {
    Halfspace r = *h;
    r.w = rotate({h->w}).front();
    return r;
  }
  if (const auto* f = std::get_if<HalfspaceIntersection>(&truth)) {
    HalfspaceIntersection r = *f;
    const auto rows = rotate(halfspace_rows(*f));
    for (std::size_t i = 0; i < rows.size(); ++i) r.halfspaces[i].w = rows[i];
    return r;
  }
  throw ConfigError("planted rotation needs a concept with a basis (halfspace, intersection or junta)");
}

// Moves the first boundary of c by t (threshold += t).
inline Concept translate_concept(const Concept& c, double t) {
  if (const auto* h = std::get_if<Halfspace>(&c)) return Halfspace{h->w, h->tau + t};
  if (const auto* f = std::get_if<HalfspaceIntersection>(&c)) {
    auto r = *f;
    r.halfspaces.front().tau += t;
    return r;
  }
  if (const auto* p = std::get_if<PolynomialThreshold>(&c)) {
    auto r = *p;
    r.shift += t;
    return r;
  }
  if (const auto* j = std::get_if<SubspaceJunta>(&c)) {
    auto r = *j;
    r.inner = std::make_shared<const Concept>(translate_concept(*j->inner, t));
    return r;
  }
  throw ConfigError("planted translation needs a concept with a boundary");
}

inline Concept train_planted(const PlantedOracle& spec, std::size_t d, RngSpec rng, json& details) {
  if (!(spec.basis_rotation >= 0.0 && spec.basis_rotation < 1.0) ||
      !(spec.disagreement_target >= 0.0 && spec.disagreement_target < 1.0))
    throw ConfigError("planted slacks must lie in [0, 1)");
  validate(spec.truth);
  detail::check_dim(spec.truth, d);
  CounterEngine eng(rng.child(0));
  Concept h = rotate_concept(spec.truth, spec.basis_rotation, eng, details);
  if (spec.disagreement_target == 0.0) return h;

  // Bisection on the translation against a fixed Gaussian calibration sample.
  const Dataset cal = sample(StandardGaussian{d}, spec.calibration_samples, rng.child(1));
  std::vector<int> truth_labels(cal.size()), lab(cal.size());
  eval_many(spec.truth, cal.data(), cal.size(), d, truth_labels.data());
  auto disagreement = [&](double t) {
    const Concept c = translate_concept(h, t);
    eval_many(c, cal.data(), cal.size(), d, lab.data());
    std::size_t diff = 0;
    for (std::size_t i = 0; i < cal.size(); ++i) diff += lab[i] != truth_labels[i];
    return static_cast<double>(diff) / static_cast<double>(cal.size());
  };
  const double target = spec.disagreement_target;
  auto in_band = [&](double v) { return v >= 0.8 * target && v <= 1.2 * target; };
  double lo = 0.0, hi = 0.05, dlo = disagreement(0.0);
  if (dlo > 1.2 * target) throw ConfigError("planted rotation alone exceeds the disagreement target");
  double t = 0.0, dt = dlo;
  if (!in_band(dt)) {
    while (disagreement(hi) < target) {
      hi *= 2.0;
      if (hi > 100.0) throw ConfigError("planted translation cannot reach the disagreement target");
    }
    for (int it = 0; it < 100; ++it) {
      t = 0.5 * (lo + hi);
      dt = disagreement(t);
      if (in_band(dt) && std::abs(dt - target) <= 0.05 * target) break;
      if (dt < target) lo = t;
      else hi = t;
    }
    if (!in_band(dt)) throw ConfigError("planted translation could not land in the disagreement band");
  }
  details["translation"] = t;
  details["measured_disagreement"] = dt;
  return translate_concept(h, t);
}

}  // namespace detail

inline TrainingReport train(const TrainerSpec& spec, const LabeledDataset& data, RngSpec rng) {
  if (data.size() < 10) throw InvalidInput("training needs at least 10 labeled points");
  const auto start = std::chrono::steady_clock::now();
  auto [fit, holdout] = split_dataset(data, 1.0 - kHoldoutFraction, rng.child(0));
  TrainingReport report;
  report.hypothesis = std::visit(
      [&](const auto& s) -> Concept {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PolyRegression>) {
          report.details["trainer"] = "poly_regression";
          return detail::train_poly(s, fit, report.details);
        } else if constexpr (std::is_same_v<T, ProperIntersectionERM>) {
          report.details["trainer"] = "intersection_erm";
          return detail::train_intersection(s, fit, rng.child(1), report.details);
        } else {
          report.details["trainer"] = "planted_oracle";
          return detail::train_planted(s, data.dim(), rng.child(2), report.details);
        }
      },
      spec);
  report.err_train = zero_one_error(report.hypothesis, holdout);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---- JSON ----

inline json trainer_to_json(const TrainerSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PolyRegression>)
          return {{"type", "poly_regression"}, {"degree", s.degree}, {"loss", s.loss == RegressionLoss::L1 ? "l1" : "l2"}};
        else if constexpr (std::is_same_v<T, ProperIntersectionERM>)
          return {{"type", "intersection_erm"}, {"k", s.k}, {"restarts", s.restarts}, {"iterations", s.iterations}};
        else
          return {{"type", "planted_oracle"},
                  {"truth", concept_to_json(s.truth)},
                  {"basis_rotation", s.basis_rotation},
                  {"disagreement_target", s.disagreement_target},
                  {"calibration_samples", s.calibration_samples}};
      },
      spec);
}

inline TrainerSpec trainer_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "poly_regression") {
      const auto loss = j.value("loss", std::string("l2"));
      if (loss != "l1" && loss != "l2") throw ConfigError("loss must be l1 or l2");
      return PolyRegression{j.value("degree", 1u), loss == "l1" ? RegressionLoss::L1 : RegressionLoss::L2};
    }
    if (type == "intersection_erm")
      return ProperIntersectionERM{j.value("k", std::size_t{1}), j.value("restarts", std::size_t{4}),
                                   j.value("iterations", std::size_t{10})};
    if (type == "planted_oracle")
      return PlantedOracle{concept_from_json(j.at("truth")), j.value("basis_rotation", 0.0),
                           j.value("disagreement_target", 0.0), j.value("calibration_samples", std::size_t{200000})};
    throw ConfigError("unknown trainer type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed trainer JSON: ") + e.what());
  }
}

}  // namespace tds
