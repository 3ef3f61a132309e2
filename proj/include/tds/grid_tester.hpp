#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/distributions.hpp"
#include "tds/moments.hpp"
#include "tds/outcome.hpp"
#include "tds/training.hpp"

namespace tds {

inline constexpr double kDefaultCellCap = 1e7;
inline constexpr double kBasisTolerance = 1e-8;

// Axis-aligned grid of side eta over [-M eta, M eta)^k with M = ceil(R / eta).
// Cell i covers [i eta, (i+1) eta) on each axis, i in {-M, ..., M-1}.
struct GridSpec {
  double eta = 0.25;
  double R = 3.0;
  std::size_t k = 1;
  double cell_cap = kDefaultCellCap;

  std::int64_t half_cells() const { return static_cast<std::int64_t>(std::ceil(R / eta)); }
  double cell_count() const { return std::pow(2.0 * static_cast<double>(half_cells()), static_cast<double>(k)); }

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("grid side eta must be positive");
    if (!(R > 0.0) || !std::isfinite(R)) throw ConfigError("grid radius must be positive");
    if (k == 0) throw ConfigError("grid dimension must be positive");
    if (!(std::ceil(R / eta) < 1e15)) throw BudgetRefused("grid cells per axis", std::ceil(R / eta), 1e15);
    if (cell_count() > cell_cap) throw BudgetRefused("grid cell count", cell_count(), cell_cap);
  }

  // Cell index of z, or nothing when |z|_inf > R. A coordinate exactly on the upper
  // edge M eta (possible when R / eta is an integer) is assigned to the last cell.
  std::optional<std::vector<std::int64_t>> cell_of(std::span<const double> z) const {
    const std::int64_t m = half_cells();
    std::vector<std::int64_t> idx(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!(std::abs(z[i]) <= R)) return std::nullopt;
      auto c = static_cast<std::int64_t>(std::floor(z[i] / eta));
      idx[i] = std::clamp<std::int64_t>(c, -m, m - 1);
    }
    return idx;
  }

  std::pair<std::vector<double>, std::vector<double>> cell_box(const std::vector<std::int64_t>& idx) const {
    std::vector<double> lo(idx.size()), hi(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      lo[i] = static_cast<double>(idx[i]) * eta;
      hi[i] = static_cast<double>(idx[i] + 1) * eta;
    }
    return {lo, hi};
  }
};

struct GridTesterConfig {
  unsigned p = 2;
  double R = 3.0;
  StructuredProfile profile = gaussian_profile(1);
  double eta = 0.25;
  double epsilon = 0.1;
  double cell_cap = kDefaultCellCap;

  std::size_t k() const { return profile.k; }
  double mu_ac() const { return profile.mu_ac(R * std::sqrt(static_cast<double>(profile.k))); }
  double eigenvalue_bound() const { return 2.0 * profile.mu_c(1); }
  double tail_bound() const { return 2.0 * static_cast<double>(k()) * profile.mu_c(p) / std::pow(R, 2.0 * p); }
  double cell_factor() const { return 2.0 * mu_ac(); }
  GridSpec grid() const { return {eta, R, k(), cell_cap}; }

  void validate() const {
    if (p < 1) throw ConfigError("moment order p must be at least 1");
    if (!(R >= 1.0)) throw ConfigError("grid radius R must be at least 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (!std::isfinite(mu_ac())) throw ConfigError("profile has no finite anticoncentration bound; grid tests need a density");
    grid().validate();
  }
};

enum class NeighborhoodKind { Subspace, Disagreement };

struct NeighborhoodSpec {
  double slack_s = 0.0;  // basis distance
  double slack_e = 0.0;  // Gaussian disagreement
  NeighborhoodKind kind = NeighborhoodKind::Subspace;

  void validate() const {
    if (!(slack_e >= 0.0 && slack_e < 1.0)) throw ConfigError("disagreement slack must lie in [0, 1)");
    if (kind == NeighborhoodKind::Subspace && !(slack_s >= 0.0 && slack_s < 1.0))
      throw ConfigError("subspace slack must lie in [0, 1)");
  }
};

// Boundary smoothness of convex sets of k-dimensional juntas: 10 k log(k+1).
inline double convex_smoothness(std::size_t k) {
  return 10.0 * static_cast<double>(k) * std::log(static_cast<double>(k) + 1.0);
}

// Boundary smoothness of degree-l PTFs on k relevant directions: 10 l^3 k.
inline double ptf_smoothness(unsigned degree, std::size_t k) {
  return 10.0 * std::pow(static_cast<double>(degree), 3.0) * static_cast<double>(k);
}

// eta = delta_s R^p / (2 sigma_hat sqrt(k)) * sqrt(mu_c(1) / mu_c(p))
inline double choose_eta(double delta_s, double R, unsigned p, double sigma_hat, std::size_t k,
                         const StructuredProfile& profile, double cell_cap = kDefaultCellCap) {
  if (!(delta_s > 0.0) || !(R > 0.0) || p < 1 || k == 0) throw ConfigError("eta parameters must be positive");
  if (!(sigma_hat >= 1.0)) throw ConfigError("hypothesis smoothness must be at least 1");
  const double eta = delta_s * std::pow(R, p) / (2.0 * sigma_hat * std::sqrt(static_cast<double>(k))) *
                     std::sqrt(profile.mu_c(1) / profile.mu_c(p));
  GridSpec{eta, R, k, cell_cap}.validate();
  return eta;
}

// Soundness error of the cylindrical grids tester on the subspace neighborhood.
inline double eps_prime_grid(const GridTesterConfig& cfg, double sigma, const NeighborhoodSpec& nb) {
  if (nb.kind != NeighborhoodKind::Subspace) throw ConfigError("grid soundness bound needs a subspace neighborhood");
  const double k = static_cast<double>(cfg.k());
  const double r2p = std::pow(cfg.R, 2.0 * cfg.p);
  const double mu_ac = cfg.mu_ac();
  const double mu_c1 = cfg.profile.mu_c(1), mu_cp = cfg.profile.mu_c(cfg.p);
  const double tail = 14.0 * k * mu_cp / r2p;
  const double log_ac = std::log(mu_ac);
  const double rotation =
      nb.slack_s == 0.0 || log_ac <= 0.0
          ? 0.0
          : 12.0 * std::sqrt(2.0 * k * r2p * mu_c1 * log_ac / mu_cp) * mu_ac * sigma * nb.slack_s;
  return tail + rotation + 2.0 * mu_ac * nb.slack_e;
}

// Completeness sample budget of the cylindrical grids theorem, evaluated verbatim.
inline double grid_theorem_budget(std::size_t d, const GridTesterConfig& cfg) {
  const double k = static_cast<double>(cfg.k());
  const double mu_c1 = cfg.profile.mu_c(1);
  const double eta = cfg.eta, R = cfg.R;
  return 10.0 * cfg.profile.mu_c(2) / (mu_c1 * mu_c1) * std::pow(static_cast<double>(d), 4.0) +
         12.0 * std::pow(R, 2.0 * cfg.p) / (k * cfg.profile.mu_c(cfg.p)) +
         14.0 * k * std::pow(std::sqrt(2.0 * std::numbers::pi) * std::exp(R * R), k) / (cfg.mu_ac() * std::pow(eta, k)) *
             std::log(3.0 * R / eta);
}

// Completeness sample budget of the low-dimensional grids tester, evaluated verbatim.
inline double grid_lemma_budget(const GridTesterConfig& cfg) {
  const double k = static_cast<double>(cfg.k());
  const double rho = cfg.eta, R = cfg.R;
  return 12.0 * std::pow(R, 2.0 * cfg.p) / (k * cfg.profile.mu_c(cfg.p)) +
         14.0 * k * std::pow(3.0 * std::sqrt(2.0 * std::numbers::pi * k) * std::exp(R * R), k) /
             (cfg.mu_ac() * std::pow(rho, k)) * std::log(9.0 * R * k / rho);
}

namespace detail {

struct IndexHash {
  std::size_t operator()(const std::vector<std::int64_t>& v) const {
    std::uint64_t h = 0;
    for (auto x : v) h = mix64(h ^ static_cast<std::uint64_t>(x));
    return static_cast<std::size_t>(h);
  }
};

// Tail and per-cell checks on points already in R^k.
inline void grid_checks(const double* z, std::size_t n, const GridTesterConfig& cfg, Verdict& v) {
  const GridSpec grid = cfg.grid();
  const std::size_t k = grid.k;
  std::unordered_map<std::vector<std::int64_t>, std::size_t, IndexHash> counts;
  std::size_t outside = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto cell = grid.cell_of({z + j * k, k});
    if (!cell) ++outside;
    else ++counts[*cell];
  }
  const double nn = static_cast<double>(n);
  const double tail = static_cast<double>(outside) / nn;
  v.thresholds["tail_bound"] = cfg.tail_bound();
  v.thresholds["cell_factor"] = cfg.cell_factor();
  v.thresholds["eta"] = grid.eta;
  v.thresholds["R"] = grid.R;
  v.thresholds["cells"] = grid.cell_count();
  v.diagnostics["tail_mass"] = tail;
  v.diagnostics["occupied_cells"] = counts.size();
  if (tail > cfg.tail_bound()) v.reject("tail", tail - cfg.tail_bound());

  // Occupied cells in a fixed order so the reported cell does not depend on hashing.
  std::vector<std::pair<std::vector<std::int64_t>, std::size_t>> cells(counts.begin(), counts.end());
  std::sort(cells.begin(), cells.end());
  double worst = 0.0;
  std::optional<std::vector<std::int64_t>> worst_cell;
  std::size_t violations = 0;
  for (const auto& [idx, count] : cells) {
    const auto [lo, hi] = grid.cell_box(idx);
    const double bound = cfg.cell_factor() * gaussian_cell_probability(lo, hi);
    const double mass = static_cast<double>(count) / nn;
    if (mass > bound) {
      ++violations;
      if (!worst_cell || mass - bound > worst) worst = mass - bound, worst_cell = idx;
    }
  }
  if (worst_cell) {
    v.reject("cell", worst);
    v.diagnostics["violated_cell"] = *worst_cell;
    v.diagnostics["violating_cells"] = violations;
  }
}

}  // namespace detail

// Low-dimensional grids tester on a k-dimensional sample.
inline Verdict grids_test(const Dataset& ds, const GridTesterConfig& cfg) {
  cfg.validate();
  if (ds.dim() != cfg.k()) throw DimensionMismatch(cfg.k(), ds.dim());
  Verdict v;
  detail::grid_checks(ds.data(), ds.size(), cfg, v);
  return v;
}

// Projects onto the rows of V and runs the eigenvalue, tail and cell checks.
inline Verdict cylindrical_grid_test(const Dataset& ds, const std::vector<std::vector<double>>& basis,
                                     const GridTesterConfig& cfg) {
  cfg.validate();
  check_orthonormal_rows(basis, kBasisTolerance);
  const std::size_t k = basis.size(), d = ds.dim();
  if (k != cfg.k()) throw DimensionMismatch(cfg.k(), k);
  if (basis.front().size() != d) throw DimensionMismatch(basis.front().size(), d);
  Verdict v;
  const double lambda = max_eigenvalue(ds);
  v.thresholds["eigenvalue_bound"] = cfg.eigenvalue_bound();
  v.diagnostics["max_eigenvalue"] = lambda;
  if (lambda > cfg.eigenvalue_bound()) v.reject("eigenvalue", lambda - cfg.eigenvalue_bound());
  std::vector<double> z(ds.size() * k);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto x = ds.point(j);
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += basis[r][i] * x[i];
      z[j * k + r] = s;
    }
  }
  detail::grid_checks(z.data(), ds.size(), cfg, v);
  return v;
}

inline constexpr double kJuntaEigenvalueGate = 2.0;

// Train a subspace junta, gate on the top eigenvalue of the test second moments,
// then run the cylindrical grids tester along the hypothesis basis. Without an
// eta override the grid side comes from choose_eta with the convex-set smoothness.
inline TDSOutcome tds_subspace_junta_run(const LabeledDataset& train_data, const Dataset& test,
                                         const TrainerSpec& trainer, GridTesterConfig cfg, const NeighborhoodSpec& nb,
                                         RngSpec rng, std::optional<double> eta_override = std::nullopt) {
  if (train_data.dim() != test.dim()) throw DimensionMismatch(train_data.dim(), test.dim());
  nb.validate();
  TrainingReport report = train(trainer, train_data, rng.child(0));
  const auto* junta = std::get_if<SubspaceJunta>(&report.hypothesis);
  if (!junta) throw ConfigError("trainer output lacks an explicit basis (expected a subspace junta)");
  const std::size_t k = junta->k();
  cfg.profile.k = k;
  const double sigma = convex_smoothness(k);
  cfg.eta = eta_override ? *eta_override
                         : choose_eta(nb.slack_s, cfg.R, cfg.p, std::max(sigma, 1.0), k, cfg.profile, cfg.cell_cap);

  TDSOutcome out;
  out.training_error = report.err_train;
  out.details["training"] = report.details;
  const double lambda = max_eigenvalue(test);
  if (lambda > kJuntaEigenvalueGate) {
    out.verdict.thresholds["eigenvalue_gate"] = kJuntaEigenvalueGate;
    out.verdict.diagnostics["max_eigenvalue"] = lambda;
    out.verdict.reject("eigenvalue_gate", lambda - kJuntaEigenvalueGate);
    return out;
  }
  out.verdict = cylindrical_grid_test(test, junta->basis, cfg);
  out.verdict.thresholds["eigenvalue_gate"] = kJuntaEigenvalueGate;
  out.verdict.thresholds["eta_override"] = eta_override ? 1.0 : 0.0;
  if (out.verdict.accepted) {
    out.hypothesis = report.hypothesis;
    const double eps_prime = eps_prime_grid(cfg, sigma, nb);
    out.details["eps_prime"] = eps_prime;
    out.certified_error_bound = eps_prime + cfg.epsilon + report.err_train;
  }
  return out;
}

}  // namespace tds
