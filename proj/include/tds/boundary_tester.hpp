#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/distributions.hpp"
#include "tds/moments.hpp"
#include "tds/outcome.hpp"
#include "tds/training.hpp"

namespace tds {

inline constexpr double kGaussianDensityBound = 0.4;  // above the N(0,1) peak 1/sqrt(2 pi)

struct BoundaryTesterConfig {
  double varrho = 0.05;
  double density_bound = kGaussianDensityBound;

  double threshold() const { return 3.0 * density_bound * varrho; }
  double sigma_hat(std::size_t k) const { return 3.0 * density_bound * static_cast<double>(k); }

  void validate() const {
    if (!(varrho > 0.0) || !std::isfinite(varrho)) throw ConfigError("boundary width varrho must be positive");
    if (!(density_bound >= kGaussianDensityBound) || !std::isfinite(density_bound))
      throw ConfigError("density bound C must be at least 0.4");
  }
};

// Rejects when some slab {x : |w_i.x - tau_i| <= varrho} holds more than 3 C varrho
// of the sample.
inline Verdict boundary_proximity_test(const Dataset& ds, const HalfspaceIntersection& f,
                                       const BoundaryTesterConfig& cfg) {
  cfg.validate();
  if (f.halfspaces.empty()) throw InvalidInput("intersection has no halfspaces");
  detail::check_dim(Concept{f}, ds.dim());
  if (ds.empty()) throw InvalidInput("boundary test needs at least one point");
  std::vector<std::size_t> inside(f.halfspaces.size(), 0);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto x = ds.point(j);
    for (std::size_t i = 0; i < f.halfspaces.size(); ++i) inside[i] += std::abs(f.halfspaces[i].margin(x)) <= cfg.varrho;
  }
  Verdict v;
  v.thresholds["slab_bound"] = cfg.threshold();
  v.thresholds["varrho"] = cfg.varrho;
  v.thresholds["density_bound"] = cfg.density_bound;
  json masses = json::array();
  for (std::size_t i = 0; i < inside.size(); ++i) {
    const double mass = static_cast<double>(inside[i]) / static_cast<double>(ds.size());
    masses.push_back(mass);
    if (mass > cfg.threshold()) v.reject("boundary_proximity", mass - cfg.threshold());
  }
  v.diagnostics["slab_masses"] = masses;
  return v;
}

inline Verdict boundary_proximity_test(const Dataset& ds, const Halfspace& h, const BoundaryTesterConfig& cfg) {
  return boundary_proximity_test(ds, HalfspaceIntersection{{h}}, cfg);
}

// ---- concentration wrappers ----

struct MomentMatch {
  unsigned p = 1;
  std::size_t k = 1;
  std::size_t d = 1;
  // Delta = 1 / (2 k d)^{2p}
  double delta() const {
    return std::pow(2.0 * static_cast<double>(k) * static_cast<double>(d), -2.0 * static_cast<double>(p));
  }
};

struct Spectral {
  double mu_c = 2.0;
};

using ConcentrationConfig = std::variant<MomentMatch, Spectral>;

inline void validate(const ConcentrationConfig& cfg) {
  if (const auto* m = std::get_if<MomentMatch>(&cfg)) {
    if (m->p < 1 || m->k < 1 || m->d < 1) throw ConfigError("moment matching needs p, k, d >= 1");
    if (!(m->delta() > 0.0)) throw ConfigError("moment matching tolerance underflows");
  } else if (!(std::get<Spectral>(cfg).mu_c >= 1.0)) {
    throw ConfigError("spectral bound mu_c must be at least 1");
  }
}

inline Verdict concentration_test(const Dataset& ds, const ConcentrationConfig& cfg) {
  validate(cfg);
  Verdict v;
  if (const auto* m = std::get_if<MomentMatch>(&cfg)) {
    if (m->d != ds.dim()) throw DimensionMismatch(m->d, ds.dim());
    const double delta = m->delta();
    v.thresholds["delta"] = delta;
    const MomentVector got = empirical_moments(ds, 2 * m->p);
    double worst = -1.0;
    std::size_t worst_i = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double gap = std::abs(got.values[i] - gaussian_moment(got.indices[i]));
      if (gap > worst) worst = gap, worst_i = i;
      if (gap > delta) v.reject("moment_match", gap - delta);
    }
    v.diagnostics["worst_index"] = index_key(got.indices[worst_i]);
    v.diagnostics["worst_abs_gap"] = worst;
  } else {
    const double bound = 2.0 * std::get<Spectral>(cfg).mu_c;
    const double lambda = max_eigenvalue(ds);
    v.thresholds["eigenvalue_bound"] = bound;
    v.diagnostics["max_eigenvalue"] = lambda;
    if (lambda > bound) v.reject("eigenvalue", lambda - bound);
  }
  return v;
}

// Chebyshev plus union bound over the moments of degree <= 2p at tolerance Delta.
inline std::size_t moment_match_budget(const MomentMatch& m, double fail_prob = 0.1, double cap = 1e9) {
  validate(ConcentrationConfig{m});
  double m2 = 1.0;
  for (const auto& a : enumerate_multi_indices(m.d, 2 * m.p)) {
    MultiIndex twice = a;
    for (auto& x : twice) x *= 2;
    m2 = std::max(m2, gaussian_moment(twice));
  }
  const double delta = m.delta();
  const double n = std::ceil(count_multi_indices(m.d, 2 * m.p) * m2 / (fail_prob * delta * delta));
  if (!(n <= cap)) throw BudgetRefused("moment matching budget", n, cap);
  return static_cast<std::size_t>(n);
}

// ---- parameter formulas ----

// Default local-balance radius r = beta / (10 k log(k+1)).
inline double default_balance_radius(double beta, std::size_t k) {
  return beta / (10.0 * static_cast<double>(k) * std::log(static_cast<double>(k) + 1.0));
}

// varrho = (delta_e / beta)^{1/k} sqrt(k) e^{2R^2/k}, admissible only while
// delta_e <= beta r^k k^{-k/2} e^{-2R^2}. Evaluated in log space.
inline double varrho_for(double delta_e, double beta, std::size_t k, double R, std::optional<double> r = std::nullopt) {
  if (!(delta_e > 0.0) || !(beta > 0.0) || k == 0 || !(R > 0.0)) throw ConfigError("varrho parameters must be positive");
  const double kk = static_cast<double>(k);
  const double radius = r ? *r : default_balance_radius(beta, k);
  if (!(radius > 0.0)) throw ConfigError("local-balance radius must be positive");
  const double log_cap = std::log(beta) + kk * std::log(radius) - 0.5 * kk * std::log(kk) - 2.0 * R * R;
  if (std::log(delta_e) > log_cap + 1e-12)
    throw ConfigError("disagreement slack " + std::to_string(delta_e) + " exceeds the admissible cap " +
                      std::to_string(std::exp(log_cap)));
  return std::exp((std::log(delta_e) - std::log(beta)) / kk + 0.5 * std::log(kk) + 2.0 * R * R / kk);
}

enum class BoundaryVariant { MomentMatch, Spectral };

inline BoundaryVariant boundary_variant_from_string(const std::string& s) {
  if (s == "moment") return BoundaryVariant::MomentMatch;
  if (s == "spectral") return BoundaryVariant::Spectral;
  throw ConfigError("variant must be moment or spectral, got '" + s + "'");
}

// Concentration part of the soundness error: 2 (4kp/R^2)^p, or 4 k mu_c / R^2.
inline double boundary_tail_term(BoundaryVariant variant, double p_or_mu_c, std::size_t k, double R) {
  const double kk = static_cast<double>(k);
  if (variant == BoundaryVariant::MomentMatch) return 2.0 * std::pow(4.0 * kk * p_or_mu_c / (R * R), p_or_mu_c);
  return 4.0 * kk * p_or_mu_c / (R * R);
}

// Soundness error of the boundary-proximity tester: the concentration term plus
// sigma_hat sqrt(k) (delta_e e^{2R^2} / beta)^{1/k}.
inline double eps_prime_boundary(BoundaryVariant variant, double p_or_mu_c, std::size_t k, double R, double delta_e,
                                 double beta, double sigma_hat) {
  if (k == 0 || !(R > 0.0) || !(beta > 0.0) || !(p_or_mu_c > 0.0) || delta_e < 0.0)
    throw ConfigError("soundness parameters must be positive");
  const double kk = static_cast<double>(k);
  const double slack =
      delta_e == 0.0 ? 0.0 : std::exp((std::log(delta_e) + 2.0 * R * R - std::log(beta)) / kk);
  return boundary_tail_term(variant, p_or_mu_c, k, R) + sigma_hat * std::sqrt(kk) * slack;
}

// {j eps / (10 k^2) : j >= 1} intersected with (0, r], r the default balance radius.
inline std::vector<double> boundary_net(double epsilon, double beta, std::size_t k) {
  if (!(epsilon > 0.0) || !(beta > 0.0) || k == 0) throw ConfigError("net parameters must be positive");
  const double step = epsilon / (10.0 * static_cast<double>(k * k));
  const double top = default_balance_radius(beta, k);
  std::vector<double> net;
  for (std::size_t j = 1; static_cast<double>(j) * step <= top; ++j) {
    net.push_back(static_cast<double>(j) * step);
    if (net.size() > 100000) throw BudgetRefused("boundary net size", static_cast<double>(net.size()), 1e5);
  }
  if (net.empty()) throw ConfigError("empty varrho net: beta is too small relative to epsilon");
  return net;
}

struct IntersectionRunConfig {
  double epsilon = 0.1;
  double beta = 0.2;
  std::size_t k = 2;
  BoundaryVariant variant = BoundaryVariant::Spectral;
  unsigned p = 1;           // moment-matching order
  double mu_c = 2.0;        // spectral bound
  double density_bound = kGaussianDensityBound;
  std::size_t votes = 5;    // majority over disjoint splits per net point
};

// Localization radius making the concentration term at most epsilon.
inline double intersection_radius(const IntersectionRunConfig& cfg) {
  const double kk = static_cast<double>(cfg.k);
  if (cfg.variant == BoundaryVariant::Spectral) return std::sqrt(4.0 * kk * cfg.mu_c / cfg.epsilon);
  const double p = cfg.p;
  return std::sqrt(4.0 * kk * p / std::pow(cfg.epsilon / 2.0, 1.0 / p));
}

// Train an intersection, run the concentration wrapper once, then the boundary
// tester at every net point with a majority over disjoint splits.
inline TDSOutcome tds_intersections_run(const LabeledDataset& train_data, const Dataset& test,
                                        const TrainerSpec& trainer, const IntersectionRunConfig& cfg, RngSpec rng) {
  if (train_data.dim() != test.dim()) throw DimensionMismatch(train_data.dim(), test.dim());
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (!(cfg.beta > 0.0 && cfg.beta <= 0.5)) throw ConfigError("balance beta must lie in (0, 0.5]");
  if (cfg.votes < 1 || cfg.votes % 2 == 0) throw ConfigError("votes must be odd and positive");
  const auto net = boundary_net(cfg.epsilon, cfg.beta, cfg.k);
  TrainingReport report = train(trainer, train_data, rng.child(0));
  HalfspaceIntersection f;
  if (const auto* h = std::get_if<HalfspaceIntersection>(&report.hypothesis)) f = *h;
  else if (const auto* h1 = std::get_if<Halfspace>(&report.hypothesis)) f.halfspaces = {*h1};
  else throw ConfigError("trainer output is not a halfspace intersection");
  if (f.halfspaces.size() > cfg.k) throw ConfigError("hypothesis has more than k halfspaces");

  TDSOutcome out;
  out.training_error = report.err_train;
  out.details["training"] = report.details;
  out.details["net"] = net;
  const ConcentrationConfig conc = cfg.variant == BoundaryVariant::Spectral
                                       ? ConcentrationConfig{Spectral{cfg.mu_c}}
                                       : ConcentrationConfig{MomentMatch{cfg.p, cfg.k, test.dim()}};
  out.verdict = concentration_test(test, conc);
  if (!out.verdict.accepted) return out;

  const auto blocks = partition_blocks(test, cfg.votes);
  json per_point = json::array();
  for (double varrho : net) {
    const BoundaryTesterConfig bcfg{varrho, cfg.density_bound};
    std::size_t accepts = 0;
    double margin = 0.0;
    for (const auto& b : blocks) {
      const Verdict v = boundary_proximity_test(b, f, bcfg);
      if (v.accepted) ++accepts;
      else margin = std::max(margin, v.worst_gap);
    }
    per_point.push_back({{"varrho", varrho}, {"accepts", accepts}});
    if (2 * accepts <= blocks.size()) out.verdict.reject("boundary_proximity", margin);
  }
  out.verdict.thresholds["net_points"] = static_cast<double>(net.size());
  out.verdict.thresholds["density_bound"] = cfg.density_bound;
  out.verdict.diagnostics["net_votes"] = per_point;
  if (out.verdict.accepted) {
    // At the net's largest point, sqrt(k) (delta_e e^{2R^2}/beta)^{1/k} equals varrho.
    const double R = intersection_radius(cfg);
    const double bind = net.back();
    const double sigma_hat = BoundaryTesterConfig{bind, cfg.density_bound}.sigma_hat(cfg.k);
    const double tail = boundary_tail_term(cfg.variant, cfg.variant == BoundaryVariant::Spectral ? cfg.mu_c : cfg.p,
                                           cfg.k, R);
    const double eps_prime = tail + sigma_hat * bind;
    out.details["R"] = R;
    out.details["binding_varrho"] = bind;
    out.details["eps_prime"] = eps_prime;
    out.hypothesis = report.hypothesis;
    out.certified_error_bound = report.err_train + cfg.epsilon + eps_prime;
  }
  return out;
}

// Fraction of Gaussian draws with |x| <= R where f and f-hat disagree outside the
// slab union of f-hat.
inline double check_localization(const HalfspaceIntersection& f, const HalfspaceIntersection& f_hat, double R,
                                 double varrho, std::size_t n, RngSpec rng) {
  const std::size_t d = concept_dim(Concept{f_hat});
  detail::check_dim(Concept{f}, d);
  if (n == 0) throw InvalidInput("sample size must be at least 1");
  std::size_t bad = 0;
  for_each_chunk(StandardGaussian{d}, n, rng, [&](const double* pts, std::size_t count) {
    for (std::size_t j = 0; j < count; ++j) {
      const std::span<const double> x(pts + j * d, d);
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      if (r2 > R * R) continue;
      if (detail::intersection_contains(f, x) == detail::intersection_contains(f_hat, x)) continue;
      if (!boundary_membership(f_hat, x, varrho)) ++bad;
    }
  });
  return static_cast<double>(bad) / static_cast<double>(n);
}

}  // namespace tds
