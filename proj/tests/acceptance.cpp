// Acceptance runs: one PASS/FAIL line per criterion. `--only N` runs a single one.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "tds/tds.hpp"

using namespace tds;

namespace {

struct Result {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string rate(std::size_t hits, std::size_t total) {
  return std::to_string(hits) + "/" + std::to_string(total);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::vector<double>> random_orthonormal(std::size_t k, std::size_t d, CounterEngine& eng) {
  std::vector<std::vector<double>> rows;
  while (rows.size() < k) {
    std::vector<double> v(d);
    for (double& x : v) x = eng.normal();
    for (const auto& r : rows) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += r[i] * v[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * r[i];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    for (double& x : v) x /= std::sqrt(n2);
    rows.push_back(v);
  }
  return rows;
}

// ---- 1: moment oracles against Monte Carlo ----

Result moment_oracles() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  for (const char* family : {"gaussian", "cube"}) {
    const bool gauss = std::string(family) == "gaussian";
    double worst = 0.0;
    for (std::size_t d = 1; d <= 3; ++d) {
      const Dataset ds = gauss ? sample(StandardGaussian{d}, 1000000, {1, d}) : sample(UniformCube{d}, 1000000, {2, d});
      const MomentTable mc = empirical_moments(ds, 4);
      const MomentTable exact = gauss ? gaussian_moment_table(d, 4) : cube_moment_table(d, 4);
      for (std::size_t i = 0; i < mc.size(); ++i) worst = std::max(worst, std::abs(mc.values[i] - exact.at(mc.indices[i])));
    }
    r.require(worst <= 0.02, std::string(family) + " worst gap " + fmt("%.4f", worst) + " <= 0.02");
  }
  const double secs = seconds_since(t0);
  r.require(secs < 30.0, fmt("%.1f s < 30 s", secs));
  return r;
}

// ---- 2: Chow completeness ----

ChowTesterConfig chow_config(ChowReference ref) {
  ChowTesterConfig cfg;
  cfg.epsilon = 0.3;
  cfg.degree = 2;
  cfg.coeff_bound = 2.0;
  cfg.reference = ref;
  cfg.m_conc = compute_sample_budget_chow(3, 2, 2.0, 0.3, kDefaultChowFailProbability, ref);
  return cfg;
}

// Exact Gaussian Chow vector of a halfspace, from the closed form.
ChowVector gaussian_halfspace_reference(const Halfspace& h, unsigned degree) {
  ChowVector ref = reference_moments(h.w.size(), degree, ChowReference::Gaussian);
  for (std::size_t i = 0; i < ref.size(); ++i) ref.values[i] = oracle::gaussian_halfspace_chow(h.w, h.tau, ref.indices[i]);
  ref.source = "closed_form";
  return ref;
}

Result chow_completeness() {
  Result r;
  const Halfspace h = make_halfspace({1.0, -0.5, 0.3}, 0.2);
  for (const ChowReference ref : {ChowReference::Gaussian, ChowReference::Cube}) {
    const auto t0 = std::chrono::steady_clock::now();
    const ChowTesterConfig cfg = chow_config(ref);
    const ChowVector reference =
        ref == ChowReference::Gaussian ? gaussian_halfspace_reference(h, 2) : reference_chow(h, 3, cfg);
    const DistributionSpec marginal = ref == ChowReference::Gaussian ? DistributionSpec(StandardGaussian{3})
                                                                     : DistributionSpec(UniformCube{3});
    const std::size_t n = minimum_chow_test_size(cfg);
    std::size_t accepts = 0;
    for (std::uint64_t t = 0; t < 20; ++t)
      accepts += chow_matching_test_streamed(marginal, n, {20, t}, h, cfg, reference).accepted;
    const double secs = seconds_since(t0);
    r.require(accepts >= 14, std::string(to_string(ref)) + " accepted " + rate(accepts, 20) + " at n=" +
                                 std::to_string(n) + ", need >= 14");
    r.require(secs < 300.0, fmt("%.0f s < 300 s", secs));
  }
  return r;
}

// ---- 3: Chow soundness battery ----

Result chow_soundness() {
  Result r;
  const Concept truth = make_halfspace({1.0, 0.5, 0.0}, 0.1);
  const auto train_data = label_with(truth, sample(StandardGaussian{3}, 2000, {30, 0}), 0.0, {30, 1});
  const auto report = train(PlantedOracle{truth, 0.0, 0.05}, train_data, {30, 2});
  const auto* h = std::get_if<Halfspace>(&report.hypothesis);
  if (!h) return {false, "planted hypothesis is not a halfspace"};
  const ChowTesterConfig cfg = chow_config(ChowReference::Gaussian);
  const ChowVector reference = gaussian_halfspace_reference(*h, 2);
  const std::size_t n = minimum_chow_test_size(cfg);
  const double base = estimate_disagreement(report.hypothesis, truth, StandardGaussian{3}, 1000000, {31, 0});
  const auto g = share(StandardGaussian{3});
  struct Case {
    std::string name;
    DistributionSpec spec;
    std::size_t trials;
  };
  const std::vector<Case> battery{
      {"same", StandardGaussian{3}, 4},
      {"shift0.5", MeanShift{g, {0.3, 0.0, 0.4}}, 4},
      {"shift1", MeanShift{g, {0.6, 0.0, 0.8}}, 4},
      {"shift2", MeanShift{g, {1.2, 0.0, 1.6}}, 20},
      {"scale1.5", Scale{g, 1.5}, 4},
      {"spike0.3", BoundarySpike{g, *h, 0.05, 0.3}, 4},
      {"bimodal", Mixture{{{0.5, share(MeanShift{g, {1.5, 0.0, 0.0}})}, {0.5, share(MeanShift{g, {-1.5, 0.0, 0.0}})}}}, 4},
  };
  for (const auto& c : battery) {
    std::size_t accepts = 0;
    for (std::uint64_t t = 0; t < c.trials; ++t)
      accepts += chow_matching_test_streamed(c.spec, n, {32, t}, report.hypothesis, cfg, reference).accepted;
    if (accepts > 0) {
      const double shifted = estimate_disagreement(report.hypothesis, truth, c.spec, 1000000, {33, 0});
      r.require(shifted - base <= 3.0 * cfg.epsilon + 0.03,
                c.name + " accepted " + rate(accepts, c.trials) + ", excess " + fmt("%.4f", shifted - base));
    } else {
      r.require(true, c.name + " accepted 0/" + std::to_string(c.trials));
    }
    if (c.name == "shift2") r.require(c.trials - accepts >= 19, "shift2 rejected " + rate(c.trials - accepts, c.trials));
  }
  return r;
}

// ---- 4: end-to-end TDS through Chow matching ----

Result tds_chow_end_to_end() {
  Result r;
  const Concept truth = make_halfspace({1.0, -0.4}, 0.3);
  ChowTesterConfig cfg;
  cfg.epsilon = 0.1;
  cfg.degree = 1;
  cfg.coeff_bound = 1.0;
  cfg.m_conc = compute_sample_budget_chow(2, 1, 1.0, 0.1);
  const std::size_t n_test = minimum_chow_test_size(cfg);
  for (double noise : {0.0, 0.05}) {
    std::size_t accepted = 0;
    double worst = -INFINITY;
    for (std::uint64_t t = 0; t < 20; ++t) {
      const RngSpec rng{40 + static_cast<std::uint64_t>(noise * 100), t};
      const auto train_data = label_with(truth, sample(StandardGaussian{2}, 5000, rng.child(1)), noise, rng.child(2));
      const auto out = tds_chow_run(train_data, sample(StandardGaussian{2}, n_test, rng.child(3)),
                                    PolyRegression{1, RegressionLoss::L2}, cfg, rng.child(4));
      if (!out.verdict.accepted) continue;
      ++accepted;
      const auto eval = label_with(truth, sample(StandardGaussian{2}, 1000000, rng.child(5)), noise, rng.child(6));
      const double err_test = zero_one_error(*out.hypothesis, eval);
      // The truth's error on both labeled samples bounds the best joint error.
      const double lambda = noise > 0.0 ? zero_one_error(truth, train_data) + zero_one_error(truth, eval) : 0.0;
      worst = std::max(worst, err_test - (lambda + out.training_error + 3.0 * cfg.epsilon));
    }
    const std::string tag = noise > 0.0 ? "noise 0.05" : "realizable";
    r.require(accepted > 0 && worst <= 0.03,
              tag + ": accepted " + rate(accepted, 20) + ", worst excess over bound " + fmt("%.4f", worst) + " <= 0.03");
  }
  return r;
}

// ---- 5 and 6: cylindrical grids ----

GridTesterConfig grid_config(const StructuredProfile& profile) {
  GridTesterConfig cfg;
  cfg.p = 2;
  cfg.R = 3.0;
  cfg.profile = profile;
  cfg.eta = 0.5;
  cfg.epsilon = 0.1;
  return cfg;
}

Result grid_tester() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = 10, n = 1000000;
  CounterEngine eng({50, 0});
  const auto basis = random_orthonormal(2, d, eng);
  const GridTesterConfig cfg = grid_config(gaussian_profile(2));
  const Concept truth = make_subspace_junta(
      basis, HalfspaceIntersection{{make_halfspace({1.0, 0.0}, -0.3), make_halfspace({0.0, 1.0}, -0.3)}});
  const NeighborhoodSpec nb{0.1, 0.0, NeighborhoodKind::Subspace};
  const double eps_prime = eps_prime_grid(cfg, convex_smoothness(2), nb);
  const auto train_data = label_with(truth, sample(StandardGaussian{d}, 1000, {51, 0}), 0.0, {51, 1});
  std::vector<Concept> neighbors;
  for (std::uint64_t i = 0; i < 10; ++i)
    neighbors.push_back(train(PlantedOracle{truth, nb.slack_s, 0.0}, train_data, {52, i}).hypothesis);

  std::size_t accepts = 0;
  double worst = -INFINITY;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Dataset test = sample(StandardGaussian{d}, n, {53, t});
    if (!cylindrical_grid_test(test, basis, cfg).accepted) continue;
    ++accepts;
    const LabeledDataset labeled = label_with(truth, test, 0.0, {});
    for (const auto& g : neighbors) worst = std::max(worst, zero_one_error(g, labeled) - (eps_prime + cfg.epsilon));
  }
  r.require(accepts >= 14, "gaussian accepted " + rate(accepts, 20));
  r.require(accepts > 0 && worst <= 0.03, "neighbor disagreement minus (eps'+eps) " + fmt("%.4f", worst) +
                                              " <= 0.03 with eps' = " + fmt("%.3f", eps_prime));

  const auto g = share(StandardGaussian{d});
  std::size_t scale_rejects = 0, spike_rejects = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    scale_rejects += !cylindrical_grid_test(sample(Scale{g, 3.0}, n, {54, t}), basis, cfg).accepted;
    // Centered in a column of cells, so the spike mass is not split across two.
    spike_rejects +=
        !cylindrical_grid_test(sample(BoundarySpike{g, Halfspace{basis[0], 1.25}, 0.02, 0.3}, n, {55, t}), basis, cfg)
             .accepted;
  }
  r.require(scale_rejects >= 19, "scale3 rejected " + rate(scale_rejects, 20));
  r.require(spike_rejects >= 19, "spike rejected " + rate(spike_rejects, 20));
  const double secs = seconds_since(t0);
  r.require(secs < 600.0, fmt("%.0f s < 600 s", secs));
  return r;
}

Result grid_universality() {
  Result r;
  const std::size_t d = 10;
  CounterEngine eng({60, 0});
  const auto basis = random_orthonormal(2, d, eng);
  const GridTesterConfig cfg = grid_config(log_concave_profile(2));
  std::size_t accepts = 0;
  for (std::uint64_t t = 0; t < 20; ++t)
    accepts += cylindrical_grid_test(sample(ProductLaplace{d}, 1000000, {61, t}), basis, cfg).accepted;
  r.require(accepts >= 14, "laplace accepted " + rate(accepts, 20));
  return r;
}

// ---- 7: boundary proximity and concentration wrappers ----

Result boundary_proximity() {
  Result r;
  const std::size_t d = 3, n = 100000;
  const HalfspaceIntersection f{{make_halfspace({1.0, 0.0, 0.0}, -0.3), make_halfspace({0.0, 1.0, 1.0}, -0.3)}};
  const BoundaryTesterConfig cfg{0.05, 0.4};
  const auto g = share(StandardGaussian{d});
  std::size_t gauss_accepts = 0, spike_rejects = 0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    gauss_accepts += boundary_proximity_test(sample(StandardGaussian{d}, n, {70, t}), f, cfg).accepted;
    spike_rejects +=
        !boundary_proximity_test(sample(BoundarySpike{g, f.halfspaces[0], 0.01, 0.3}, n, {71, t}), f, cfg).accepted;
  }
  r.require(gauss_accepts >= 19, "gaussian accepted " + rate(gauss_accepts, 20));
  r.require(spike_rejects >= 19, "spike rejected " + rate(spike_rejects, 20));

  const Spectral spectral{1.0};
  for (const auto& [name, spec] : {std::pair<std::string, DistributionSpec>{"gaussian", StandardGaussian{d}},
                                   {"laplace", ProductLaplace{d}},
                                   {"ball", UniformBall{d}}}) {
    std::size_t accepts = 0;
    for (std::uint64_t t = 0; t < 20; ++t) accepts += concentration_test(sample(spec, n, {72, t}), spectral).accepted;
    r.require(accepts >= 14, "spectral accepts " + name + " " + rate(accepts, 20));
  }
  std::size_t laplace_rejects = 0;
  for (std::uint64_t t = 0; t < 20; ++t)
    laplace_rejects += !concentration_test(sample(ProductLaplace{d}, n, {73, t}), MomentMatch{2, 1, d}).accepted;
  r.require(laplace_rejects >= 19, "moment matching p=2 rejects laplace " + rate(laplace_rejects, 20));
  return r;
}

// ---- 8: localization of disagreement ----

Result localization() {
  Result r;
  const std::size_t d = 4, n = 100000;
  const double varrho = 0.05;
  const HalfspaceIntersection f{{make_halfspace({1.0, 0.0, 0.0, 0.0}, -0.2), make_halfspace({0.0, 1.0, 0.0, 0.0}, -0.4)}};
  double worst = 0.0;
  for (double shift : {0.25 * varrho, 0.5 * varrho, varrho}) {
    HalfspaceIntersection moved = f;
    moved.halfspaces[0].tau += shift;
    for (std::uint64_t s = 0; s < 10; ++s) worst = std::max(worst, check_localization(f, moved, 4.0, varrho, n, {80, s}));
  }
  r.require(worst == 0.0, "translation violation " + fmt("%g", worst));

  const double R = 3.0;
  const HalfspaceIntersection through{{make_halfspace({1.0, 0.0, 0.0, 0.0}, 0.0), make_halfspace({0.0, 1.0, 0.0, 0.0}, 0.0)}};
  worst = 0.0;
  for (double theta : {0.005, 0.01, 0.02}) {
    HalfspaceIntersection turned = through;
    turned.halfspaces[0].w = {std::cos(theta), 0.0, std::sin(theta), 0.0};
    for (std::uint64_t s = 0; s < 10; ++s)
      worst = std::max(worst, check_localization(through, turned, R, R * std::sin(theta), n, {81, s}));
  }
  r.require(worst == 0.0, "rotation violation " + fmt("%g", worst));
  return r;
}

// ---- 9: smooth boundary scaling ----

Result smooth_boundary() {
  Result r;
  CounterEngine eng({90, 0});
  std::size_t made = 0;
  double worst_ratio = 0.0;
  while (made < 5) {
    const std::size_t k = 2 + eng.below(3);
    const std::size_t d = k + eng.below(7 - k);
    HalfspaceIntersection f;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> w(d);
      for (double& v : w) v = eng.normal();
      f.halfspaces.push_back(make_halfspace(w, -0.8 * eng.uniform()));
    }
    const double balance = estimate_balance(f, StandardGaussian{d}, 100000, {91, made});
    if (std::min(balance, 1.0 - balance) < 0.1) continue;
    double lo = INFINITY, hi = 0.0;
    for (double varrho : {0.005, 0.01, 0.02, 0.04}) {
      const double density = estimate_boundary_mass(f, varrho, StandardGaussian{d}, 1000000, {92, made}) / varrho;
      lo = std::min(lo, density);
      hi = std::max(hi, density);
    }
    worst_ratio = std::max(worst_ratio, hi / lo);
    ++made;
  }
  r.require(worst_ratio <= 2.5, "worst max/min of mass/varrho " + fmt("%.3f", worst_ratio) + " <= 2.5");
  return r;
}

// ---- 10: sandwiching LP ----

Result sandwich_lp() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  PolynomialThreshold maj{5, 1, {}, 0.0};
  for (std::size_t i = 0; i < 5; ++i) {
    MultiIndex a(5, 0);
    a[i] = 1;
    maj.coeffs[a] = 1.0;
  }
  double gap[6] = {};
  for (unsigned l : {1u, 3u, 5u}) {
    const auto pair = exact_sandwich_lp(maj, 5, l);
    gap[l] = pair.gap;
    const double primal = sandwich_gap_primal(maj, 5, l);
    const auto check = verify_sandwich(pair, maj);
    r.require(std::abs(primal - pair.dual_objective) <= 1e-8 && std::abs(pair.gap - pair.dual_objective) <= 1e-8,
              "l=" + std::to_string(l) + " primal " + fmt("%.12f", primal) + " dual " + fmt("%.12f", pair.dual_objective));
    r.require(check.ok, "l=" + std::to_string(l) + " verified, worst violation " + fmt("%.2e", check.worst_violation));
  }
  r.require(gap[1] >= gap[3] && gap[3] >= gap[5] && gap[5] == 0.0,
            "gaps " + fmt("%.6f", gap[1]) + " >= " + fmt("%.6f", gap[3]) + " >= " + fmt("%g", std::abs(gap[5])) + " = 0");
  const double secs = seconds_since(t0);
  r.require(secs < 60.0, fmt("%.2f s < 60 s", secs));
  return r;
}

// ---- 11: TDS learning of balanced intersections ----

Result tds_intersections() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = 8, n_test = 250000;
  std::vector<double> e0(d, 0.0), e1(d, 0.0);
  e0[0] = 1.0;
  e1[1] = 1.0;
  const HalfspaceIntersection truth{{make_halfspace(e0, -0.545), make_halfspace(e1, -0.545)}};
  IntersectionRunConfig cfg;
  cfg.epsilon = 0.1;
  cfg.beta = 0.2;
  cfg.k = 2;
  const double balance = estimate_balance(truth, StandardGaussian{d}, 1000000, {100, 0});
  r.require(std::min(balance, 1.0 - balance) >= cfg.beta, "balance " + fmt("%.3f", balance));
  const PlantedOracle trainer{truth, 0.0, 0.02};
  const auto g = share(StandardGaussian{d});

  std::size_t accepted = 0, spike_rejects = 0;
  double worst = -INFINITY;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const RngSpec rng{101, t};
    const auto train_data = label_with(truth, sample(StandardGaussian{d}, 2000, rng.child(1)), 0.0, rng.child(2));
    const auto out = tds_intersections_run(train_data, sample(StandardGaussian{d}, n_test, rng.child(3)), trainer, cfg,
                                           rng.child(4));
    if (out.verdict.accepted) {
      ++accepted;
      const auto eval = label_with(truth, sample(StandardGaussian{d}, 1000000, rng.child(5)), 0.0, {});
      worst = std::max(worst, zero_one_error(*out.hypothesis, eval) - out.certified_error_bound);
    }
    // The spike sits on the boundary of the hypothesis the pipeline will train.
    const auto hyp = train(trainer, train_data, rng.child(6).child(0)).hypothesis;
    const Halfspace plane = std::get<HalfspaceIntersection>(hyp).halfspaces[0];
    const auto spiked = tds_intersections_run(train_data, sample(BoundarySpike{g, plane, 0.001, 0.3}, n_test, rng.child(7)),
                                              trainer, cfg, rng.child(6));
    spike_rejects += !spiked.verdict.accepted;
  }
  r.require(accepted >= 12, "gaussian accepted " + rate(accepted, 20));
  r.require(spike_rejects >= 19, "spike rejected " + rate(spike_rejects, 20));
  r.require(accepted > 0 && worst <= 0.03, "worst err_test - certified " + fmt("%.4f", worst) + " <= 0.03");
  const double secs = seconds_since(t0);
  r.require(secs < 900.0, fmt("%.0f s < 900 s", secs));
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"moment oracles vs Monte Carlo", moment_oracles},
      {"Chow tester completeness", chow_completeness},
      {"Chow tester soundness battery", chow_soundness},
      {"end-to-end TDS via Chow matching", tds_chow_end_to_end},
      {"cylindrical grids tester", grid_tester},
      {"grids tester on Laplace with log-concave profile", grid_universality},
      {"boundary proximity and concentration wrappers", boundary_proximity},
      {"localization of disagreement", localization},
      {"smooth boundary scaling", smooth_boundary},
      {"sandwiching LP on majority", sandwich_lp},
      {"TDS learning of balanced intersections", tds_intersections},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<std::size_t>(only) != i + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result res;
    try {
      res = criteria[i].second();
    } catch (const std::exception& e) {
      res = {false, std::string("exception: ") + e.what()};
    }
    all = all && res.pass;
    std::printf("criterion %2zu %s  %s  (%s; %.1f s)\n", i + 1, res.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                res.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
