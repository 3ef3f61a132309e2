#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/distributions.hpp"
#include "tds/moments.hpp"
#include "tds/outcome.hpp"
#include "tds/training.hpp"

namespace tds {

enum class ChowReference { Gaussian, Cube };

inline const char* to_string(ChowReference r) { return r == ChowReference::Gaussian ? "gaussian" : "cube"; }

inline ChowReference chow_reference_from_string(const std::string& s) {
  if (s == "gaussian") return ChowReference::Gaussian;
  if (s == "cube") return ChowReference::Cube;
  throw ConfigError("reference must be gaussian or cube, got '" + s + "'");
}

struct ChowTesterConfig {
  double epsilon = 0.1;
  unsigned degree = 1;
  double coeff_bound = 1.0;
  ChowReference reference = ChowReference::Gaussian;
  std::size_t m_conc = 0;
  std::size_t repetitions = 1;          // majority vote over disjoint blocks when > 1
  RngSpec reference_rng{0x7e57, 0x2ef};  // Monte Carlo stream for reference Chow parameters

  // Delta = eps / (B d^{2 l})
  double tolerance(std::size_t d) const {
    const double delta = epsilon / (coeff_bound * std::pow(static_cast<double>(d), 2.0 * degree));
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("Chow tolerance underflows for this d and degree");
    return delta;
  }

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (!(coeff_bound >= 1.0) || !std::isfinite(coeff_bound)) throw ConfigError("coefficient bound must be >= 1");
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  }
};

inline constexpr double kChowBudgetCap = 1e9;
inline constexpr double kDefaultChowFailProbability = 0.1;
inline constexpr std::size_t kReferenceOversample = 64;
inline constexpr std::size_t kCubeEnumerationMaxDim = 20;

// Coefficient bound of degree-l Gaussian sandwiching polynomials: 2 (10 d)^l.
inline double default_coeff_bound(std::size_t d, unsigned degree) {
  return 2.0 * std::pow(10.0 * static_cast<double>(d), static_cast<double>(degree));
}

inline MomentTable reference_moments(std::size_t d, unsigned degree, ChowReference ref) {
  return ref == ChowReference::Gaussian ? gaussian_moment_table(d, degree) : cube_moment_table(d, degree);
}

// max over |a| <= l of E_ref[x^{2a}].
inline double max_reference_square_moment(std::size_t d, unsigned degree, ChowReference ref) {
  if (ref == ChowReference::Cube) return 1.0;
  double best = 1.0;
  for (const auto& a : enumerate_multi_indices(d, degree)) {
    MultiIndex twice = a;
    for (auto& v : twice) v *= 2;
    best = std::max(best, gaussian_moment(twice));
  }
  return best;
}

// m_conc = ceil(N * M2max / (delta0 * Delta^2)): Chebyshev on each statistic plus a
// union bound over the N monomials.
inline std::size_t compute_sample_budget_chow(std::size_t d, unsigned degree, double coeff_bound, double epsilon,
                                              double fail_prob = kDefaultChowFailProbability,
                                              ChowReference ref = ChowReference::Gaussian) {
  if (d == 0 || !(coeff_bound > 0.0) || !(epsilon > 0.0) || !(fail_prob > 0.0))
    throw ConfigError("budget parameters must be positive");
  ChowTesterConfig cfg;
  cfg.epsilon = epsilon;
  cfg.degree = degree;
  cfg.coeff_bound = coeff_bound;
  const double delta = cfg.tolerance(d);
  const double n_index = count_multi_indices(d, degree);
  const double m = std::ceil(n_index * max_reference_square_moment(d, degree, ref) / (fail_prob * delta * delta));
  if (!(m <= kChowBudgetCap)) throw BudgetRefused("Chow concentration budget", m, kChowBudgetCap);
  return static_cast<std::size_t>(m);
}

inline std::size_t minimum_chow_test_size(const ChowTesterConfig& cfg) {
  return cfg.m_conc + static_cast<std::size_t>(std::ceil(3.0 / (cfg.epsilon * cfg.epsilon)));
}

// E_ref[f(x) x^a] for every |a| <= l. Constant hypotheses are closed form; the cube
// is enumerated exactly up to 2^20 points; otherwise Monte Carlo with 64 m_conc draws.
inline ChowVector reference_chow(const Concept& f, std::size_t d, const ChowTesterConfig& cfg, RngSpec rng) {
  detail::check_dim(f, d);
  if (const auto* c = std::get_if<ConstantLabel>(&f)) {
    MomentTable t = reference_moments(d, cfg.degree, cfg.reference);
    for (double& v : t.values) v *= c->label;
    t.source = "closed_form";
    return t;
  }
  MomentAccumulator acc(d, cfg.degree);
  if (cfg.reference == ChowReference::Cube && d <= kCubeEnumerationMaxDim) {
    const std::size_t total = std::size_t{1} << d;
    std::vector<double> pts;
    std::vector<int> labels;
    for (std::size_t start = 0; start < total; start += kSampleChunk) {
      const std::size_t count = std::min(kSampleChunk, total - start);
      pts.resize(count * d);
      labels.resize(count);
      for (std::size_t j = 0; j < count; ++j)
        for (std::size_t i = 0; i < d; ++i) pts[j * d + i] = ((start + j) >> i) & 1u ? 1.0 : -1.0;
      eval_many(f, pts.data(), count, d, labels.data());
      acc.add(pts.data(), labels.data(), count);
    }
    ChowVector t = acc.chow();
    t.source = "enumeration";
    return t;
  }
  if (cfg.m_conc == 0) throw ConfigError("Monte Carlo reference needs m_conc > 0");
  const std::size_t m_ref = kReferenceOversample * cfg.m_conc;
  const DistributionSpec sampler =
      cfg.reference == ChowReference::Gaussian ? DistributionSpec{StandardGaussian{d}} : DistributionSpec{UniformCube{d}};
  std::vector<int> labels(kSampleChunk);
  for_each_chunk(sampler, m_ref, rng, [&](const double* pts, std::size_t count) {
    eval_many(f, pts, count, d, labels.data());
    acc.add(pts, labels.data(), count);
  });
  ChowVector t = acc.chow();
  t.source = "monte_carlo:" + std::to_string(m_ref);
  return t;
}

inline ChowVector reference_chow(const Concept& f, std::size_t d, const ChowTesterConfig& cfg) {
  return reference_chow(f, d, cfg, cfg.reference_rng);
}

namespace detail {

// Compares empirical moments and Chow parameters with the reference, strict '<'.
inline Verdict chow_verdict(const MomentVector& moments, const ChowVector& chow, const ChowVector& ref_chow,
                            std::size_t d, std::size_t n, const ChowTesterConfig& cfg) {
  const double delta = cfg.tolerance(d);
  const MomentTable ref_moments = reference_moments(d, cfg.degree, cfg.reference);
  if (ref_chow.indices != moments.indices) throw DimensionMismatch(moments.size(), ref_chow.size());
  Verdict v;
  v.thresholds["delta"] = delta;
  v.thresholds["m_conc"] = static_cast<double>(cfg.m_conc);
  v.thresholds["n"] = static_cast<double>(n);
  double worst = -1.0;
  std::string worst_kind;
  std::size_t worst_index = 0;
  auto scan = [&](const MomentTable& got, const MomentTable& want, const char* kind, const char* check) {
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double gap = std::abs(got.values[i] - want.values[i]);
      if (gap > worst) worst = gap, worst_kind = kind, worst_index = i;
      if (!(gap < delta)) v.reject(check, gap - delta);
    }
  };
  scan(moments, ref_moments, "moment", "moment_match");
  scan(chow, ref_chow, "chow", "chow_match");
  v.diagnostics["worst_statistic"] = worst_kind;
  v.diagnostics["worst_index"] = index_key(moments.indices[worst_index]);
  v.diagnostics["worst_abs_gap"] = worst;
  v.diagnostics["reference_chow"] = ref_chow.source;
  return v;
}

inline void check_test_size(std::size_t n, const ChowTesterConfig& cfg) {
  const std::size_t need = minimum_chow_test_size(cfg);
  if (n < need)
    throw InvalidInput("insufficient samples: Chow tester needs " + std::to_string(need) + " points, got " +
                       std::to_string(n));
}

inline Verdict chow_single(const Dataset& test, const Concept& f, const ChowTesterConfig& cfg,
                           const ChowVector& ref_chow) {
  check_test_size(test.size(), cfg);
  MomentAccumulator acc(test.dim(), cfg.degree);
  acc.add(test, &f);
  return chow_verdict(acc.moments(), acc.chow(), ref_chow, test.dim(), test.size(), cfg);
}

}  // namespace detail

// Chow matching tester against a precomputed reference Chow vector.
inline Verdict chow_matching_test(const Dataset& test, const Concept& f, const ChowTesterConfig& cfg,
                                  const ChowVector& ref_chow) {
  cfg.validate();
  detail::check_dim(f, test.dim());
  if (cfg.repetitions == 1) return detail::chow_single(test, f, cfg, ref_chow);
  const auto blocks = partition_blocks(test, cfg.repetitions);
  std::size_t accepts = 0;
  std::optional<Verdict> first_accept, first_reject;
  json votes = json::array();
  for (const auto& b : blocks) {
    Verdict v = detail::chow_single(b, f, cfg, ref_chow);
    votes.push_back(v.accepted);
    if (v.accepted) {
      ++accepts;
      if (!first_accept) first_accept = v;
    } else if (!first_reject) {
      first_reject = v;
    }
  }
  Verdict out = 2 * accepts > blocks.size() ? *first_accept : *first_reject;
  out.diagnostics["votes"] = votes;
  return out;
}

inline Verdict chow_matching_test(const Dataset& test, const Concept& f, const ChowTesterConfig& cfg) {
  cfg.validate();
  detail::check_dim(f, test.dim());
  return chow_matching_test(test, f, cfg, reference_chow(f, test.dim(), cfg));
}

// Same statistics as chow_matching_test(sample(sampler, n, rng), ...) without
// holding the points in memory; the verdicts are bit-identical.
inline Verdict chow_matching_test_streamed(const DistributionSpec& sampler, std::size_t n, RngSpec rng,
                                           const Concept& f, const ChowTesterConfig& cfg,
                                           const ChowVector& ref_chow) {
  cfg.validate();
  if (cfg.repetitions != 1) throw ConfigError("streamed Chow test supports a single repetition");
  const std::size_t d = dim_of(sampler);
  detail::check_dim(f, d);
  detail::check_test_size(n, cfg);
  MomentAccumulator acc(d, cfg.degree);
  std::vector<int> labels(kSampleChunk);
  for_each_chunk(sampler, n, rng, [&](const double* pts, std::size_t count) {
    eval_many(f, pts, count, d, labels.data());
    acc.add(pts, labels.data(), count);
  });
  return detail::chow_verdict(acc.moments(), acc.chow(), ref_chow, d, n, cfg);
}

// Train on the source sample, then accept the hypothesis only if the test marginal
// matches the reference in low-degree moments and Chow parameters of f-hat.
inline TDSOutcome tds_chow_run(const LabeledDataset& train_data, const Dataset& test, const TrainerSpec& trainer,
                               const ChowTesterConfig& cfg, RngSpec rng) {
  if (train_data.dim() != test.dim()) throw DimensionMismatch(train_data.dim(), test.dim());
  cfg.validate();
  TrainingReport report = train(trainer, train_data, rng.child(0));
  TDSOutcome out;
  out.training_error = report.err_train;
  out.details["training"] = report.details;
  out.verdict = chow_matching_test(test, report.hypothesis, cfg);
  if (out.verdict.accepted) {
    out.hypothesis = report.hypothesis;
    out.certified_error_bound = report.err_train + 3.0 * cfg.epsilon;
  }
  return out;
}

inline json chow_config_to_json(const ChowTesterConfig& c) {
  return {{"epsilon", c.epsilon},       {"degree", c.degree},     {"coeff_bound", c.coeff_bound},
          {"reference", to_string(c.reference)}, {"m_conc", c.m_conc}, {"repetitions", c.repetitions}};
}

}  // namespace tds
