#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "tds/tds.hpp"

using namespace tds;

namespace {

// d=2, l=1, B=1, eps=0.5: Delta = 0.125 and m_conc = 1920.
ChowTesterConfig small_config() {
  ChowTesterConfig cfg;
  cfg.epsilon = 0.5;
  cfg.degree = 1;
  cfg.coeff_bound = 1.0;
  cfg.m_conc = 1920;
  return cfg;
}

}  // namespace

TEST(ChowBudget, HandDerivedExample) {
  // N = 3 indices, M2max = 1, Delta = 0.5 / 4 = 0.125: 3 / (0.1 * 0.015625) = 1920.
  EXPECT_EQ(compute_sample_budget_chow(2, 1, 1.0, 0.5, 0.1), 1920u);
  EXPECT_EQ(compute_sample_budget_chow(2, 1, 1.0, 0.25, 0.1), 4u * 1920u);
}

TEST(ChowBudget, HalvingEpsilonQuadruplesProperty) {
  for (std::size_t d : {2u, 3u})
    for (unsigned l : {1u, 2u}) {
      const auto a = compute_sample_budget_chow(d, l, 1.0, 0.8);
      const auto b = compute_sample_budget_chow(d, l, 1.0, 0.4);
      EXPECT_NEAR(static_cast<double>(b) / a, 4.0, 4.0 / a) << d << " " << l;
    }
}

TEST(ChowBudget, GaussianUsesLargestSquareMoment) {
  // d=3, l=2, B=2, eps=0.3: N = 10, M2max = E[x^4] = 3, Delta = 0.3 / 162.
  const double delta = 0.3 / 162.0;
  EXPECT_EQ(compute_sample_budget_chow(3, 2, 2.0, 0.3), static_cast<std::size_t>(std::ceil(30.0 / (0.1 * delta * delta))));
  EXPECT_EQ(max_reference_square_moment(3, 2, ChowReference::Cube), 1.0);
}

TEST(ChowBudget, RefusesHugeBudgets) {
  try {
    (void)compute_sample_budget_chow(10, 4, 1.0, 0.1);
    FAIL();
  } catch (const BudgetRefused& e) {
    EXPECT_GT(e.value(), 1e9);
  }
}

TEST(ChowConfig, ToleranceAndValidation) {
  ChowTesterConfig cfg;
  cfg.epsilon = 0.3;
  cfg.degree = 2;
  cfg.coeff_bound = 2.0;
  EXPECT_DOUBLE_EQ(cfg.tolerance(3), 0.3 / 162.0);
  cfg.epsilon = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.epsilon = 0.3;
  cfg.coeff_bound = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_DOUBLE_EQ(default_coeff_bound(3, 2), 2.0 * 900.0);
}

TEST(ReferenceChow, ConstantIsClosedForm) {
  ChowTesterConfig cfg = small_config();
  cfg.degree = 3;
  const auto ref = reference_chow(ConstantLabel{1}, 3, cfg);
  EXPECT_EQ(ref.source, "closed_form");
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(ref.values[i], oracle::gaussian_moment(ref.indices[i]), 1e-8);
}

TEST(ReferenceChow, CubeParityByEnumeration) {
  ChowTesterConfig cfg = small_config();
  cfg.degree = 2;
  cfg.reference = ChowReference::Cube;
  const PolynomialThreshold parity{2, 2, {{{1, 1}, 1.0}}, 0.0};
  const auto ref = reference_chow(parity, 2, cfg);
  EXPECT_EQ(ref.source, "enumeration");
  EXPECT_EQ(ref.at({1, 1}), 1.0);
  EXPECT_EQ(ref.at({1, 0}), 0.0);
  EXPECT_EQ(ref.at({0, 0}), 0.0);
}

TEST(ReferenceChow, HalfspaceMonteCarlo) {
  ChowTesterConfig cfg = small_config();
  cfg.m_conc = 10000;
  const auto ref = reference_chow(Halfspace{{1.0, 0.0}, 0.0}, 2, cfg);
  EXPECT_EQ(ref.source, "monte_carlo:640000");
  const double expected = 2.0 * oracle::simpson([](double z) { return z * oracle::std_normal_pdf(z); }, 0.0, 14.0);
  EXPECT_NEAR(ref.at({1, 0}), expected, 0.003);
}

TEST(ReferenceChow, OffsetHalfspaceMatchesClosedForm) {
  ChowTesterConfig cfg = small_config();
  cfg.degree = 2;
  cfg.m_conc = 20000;
  const std::vector<double> w{1.0, -0.5, 0.3};
  const auto ref = reference_chow(Halfspace{w, 0.2}, 3, cfg);
  ASSERT_EQ(ref.size(), 10u);
  for (std::size_t i = 0; i < ref.size(); ++i)
    EXPECT_NEAR(ref.values[i], oracle::gaussian_halfspace_chow(w, 0.2, ref.indices[i]), 0.01) << index_key(ref.indices[i]);
}

TEST(ChowTest, AcceptsReferenceMarginal) {
  const ChowTesterConfig cfg = small_config();
  const Concept f = Halfspace{{1.0, 0.0}, 0.0};
  const auto ref = reference_chow(f, 2, cfg);
  const std::size_t n = minimum_chow_test_size(cfg);
  EXPECT_EQ(n, 1920u + 12u);
  int accepts = 0;
  for (std::uint64_t t = 0; t < 20; ++t)
    accepts += chow_matching_test(sample(StandardGaussian{2}, n, {100, t}), f, cfg, ref).accepted;
  EXPECT_GE(accepts, 14);
}

TEST(ChowTest, RejectsMeanShift) {
  ChowTesterConfig cfg;
  cfg.epsilon = 0.3;
  cfg.degree = 2;
  cfg.coeff_bound = 2.0;
  cfg.m_conc = 1000;  // the reference is only consulted on the Chow side
  const Concept f = Halfspace{{1.0, 0.0, 0.0}, 0.0};
  const auto ref = reference_chow(f, 3, cfg);
  for (std::uint64_t t = 0; t < 5; ++t) {
    const auto v = chow_matching_test(sample(MeanShift{share(StandardGaussian{3}), {2.0, 0.0, 0.0}}, 100000, {101, t}),
                                      f, cfg, ref);
    EXPECT_FALSE(v.accepted);
    EXPECT_EQ(v.failed_check, "moment_match");
    EXPECT_GT(v.worst_gap, 1.0);
  }
}

TEST(ChowTest, DegreeZeroChecksMassAndMean) {
  ChowTesterConfig cfg = small_config();
  cfg.degree = 0;
  const Concept f = Halfspace{{1.0, 0.0}, 0.0};
  const auto ref = reference_chow(f, 2, cfg);
  ASSERT_EQ(ref.size(), 1u);
  const Dataset ds = sample(StandardGaussian{2}, minimum_chow_test_size(cfg), {102, 0});
  const auto v = chow_matching_test(ds, f, cfg, ref);
  const double mean_label = empirical_chow(ds, f, 0).values[0];
  EXPECT_EQ(v.accepted, std::abs(mean_label - ref.values[0]) < cfg.tolerance(2));
  EXPECT_EQ(v.thresholds.at("delta"), 1.0 * cfg.epsilon);
}

TEST(ChowTest, InsufficientSamples) {
  const ChowTesterConfig cfg = small_config();
  const Concept f = Halfspace{{1.0, 0.0}, 0.0};
  try {
    (void)chow_matching_test(sample(StandardGaussian{2}, 100, {1, 0}), f, cfg);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient samples"), std::string::npos);
  }
}

TEST(ChowTest, DimensionMismatch) {
  const ChowTesterConfig cfg = small_config();
  EXPECT_THROW((void)chow_matching_test(sample(StandardGaussian{3}, 3000, {1, 0}), Halfspace{{1.0, 0.0}, 0.0}, cfg),
               DimensionMismatch);
}

TEST(ChowTest, StrictComparisonAtTheTolerance) {
  // Twelve copies of x = (0.125, 0) with f = +1: the first moment gap equals Delta exactly.
  ChowTesterConfig cfg = small_config();
  cfg.m_conc = 0;
  cfg.epsilon = 0.5;
  const auto ref = reference_chow(ConstantLabel{1}, 2, cfg);
  std::vector<double> vals;
  for (int i = 0; i < 12; ++i) vals.insert(vals.end(), {0.125, 0.0});
  const Dataset ds(2, vals);
  const auto m = empirical_moments(ds, 1);
  ASSERT_EQ(m.at({1, 0}), cfg.tolerance(2));
  const auto v = chow_matching_test(ds, ConstantLabel{1}, cfg, ref);
  EXPECT_FALSE(v.accepted);
  EXPECT_EQ(v.worst_gap, 0.0);
}

TEST(ChowTest, MonotoneInEpsilonProperty) {
  const Concept f = make_halfspace({1.0, 0.5}, 0.2);
  ChowTesterConfig base = small_config();
  base.epsilon = 0.2;
  const auto ref = reference_chow(f, 2, base);
  for (std::uint64_t t = 0; t < 30; ++t) {
    const Dataset ds = sample(Mixture{{{0.9, share(StandardGaussian{2})},
                                       {0.1, share(MeanShift{share(StandardGaussian{2}), {0.5 * (t % 5), 0.0}})}}},
                              4000, {103, t});
    bool accepted_before = false;
    for (double eps : {0.2, 0.3, 0.45, 0.6, 0.9}) {
      ChowTesterConfig cfg = base;
      cfg.epsilon = eps;
      const bool acc = chow_matching_test(ds, f, cfg, ref).accepted;
      if (accepted_before) EXPECT_TRUE(acc) << "trial " << t << " eps " << eps;
      accepted_before = accepted_before || acc;
    }
  }
}

TEST(ChowTest, DeterministicVerdict) {
  const ChowTesterConfig cfg = small_config();
  const Concept f = make_halfspace({1.0, 0.5}, 0.2);
  const Dataset ds = sample(StandardGaussian{2}, 3000, {104, 0});
  EXPECT_EQ(json(chow_matching_test(ds, f, cfg)).dump(), json(chow_matching_test(ds, f, cfg)).dump());
}

TEST(ChowTest, StreamedMatchesInMemory) {
  const ChowTesterConfig cfg = small_config();
  const Concept f = make_halfspace({1.0, 0.5}, 0.2);
  const auto ref = reference_chow(f, 2, cfg);
  for (const DistributionSpec& spec :
       {DistributionSpec(StandardGaussian{2}), DistributionSpec(MeanShift{share(StandardGaussian{2}), {0.1, 0.0}})}) {
    const auto a = chow_matching_test(sample(spec, 10000, {105, 0}), f, cfg, ref);
    const auto b = chow_matching_test_streamed(spec, 10000, {105, 0}, f, cfg, ref);
    EXPECT_EQ(json(a).dump(), json(b).dump());
  }
}

TEST(ChowTest, RepetitionsVoteByMajority) {
  ChowTesterConfig cfg = small_config();
  cfg.repetitions = 3;
  const Concept f = Halfspace{{1.0, 0.0}, 0.0};
  const auto ref = reference_chow(f, 2, cfg);
  const auto v = chow_matching_test(sample(StandardGaussian{2}, 3 * minimum_chow_test_size(cfg), {106, 0}), f, cfg, ref);
  ASSERT_TRUE(v.diagnostics.contains("votes"));
  int yes = 0;
  for (const auto& b : v.diagnostics["votes"]) yes += b.get<bool>();
  EXPECT_EQ(v.accepted, yes >= 2);
  const auto shifted = chow_matching_test(
      sample(MeanShift{share(StandardGaussian{2}), {1.0, 0.0}}, 3 * minimum_chow_test_size(cfg), {106, 1}), f, cfg, ref);
  EXPECT_FALSE(shifted.accepted);
}

TEST(TdsChow, PlantedTruthCertifiesThreeEpsilon) {
  const ChowTesterConfig cfg = small_config();
  const Concept truth = Halfspace{{1.0, 0.0}, 0.0};
  const auto train_data = label_with(truth, sample(StandardGaussian{2}, 2000, {107, 0}), 0.0, {107, 1});
  const auto out = tds_chow_run(train_data, sample(StandardGaussian{2}, 4000, {107, 2}), PlantedOracle{truth, 0.0, 0.0},
                                cfg, {107, 3});
  ASSERT_TRUE(out.verdict.accepted);
  ASSERT_TRUE(out.hypothesis.has_value());
  EXPECT_EQ(out.training_error, 0.0);
  EXPECT_DOUBLE_EQ(out.certified_error_bound, 3 * cfg.epsilon);
}

TEST(TdsChow, AcceptedRunsRespectTheBound) {
  ChowTesterConfig cfg;
  cfg.epsilon = 0.1;
  cfg.degree = 1;
  cfg.coeff_bound = 1.0;
  cfg.m_conc = compute_sample_budget_chow(2, 1, 1.0, 0.1);
  const Concept truth = make_halfspace({1.0, -0.7}, 0.3);
  int accepted = 0;
  for (std::uint64_t t = 0; t < 5; ++t) {
    const auto train_data = label_with(truth, sample(StandardGaussian{2}, 5000, {108, t}), 0.0, {109, t});
    const auto out = tds_chow_run(train_data, sample(StandardGaussian{2}, minimum_chow_test_size(cfg), {110, t}),
                                  PolyRegression{1, RegressionLoss::L2}, cfg, {111, t});
    if (!out.verdict.accepted) {
      EXPECT_FALSE(out.hypothesis.has_value());
      continue;
    }
    ++accepted;
    const double err_test = estimate_disagreement(truth, *out.hypothesis, StandardGaussian{2}, 200000, {112, t});
    EXPECT_LE(err_test, out.training_error + 3 * cfg.epsilon + 0.02);
  }
  EXPECT_GE(accepted, 3);
}

TEST(TdsChow, BoundarySpikeIsRejected) {
  const ChowTesterConfig cfg = small_config();
  const Halfspace truth{{1.0, 0.0}, 0.5};
  const auto train_data = label_with(truth, sample(StandardGaussian{2}, 2000, {113, 0}), 0.0, {113, 1});
  const Dataset test = sample(BoundarySpike{share(StandardGaussian{2}), truth, 0.05, 0.5}, 4000, {113, 2});
  const auto out = tds_chow_run(train_data, test, PlantedOracle{truth, 0.0, 0.0}, cfg, {113, 3});
  EXPECT_FALSE(out.verdict.accepted);
  EXPECT_FALSE(out.hypothesis.has_value());
}

TEST(TdsChow, OutcomeJsonShape) {
  const ChowTesterConfig cfg = small_config();
  const Concept truth = Halfspace{{1.0, 0.0}, 0.0};
  const auto train_data = label_with(truth, sample(StandardGaussian{2}, 2000, {114, 0}), 0.0, {114, 1});
  const auto out = tds_chow_run(train_data, sample(StandardGaussian{2}, 4000, {114, 2}), PlantedOracle{truth, 0.0, 0.0},
                                cfg, {114, 3});
  const json j = outcome_to_json(out);
  for (const char* key : {"verdict", "training_error", "certified_error_bound"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["verdict"]["accepted"], out.verdict.accepted);
}
