#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "tds/tds.hpp"

using namespace tds;

TEST(MultiIndices, SmallEnumerations) {
  const auto two = enumerate_multi_indices(2, 1);
  ASSERT_EQ(two.size(), 3u);
  EXPECT_EQ(two[0], (MultiIndex{0, 0}));
  EXPECT_EQ(two[1], (MultiIndex{0, 1}));
  EXPECT_EQ(two[2], (MultiIndex{1, 0}));
  EXPECT_EQ(enumerate_multi_indices(1, 4).size(), 5u);
  EXPECT_EQ(enumerate_multi_indices(4, 2).size(), 15u);
}

TEST(MultiIndices, CountSortedUniqueProperty) {
  for (std::size_t d = 1; d <= 6; ++d)
    for (unsigned l = 0; l <= 4; ++l) {
      const auto idx = enumerate_multi_indices(d, l);
      EXPECT_EQ(static_cast<double>(idx.size()), std::round(std::tgamma(d + l + 1.0) /
                                                           (std::tgamma(d + 1.0) * std::tgamma(l + 1.0))));
      EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
      EXPECT_EQ(std::set<MultiIndex>(idx.begin(), idx.end()).size(), idx.size());
      for (const auto& a : idx) EXPECT_LE(total_degree(a), l);
    }
}

TEST(MultiIndices, CapRefusesWithCount) {
  try {
    (void)enumerate_multi_indices(100, 6);
    FAIL();
  } catch (const BudgetRefused& e) {
    EXPECT_GT(e.value(), 1e6);
    EXPECT_EQ(e.cap(), 1e6);
  }
}

TEST(MultiIndices, MultilinearAreSubsetsOfFull) {
  const auto ml = enumerate_multilinear_indices(5, 3);
  EXPECT_EQ(ml.size(), 1u + 5 + 10 + 10);
  for (const auto& a : ml)
    for (unsigned e : a) EXPECT_LE(e, 1u);
}

TEST(MultiIndices, KeyRoundTrip) {
  const MultiIndex a{3, 0, 12};
  EXPECT_EQ(parse_index_key(index_key(a)), a);
}

TEST(ReferenceMoments, GaussianAgainstQuadrature) {
  EXPECT_EQ(gaussian_moment({0, 0, 0}), 1.0);
  EXPECT_EQ(gaussian_moment({2, 0}), 1.0);
  EXPECT_EQ(gaussian_moment({1, 2}), 0.0);
  for (const MultiIndex& a : {MultiIndex{4, 2}, MultiIndex{6}, MultiIndex{2, 2, 4}, MultiIndex{3, 2}})
    EXPECT_NEAR(gaussian_moment(a), oracle::gaussian_moment(a), 1e-8 * std::max(1.0, gaussian_moment(a)))
        << index_key(a);
  EXPECT_EQ(gaussian_moment({4, 2}), 3.0);
}

TEST(ReferenceMoments, CubeAgainstEnumeration) {
  for (const auto& a : enumerate_multi_indices(3, 5)) EXPECT_EQ(cube_moment(a), oracle::cube_moment(a));
  EXPECT_EQ(cube_moment({2, 4}), 1.0);
  EXPECT_EQ(cube_moment({1, 0}), 0.0);
  EXPECT_EQ(cube_moment({3, 2}), 0.0);
}

TEST(EmpiricalMoments, DirectEvaluation) {
  const auto m = empirical_moments(Dataset(2, {2.0, 0.0}), 2);
  EXPECT_EQ(m.at({2, 0}), 4.0);
  EXPECT_EQ(m.at({1, 1}), 0.0);
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(empirical_moments(Dataset(2, {1, 1, -1, -1}), 1).at({1, 0}), 0.0);
}

TEST(EmpiricalMoments, GaussianSecondMoment) {
  const auto m = empirical_moments(sample(StandardGaussian{1}, 1000000, {1, 0}), 2);
  EXPECT_GE(m.at({2}), 0.99);
  EXPECT_LE(m.at({2}), 1.01);
}

TEST(EmpiricalMoments, MatchesNaiveSumInInputOrder) {
  const Dataset ds = sample(ProductLaplace{3}, 3000, {2, 0});
  const auto m = empirical_moments(ds, 3);
  for (std::size_t i = 0; i < m.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ds.size(); ++j) {
      double v = 1.0;
      for (std::size_t c = 0; c < 3; ++c) v *= std::pow(ds.point(j)[c], m.indices[i][c]);
      s += v;
    }
    EXPECT_NEAR(m.values[i], s / ds.size(), 1e-12 * std::max(1.0, std::abs(s / ds.size())));
  }
}

TEST(EmpiricalMoments, OverflowNamesIndex) {
  try {
    (void)empirical_moments(Dataset(1, {1e200}), 2);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(index_key({2})), std::string::npos) << e.what();
  }
}

TEST(EmpiricalChow, ConstantLabelsGiveSignedMoments) {
  const Dataset ds = sample(StandardGaussian{2}, 1000, {3, 0});
  const auto m = empirical_moments(ds, 2);
  const auto plus = empirical_chow(ds, ConstantLabel{1}, 2);
  const auto minus = empirical_chow(ds, ConstantLabel{-1}, 2);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(plus.values[i], m.values[i]);
    EXPECT_EQ(minus.values[i], -m.values[i]);
  }
}

TEST(EmpiricalChow, HalfspaceFirstCoefficient) {
  const double expected = 2.0 * oracle::simpson([](double z) { return z * oracle::std_normal_pdf(z); }, 0.0, 14.0);
  ASSERT_NEAR(expected, std::sqrt(2.0 / std::numbers::pi), 1e-10);
  const auto c = empirical_chow(sample(StandardGaussian{3}, 1000000, {4, 0}), Halfspace{{1.0, 0.0, 0.0}, 0.0}, 1);
  EXPECT_NEAR(c.at({1, 0, 0}), expected, 0.01);
}

TEST(EmpiricalChow, DimensionMismatch) {
  EXPECT_THROW((void)empirical_chow(Dataset(2, {1, 1}), Halfspace{{1.0, 0.0, 0.0}, 0.0}, 1), DimensionMismatch);
}

TEST(MomentTableJson, RoundTrip) {
  const auto m = empirical_moments(sample(StandardGaussian{2}, 100, {5, 0}), 3);
  const auto back = moment_table_from_json(json::parse(to_json_value(m).dump()));
  EXPECT_EQ(back.indices, m.indices);
  EXPECT_EQ(back.values, m.values);
}

TEST(CellProbability, Examples) {
  const std::vector<double> lo{0.0}, hi{8.0};
  EXPECT_NEAR(gaussian_cell_probability(lo, hi), 0.5, 1e-10);
  const std::vector<double> a{-1.0, -1.0}, b{1.0, 1.0};
  const double side = 2.0 * oracle::std_normal_cdf(1.0) - 1.0;
  EXPECT_NEAR(gaussian_cell_probability(a, b), side * side, 1e-10);
  EXPECT_NEAR(side * side, 0.4660, 1e-4);
  const std::vector<double> z{0.3};
  EXPECT_EQ(gaussian_cell_probability(z, z), 0.0);
  EXPECT_THROW((void)gaussian_cell_probability(hi, lo), InvalidInput);
}

TEST(CellProbability, AgreesWithQuadratureAcrossRangeProperty) {
  CounterEngine eng({6, 0});
  for (int t = 0; t < 200; ++t) {
    const double a = -6.0 + 12.0 * eng.uniform();
    const double b = a + 2.0 * eng.uniform();
    const double expected = oracle::simpson(oracle::std_normal_pdf, a, b, 4000);
    EXPECT_NEAR(normal_interval_probability(a, b), expected, 1e-12) << a << " " << b;
  }
}

TEST(MaxEigenvalue, RankOne) {
  EXPECT_NEAR(max_eigenvalue(Dataset(3, {1, 0, 0, 1, 0, 0, 1, 0, 0})), 1.0, 1e-12);
}

TEST(MaxEigenvalue, GaussianNearOne) {
  const double v = max_eigenvalue(sample(StandardGaussian{5}, 1000000, {7, 0}));
  EXPECT_GE(v, 0.98);
  EXPECT_LE(v, 1.02);
}

TEST(MaxEigenvalue, AgreesWithEigenProperty) {
  CounterEngine eng({8, 0});
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + eng.below(8);
    const Dataset ds = sample(Scale{share(ProductLaplace{d}), 0.5 + eng.uniform()}, 500, {8, std::uint64_t(t + 1)});
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t j = 0; j < ds.size(); ++j) {
      Eigen::Map<const Eigen::VectorXd> x(ds.point(j).data(), d);
      m += x * x.transpose();
    }
    m /= static_cast<double>(ds.size());
    const double ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().maxCoeff();
    EXPECT_NEAR(max_eigenvalue(ds), ref, 1e-9 * std::max(1.0, ref));
  }
}
