// Learn a halfspace from Gaussian data, then ask the Chow tester whether the
// same hypothesis can be trusted on two candidate test sets.

#include <iostream>

#include "tds/tds.hpp"

int main() {
  using namespace tds;
  const std::size_t d = 2;
  const Concept truth = make_halfspace({1.0, 0.5}, 0.2);
  const RngSpec rng{2024, 0};

  const LabeledDataset train_data = label_with(truth, sample(StandardGaussian{d}, 5000, rng.child(1)), 0.0, rng.child(2));

  ChowTesterConfig cfg;
  cfg.epsilon = 0.05;
  cfg.degree = 1;
  cfg.coeff_bound = 1.0;
  cfg.m_conc = compute_sample_budget_chow(d, cfg.degree, cfg.coeff_bound, cfg.epsilon);
  const std::size_t n_test = minimum_chow_test_size(cfg);

  const Dataset same = sample(StandardGaussian{d}, n_test, rng.child(3));
  const Dataset shifted =
      sample(MeanShift{share(StandardGaussian{d}), {1.0, 0.0}}, n_test, rng.child(4));

  for (const auto& [name, test] : {std::pair{"gaussian", &same}, std::pair{"shifted", &shifted}}) {
    const TDSOutcome out = tds_chow_run(train_data, *test, PolyRegression{1, RegressionLoss::L2}, cfg, rng.child(5));
    std::cout << name << ": " << (out.verdict.accepted ? "accept" : "reject");
    if (out.verdict.accepted) std::cout << ", test error at most " << out.certified_error_bound;
    else std::cout << " (" << *out.verdict.failed_check << ")";
    std::cout << "\n";
  }
}
