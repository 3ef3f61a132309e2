// Command-line front end: sampling, training, the three testers, the TDS
// pipelines, the sandwiching LP and experiment sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tds/tds.hpp"

namespace fs = std::filesystem;
using tds::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw tds::InvalidInput("cannot open JSON file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw tds::ParseError("invalid JSON in " + path.string() + ": " + e.what(), 0, e.byte);
  }
}

// Writes to `out` atomically, or to stdout when empty.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) std::cout << text;
  else tds::detail::write_atomically(out, text);
}

void emit_json(const std::string& out, const json& j) { emit(out, j.dump(2) + "\n"); }

std::size_t data_dim(const fs::path& path, std::size_t concept_dim) {
  return concept_dim ? concept_dim : tds::csv_column_count(path);
}

tds::StructuredProfile profile_arg(const std::string& s, std::size_t k) {
  tds::StructuredProfile p;
  if (s == "gaussian") p = tds::gaussian_profile(k);
  else if (s == "laplace" || s == "log_concave") p = tds::log_concave_profile(k);
  else p = tds::profile_from_json(read_json(s));
  p.k = k;
  return p;
}

std::vector<std::vector<double>> basis_arg(const fs::path& path) {
  const json j = read_json(path);
  const json& rows = j.is_object() ? j.at("basis") : j;
  return rows.get<std::vector<std::vector<double>>>();
}

tds::HalfspaceIntersection intersection_arg(const tds::Concept& c) {
  if (const auto* f = std::get_if<tds::HalfspaceIntersection>(&c)) return *f;
  if (const auto* h = std::get_if<tds::Halfspace>(&c)) return tds::HalfspaceIntersection{{*h}};
  throw tds::ConfigError("hypothesis must be a halfspace or an intersection of halfspaces");
}

// Expands `--config file.json` into flags placed before the user's own flags, so
// explicit flags win under the take-last policy.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  std::vector<std::string> injected;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      const json j = read_json(args[++i]);
      if (!j.is_object()) throw tds::ConfigError("--config must hold a JSON object");
      for (const auto& [key, value] : j.items()) {
        injected.push_back("--" + key);
        injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
      }
    } else {
      out.push_back(args[i]);
    }
  }
  if (!injected.empty()) {
    // Flags belong to the subcommand, which is the first argument.
    if (out.empty()) throw tds::ConfigError("--config needs a subcommand");
    out.insert(out.begin() + 1, injected.begin(), injected.end());
  }
  return out;
}

std::size_t default_jobs() {
  if (const char* env = std::getenv("TDS_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw tds::ConfigError("TDS_JOBS must be a positive integer");
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution-shift testers and TDS learning pipelines"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "tds 1.0");

  std::uint64_t seed = 0;
  std::string out;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out, "output file (stdout when omitted)");
    sub->add_option("--config", "JSON object of flag values; explicit flags override");
  };

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "draw points from a distribution spec");
  std::string dist_path, concept_path;
  std::size_t n = 1000;
  double noise = 0.0;
  sample_cmd->add_option("--dist", dist_path, "distribution spec JSON")->required();
  sample_cmd->add_option("-n,--n", n, "number of points");
  sample_cmd->add_option("--concept", concept_path, "label points with this concept");
  sample_cmd->add_option("--noise", noise, "label flip rate");
  common(sample_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a hypothesis on labeled data");
  std::string spec_path, data_path;
  train_cmd->add_option("--spec", spec_path, "trainer spec JSON")->required();
  train_cmd->add_option("--data", data_path, "labeled CSV (label last)")->required();
  common(train_cmd);

  // test-chow and tds-chow share the Chow flags.
  std::string test_path, train_path, hyp_path, trainer_path;
  double epsilon = 0.1, coeff_bound = 0.0, fail_prob = tds::kDefaultChowFailProbability;
  unsigned degree = 1;
  std::string reference = "gaussian";
  std::size_t m_conc = 0, repetitions = 1;
  auto chow_flags = [&](CLI::App* sub) {
    sub->add_option("--epsilon", epsilon, "accuracy parameter");
    sub->add_option("--degree", degree, "moment degree");
    sub->add_option("--coeff-bound", coeff_bound, "sandwiching coefficient bound (default 2(10d)^l)");
    sub->add_option("--reference", reference, "gaussian|cube")->check(CLI::IsMember({"gaussian", "cube"}));
    sub->add_option("--m-conc", m_conc, "concentration budget (default: computed)");
    sub->add_option("--fail-prob", fail_prob, "failure probability for the computed budget");
    sub->add_option("--repetitions", repetitions, "majority over disjoint blocks");
  };
  auto* chow_cmd = app.add_subcommand("test-chow", "Chow matching tester");
  chow_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  chow_cmd->add_option("--hypothesis", hyp_path, "hypothesis JSON")->required();
  chow_flags(chow_cmd);
  common(chow_cmd);

  auto* tds_chow_cmd = app.add_subcommand("tds-chow", "train, then certify through Chow matching");
  tds_chow_cmd->add_option("--train", train_path, "labeled training CSV")->required();
  tds_chow_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  tds_chow_cmd->add_option("--trainer", trainer_path, "trainer spec JSON")->required();
  chow_flags(tds_chow_cmd);
  common(tds_chow_cmd);

  // grid tester flags
  std::string basis_path, profile = "gaussian", eta_arg = "AUTO";
  unsigned p = 2;
  double radius = 3.0, slack_s = 0.1, slack_e = 0.0, sigma_hat = 0.0;
  auto grid_flags = [&](CLI::App* sub) {
    sub->add_option("--profile", profile, "gaussian|laplace|custom profile JSON");
    sub->add_option("--p", p, "moment order");
    sub->add_option("--radius", radius, "grid radius R");
    sub->add_option("--eta", eta_arg, "cell side, or AUTO");
    sub->add_option("--slack-s", slack_s, "basis slack delta_s");
    sub->add_option("--slack-e", slack_e, "disagreement slack delta_e");
    sub->add_option("--epsilon", epsilon, "accuracy parameter");
  };
  auto* grid_cmd = app.add_subcommand("test-grid", "cylindrical grids tester");
  grid_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  grid_cmd->add_option("--basis", basis_path, "k x d orthonormal basis JSON")->required();
  grid_cmd->add_option("--sigma-hat", sigma_hat, "hypothesis smoothness for AUTO eta (default 10 k log(k+1))");
  grid_flags(grid_cmd);
  common(grid_cmd);

  auto* junta_cmd = app.add_subcommand("tds-junta", "train a subspace junta, then certify on a grid");
  junta_cmd->add_option("--train", train_path, "labeled training CSV")->required();
  junta_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  junta_cmd->add_option("--trainer", trainer_path, "trainer spec JSON")->required();
  grid_flags(junta_cmd);
  common(junta_cmd);

  // boundary tester
  double varrho = 0.05, density_bound = tds::kGaussianDensityBound, beta = 0.2;
  std::size_t k = 2;
  std::string variant = "spectral";
  auto* boundary_cmd = app.add_subcommand("test-boundary", "boundary proximity tester");
  boundary_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  boundary_cmd->add_option("--hypothesis", hyp_path, "halfspace or intersection JSON")->required();
  boundary_cmd->add_option("--varrho", varrho, "slab half-width");
  boundary_cmd->add_option("--density-bound", density_bound, "one-dimensional density cap C");
  common(boundary_cmd);

  auto* inter_cmd = app.add_subcommand("tds-intersections", "train an intersection, then certify by boundary proximity");
  inter_cmd->add_option("--train", train_path, "labeled training CSV")->required();
  inter_cmd->add_option("--test", test_path, "unlabeled test CSV")->required();
  inter_cmd->add_option("--trainer", trainer_path, "trainer spec JSON")->required();
  inter_cmd->add_option("--epsilon", epsilon, "accuracy parameter");
  inter_cmd->add_option("--beta", beta, "balance of the concept class");
  inter_cmd->add_option("--k", k, "number of halfspaces");
  inter_cmd->add_option("--variant", variant, "moment|spectral")->check(CLI::IsMember({"moment", "spectral"}));
  inter_cmd->add_option("--p", p, "moment order for the moment variant");
  inter_cmd->add_option("--density-bound", density_bound, "one-dimensional density cap C");
  common(inter_cmd);

  // sandwich LP
  std::string function_path;
  std::size_t dim = 0;
  auto* sandwich_cmd = app.add_subcommand("sandwich-lp", "optimal L1 sandwiching pair on the cube");
  sandwich_cmd->add_option("--function", function_path, "concept JSON")->required();
  sandwich_cmd->add_option("--dim", dim, "cube dimension")->required();
  sandwich_cmd->add_option("--degree", degree, "polynomial degree")->required();
  common(sandwich_cmd);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "time the core kernels");
  bench_cmd->add_option("-n,--n", n, "points per kernel");
  common(bench_cmd);

  // emit-table
  std::vector<std::string> reports;
  auto* table_cmd = app.add_subcommand("emit-table", "CSV table from experiment reports");
  table_cmd->add_option("reports", reports, "report files");
  table_cmd->add_option("--out", out, "output file (stdout when omitted)");

  // run
  std::string experiment_path;
  std::size_t jobs = 0;
  auto* run_cmd = app.add_subcommand("run", "run an experiment sweep");
  run_cmd->add_option("experiment", experiment_path, "experiment config JSON")->required();
  run_cmd->add_option("--jobs", jobs, "parallel trials (default TDS_JOBS or 1)");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::Success& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }

    const tds::RngSpec rng{seed, 0};
    if (*sample_cmd) {
      const auto spec = tds::spec_from_json(read_json(dist_path));
      const auto ds = tds::sample(spec, n, rng.child(1));
      if (concept_path.empty()) emit(out, tds::to_csv(ds));
      else emit(out, tds::to_csv(tds::label_with(tds::concept_from_json(read_json(concept_path)), ds, noise, rng.child(2))));
    } else if (*train_cmd) {
      const auto spec = tds::trainer_from_json(read_json(spec_path));
      const auto data = tds::load_labeled_dataset(data_path, tds::csv_column_count(data_path) - 1);
      const auto report = tds::train(spec, data, rng);
      emit_json(out, {{"hypothesis", tds::concept_to_json(report.hypothesis)},
                      {"err_train", report.err_train},
                      {"details", report.details}});
    } else if (*chow_cmd || *tds_chow_cmd) {
      tds::ChowTesterConfig cfg;
      cfg.epsilon = epsilon;
      cfg.degree = degree;
      cfg.reference = tds::chow_reference_from_string(reference);
      cfg.repetitions = repetitions;
      cfg.reference_rng = rng.child(7);
      auto finish_config = [&](std::size_t d) {
        cfg.coeff_bound = coeff_bound > 0.0 ? coeff_bound : tds::default_coeff_bound(d, degree);
        cfg.m_conc = m_conc ? m_conc
                            : tds::compute_sample_budget_chow(d, degree, cfg.coeff_bound, epsilon, fail_prob, cfg.reference);
      };
      if (*chow_cmd) {
        const auto h = tds::concept_from_json(read_json(hyp_path));
        const auto test = tds::load_dataset(test_path, data_dim(test_path, tds::concept_dim(h)));
        finish_config(test.dim());
        json j = tds::chow_matching_test(test, h, cfg);
        j["config"] = tds::chow_config_to_json(cfg);
        emit_json(out, j);
      } else {
        const auto trainer = tds::trainer_from_json(read_json(trainer_path));
        const auto train = tds::load_labeled_dataset(train_path, tds::csv_column_count(train_path) - 1);
        const auto test = tds::load_dataset(test_path, train.dim());
        finish_config(test.dim());
        emit_json(out, tds::outcome_to_json(tds::tds_chow_run(train, test, trainer, cfg, rng)));
      }
    } else if (*grid_cmd) {
      const auto basis = basis_arg(basis_path);
      if (basis.empty()) throw tds::ConfigError("basis has no rows");
      const auto test = tds::load_dataset(test_path, basis.front().size());
      tds::GridTesterConfig cfg;
      cfg.p = p;
      cfg.R = radius;
      cfg.epsilon = epsilon;
      cfg.profile = profile_arg(profile, basis.size());
      const bool automatic = eta_arg == "AUTO" || eta_arg == "auto";
      cfg.eta = automatic ? tds::choose_eta(slack_s, radius, p,
                                            sigma_hat > 0.0 ? sigma_hat : tds::convex_smoothness(basis.size()),
                                            basis.size(), cfg.profile)
                          : std::stod(eta_arg);
      json j = tds::cylindrical_grid_test(test, basis, cfg);
      j["eta_source"] = automatic ? "auto" : "override";
      emit_json(out, j);
    } else if (*junta_cmd) {
      const auto trainer = tds::trainer_from_json(read_json(trainer_path));
      const auto train = tds::load_labeled_dataset(train_path, tds::csv_column_count(train_path) - 1);
      const auto test = tds::load_dataset(test_path, train.dim());
      tds::GridTesterConfig cfg;
      cfg.p = p;
      cfg.R = radius;
      cfg.epsilon = epsilon;
      cfg.profile = profile_arg(profile, 1);
      std::optional<double> eta;
      if (eta_arg != "AUTO" && eta_arg != "auto") eta = std::stod(eta_arg);
      const tds::NeighborhoodSpec nb{slack_s, slack_e, tds::NeighborhoodKind::Subspace};
      emit_json(out, tds::outcome_to_json(tds::tds_subspace_junta_run(train, test, trainer, cfg, nb, rng, eta)));
    } else if (*boundary_cmd) {
      const auto h = intersection_arg(tds::concept_from_json(read_json(hyp_path)));
      const auto test = tds::load_dataset(test_path, h.halfspaces.front().w.size());
      emit_json(out, tds::boundary_proximity_test(test, h, {varrho, density_bound}));
    } else if (*inter_cmd) {
      const auto trainer = tds::trainer_from_json(read_json(trainer_path));
      const auto train = tds::load_labeled_dataset(train_path, tds::csv_column_count(train_path) - 1);
      const auto test = tds::load_dataset(test_path, train.dim());
      tds::IntersectionRunConfig cfg;
      cfg.epsilon = epsilon;
      cfg.beta = beta;
      cfg.k = k;
      cfg.variant = tds::boundary_variant_from_string(variant);
      cfg.p = p;
      cfg.density_bound = density_bound;
      emit_json(out, tds::outcome_to_json(tds::tds_intersections_run(train, test, trainer, cfg, rng)));
    } else if (*sandwich_cmd) {
      const auto f = tds::concept_from_json(read_json(function_path));
      const auto pair = tds::exact_sandwich_lp(f, dim, degree);
      const auto check = tds::verify_sandwich(pair, f);
      json j = tds::sandwich_to_json(pair);
      j["verified"] = check.ok;
      j["worst_violation"] = check.worst_violation;
      emit_json(out, j);
    } else if (*bench_cmd) {
      json j = json::object();
      auto timed = [&](const char* name, auto&& fn) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        j[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      };
      tds::Dataset ds(1, {0.0});
      timed("sample_gaussian_d3", [&] { ds = tds::sample(tds::StandardGaussian{3}, n, rng); });
      timed("moments_d3_l2", [&] { (void)tds::empirical_moments(ds, 2); });
      timed("max_eigenvalue_d3", [&] { (void)tds::max_eigenvalue(ds); });
      timed("sandwich_majority_d5_l3", [&] {
        tds::PolynomialThreshold maj{5, 1, {}, 0.0};
        for (std::size_t i = 0; i < 5; ++i) {
          tds::MultiIndex a(5, 0);
          a[i] = 1;
          maj.coeffs[a] = 1.0;
        }
        (void)tds::exact_sandwich_lp(maj, 5, 3);
      });
      j["n"] = n;
      emit_json(out, j);
    } else if (*table_cmd) {
      std::vector<fs::path> paths(reports.begin(), reports.end());
      emit(out, tds::emit_table(paths));
    } else if (*run_cmd) {
      const fs::path path = experiment_path;
      if (!fs::exists(path)) throw tds::ConfigError("experiment config not found: " + path.string());
      auto cfg = tds::experiment_from_json(read_json(path), path.parent_path());
      cfg.jobs = jobs ? jobs : default_jobs();
      const auto report = tds::run_experiment(cfg);
      if (!cfg.output) std::cout << report.to_jsonl();
      else std::cout << report.aggregate.dump() << "\n";
      return report.all_completed ? 0 : 3;
    }
    return 0;
  } catch (const tds::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid number: " << e.what() << "\n";
    return 2;
  } catch (const tds::RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
}
