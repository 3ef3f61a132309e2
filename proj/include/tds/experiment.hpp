#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/boundary_tester.hpp"
#include "tds/chow_tester.hpp"
#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/distributions.hpp"
#include "tds/grid_tester.hpp"
#include "tds/training.hpp"

namespace tds {

inline constexpr const char* kReportSchema = "tds-experiment/1";

enum class Pipeline { Chow, Junta, Intersections };

struct ExperimentConfig {
  std::string name = "experiment";
  Pipeline pipeline = Pipeline::Chow;
  std::optional<DistributionSpec> train_distribution;
  std::optional<DistributionSpec> test_distribution;
  std::optional<std::filesystem::path> train_data;  // labeled CSV instead of sampling
  std::optional<std::filesystem::path> test_data;   // unlabeled CSV instead of sampling
  std::optional<Concept> truth;
  TrainerSpec trainer = PolyRegression{};
  json tester = json::object();
  std::size_t n_train = 5000;
  std::size_t n_test = 0;  // 0: the pipeline's minimum
  std::size_t n_eval = 100000;
  double noise_rate = 0.0;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
  bool record_timing = false;
  std::size_t jobs = 1;
};

namespace detail {

// Reads a field, prefixing any failure with its path in the config.
template <typename T, typename F>
T config_field(const json& j, const std::string& path, const std::string& key, F&& parse) {
  try {
    return parse(j.at(key));
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

inline Pipeline pipeline_from_string(const std::string& s) {
  if (s == "tds-chow") return Pipeline::Chow;
  if (s == "tds-junta") return Pipeline::Junta;
  if (s == "tds-intersections") return Pipeline::Intersections;
  throw ConfigError("unknown pipeline '" + s + "' (tds-chow, tds-junta, tds-intersections)");
}

inline const char* to_string(Pipeline p) {
  switch (p) {
    case Pipeline::Chow: return "tds-chow";
    case Pipeline::Junta: return "tds-junta";
    case Pipeline::Intersections: return "tds-intersections";
  }
  return "?";
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base = {}) {
  if (!j.is_object()) throw ConfigError("experiment: config must be a JSON object");
  ExperimentConfig c;
  const std::string root = "experiment";
  auto str = [](const json& v) { return v.get<std::string>(); };
  auto count = [](const json& v) { return v.get<std::size_t>(); };
  if (j.contains("name")) c.name = detail::config_field<std::string>(j, root, "name", str);
  c.pipeline = detail::config_field<Pipeline>(j, root, "pipeline",
                                              [](const json& v) { return detail::pipeline_from_string(v.get<std::string>()); });
  auto path_of = [&](const json& v) {
    std::filesystem::path p = v.get<std::string>();
    if (p.is_relative() && !base.empty()) p = base / p;
    if (!std::filesystem::exists(p)) throw ConfigError("file not found: " + p.string());
    return p;
  };
  if (j.contains("train_data")) c.train_data = detail::config_field<std::filesystem::path>(j, root, "train_data", path_of);
  if (j.contains("test_data")) c.test_data = detail::config_field<std::filesystem::path>(j, root, "test_data", path_of);
  if (j.contains("train_distribution"))
    c.train_distribution = detail::config_field<DistributionSpec>(j, root, "train_distribution", spec_from_json);
  if (j.contains("test_distribution"))
    c.test_distribution = detail::config_field<DistributionSpec>(j, root, "test_distribution", spec_from_json);
  if (j.contains("concept")) c.truth = detail::config_field<Concept>(j, root, "concept", concept_from_json);
  c.trainer = detail::config_field<TrainerSpec>(j, root, "trainer", trainer_from_json);
  if (j.contains("tester")) c.tester = j.at("tester");
  if (j.contains("n_train")) c.n_train = detail::config_field<std::size_t>(j, root, "n_train", count);
  if (j.contains("n_test")) c.n_test = detail::config_field<std::size_t>(j, root, "n_test", count);
  if (j.contains("n_eval")) c.n_eval = detail::config_field<std::size_t>(j, root, "n_eval", count);
  if (j.contains("noise_rate")) c.noise_rate = detail::config_field<double>(j, root, "noise_rate", [](const json& v) { return v.get<double>(); });
  if (j.contains("trials")) c.trials = detail::config_field<std::size_t>(j, root, "trials", count);
  if (j.contains("seed")) c.seed = detail::config_field<std::uint64_t>(j, root, "seed", [](const json& v) { return v.get<std::uint64_t>(); });
  if (j.contains("output")) c.output = detail::config_field<std::filesystem::path>(j, root, "output", [&](const json& v) {
    std::filesystem::path p = v.get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  });
  if (j.contains("record_timing")) c.record_timing = j.at("record_timing").get<bool>();
  if (c.trials < 1) throw ConfigError("experiment.trials: must be at least 1");
  if (!c.train_data && !c.train_distribution)
    throw ConfigError("experiment.train_distribution: needed when train_data is absent");
  if (!c.train_data && !c.truth) throw ConfigError("experiment.concept: needed to label sampled training data");
  if (!c.test_data && !c.test_distribution)
    throw ConfigError("experiment.test_distribution: needed when test_data is absent");
  if (!(c.noise_rate >= 0.0 && c.noise_rate < 0.5)) throw ConfigError("experiment.noise_rate: must lie in [0, 0.5)");
  return c;
}

namespace detail {

inline double tester_number(const json& t, const char* key, double fallback) {
  if (!t.contains(key)) return fallback;
  try {
    return t.at(key).get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment.tester.") + key + ": " + e.what());
  }
}

inline ChowTesterConfig chow_config(const json& t, std::size_t d) {
  ChowTesterConfig cfg;
  cfg.epsilon = tester_number(t, "epsilon", 0.1);
  cfg.degree = static_cast<unsigned>(tester_number(t, "degree", 1));
  cfg.reference = chow_reference_from_string(t.value("reference", std::string("gaussian")));
  cfg.coeff_bound = t.contains("coeff_bound") && t.at("coeff_bound").is_number()
                        ? t.at("coeff_bound").get<double>()
                        : default_coeff_bound(d, cfg.degree);
  cfg.repetitions = static_cast<std::size_t>(tester_number(t, "repetitions", 1));
  cfg.m_conc = t.contains("m_conc") ? t.at("m_conc").get<std::size_t>()
                                    : compute_sample_budget_chow(d, cfg.degree, cfg.coeff_bound, cfg.epsilon,
                                                                 tester_number(t, "fail_prob", kDefaultChowFailProbability),
                                                                 cfg.reference);
  cfg.validate();
  return cfg;
}

inline GridTesterConfig grid_config(const json& t) {
  GridTesterConfig cfg;
  cfg.p = static_cast<unsigned>(tester_number(t, "p", 2));
  cfg.R = tester_number(t, "R", 3.0);
  cfg.epsilon = tester_number(t, "epsilon", 0.1);
  cfg.cell_cap = tester_number(t, "cell_cap", kDefaultCellCap);
  if (t.contains("profile")) cfg.profile = profile_from_json(t.at("profile"));
  return cfg;
}

inline IntersectionRunConfig intersection_config(const json& t) {
  IntersectionRunConfig cfg;
  cfg.epsilon = tester_number(t, "epsilon", 0.1);
  cfg.beta = tester_number(t, "beta", 0.2);
  cfg.k = static_cast<std::size_t>(tester_number(t, "k", 2));
  cfg.variant = boundary_variant_from_string(t.value("variant", std::string("spectral")));
  cfg.p = static_cast<unsigned>(tester_number(t, "p", 1));
  cfg.mu_c = tester_number(t, "mu_c", 2.0);
  cfg.density_bound = tester_number(t, "density_bound", kGaussianDensityBound);
  cfg.votes = static_cast<std::size_t>(tester_number(t, "votes", 5));
  return cfg;
}

inline json run_trial(const ExperimentConfig& c, std::size_t trial) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = c.seed + trial;
  const RngSpec rng{seed, 0};
  json rec{{"trial", trial}, {"seed", seed}};
  try {
    LabeledDataset train_data = [&] {
      if (c.train_data) return load_labeled_dataset(*c.train_data, csv_column_count(*c.train_data) - 1);
      const Dataset x = sample(*c.train_distribution, c.n_train, rng.child(1));
      return label_with(*c.truth, x, c.noise_rate, rng.child(2));
    }();
    const std::size_t d = train_data.dim();
    TDSOutcome out;
    auto test_of = [&](std::size_t minimum) {
      if (c.test_data) return load_dataset(*c.test_data, d);
      return sample(*c.test_distribution, std::max(c.n_test, minimum), rng.child(3));
    };
    switch (c.pipeline) {
      case Pipeline::Chow: {
        const ChowTesterConfig cfg = chow_config(c.tester, d);
        out = tds_chow_run(train_data, test_of(minimum_chow_test_size(cfg) * cfg.repetitions), c.trainer, cfg,
                           rng.child(4));
        break;
      }
      case Pipeline::Junta: {
        const NeighborhoodSpec nb{tester_number(c.tester, "slack_s", 0.1), tester_number(c.tester, "slack_e", 0.0),
                                  NeighborhoodKind::Subspace};
        std::optional<double> eta;
        if (c.tester.contains("eta") && c.tester.at("eta").is_number()) eta = c.tester.at("eta").get<double>();
        out = tds_subspace_junta_run(train_data, test_of(1), c.trainer, grid_config(c.tester), nb, rng.child(4), eta);
        break;
      }
      case Pipeline::Intersections:
        out = tds_intersections_run(train_data, test_of(1), c.trainer, intersection_config(c.tester), rng.child(4));
        break;
    }
    rec["accepted"] = out.verdict.accepted;
    rec["failed_check"] = out.verdict.failed_check ? json(*out.verdict.failed_check) : json(nullptr);
    rec["err_train"] = out.training_error;
    rec["certified_bound"] = out.verdict.accepted ? json(out.certified_error_bound) : json(nullptr);
    rec["err_test"] = nullptr;
    if (out.hypothesis && c.truth && c.test_distribution) {
      const Dataset x = sample(*c.test_distribution, c.n_eval, rng.child(5));
      rec["err_test"] = zero_one_error(*out.hypothesis, label_with(*c.truth, x, c.noise_rate, rng.child(6)));
    }
  } catch (const std::exception& e) {
    rec["error"] = e.what();
  }
  if (c.record_timing)
    rec["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace detail

struct ExperimentReport {
  std::vector<json> records;
  json aggregate;
  bool all_completed = true;

  std::string to_jsonl() const {
    std::string s;
    for (const auto& r : records) s += r.dump() + "\n";
    s += json{{"aggregate", aggregate}}.dump() + "\n";
    return s;
  }
};

inline json aggregate_records(const std::vector<json>& records, const std::string& name, Pipeline pipeline) {
  std::size_t accepted = 0, completed = 0;
  std::optional<double> max_excess;
  for (const auto& r : records) {
    if (r.contains("error")) continue;
    ++completed;
    if (!r.at("accepted").get<bool>()) continue;
    ++accepted;
    if (r.at("err_test").is_number()) {
      const double e = r.at("err_test").get<double>() - r.at("certified_bound").get<double>();
      max_excess = max_excess ? std::max(*max_excess, e) : e;
    }
  }
  return {{"schema", kReportSchema},
          {"name", name},
          {"pipeline", detail::to_string(pipeline)},
          {"trials", records.size()},
          {"completed", completed},
          {"accept_rate", completed ? static_cast<double>(accepted) / static_cast<double>(completed) : 0.0},
          {"max_excess", max_excess ? json(*max_excess) : json(nullptr)}};
}

// Runs trials with seeds seed + i; records stay in trial order whatever the job count.
inline ExperimentReport run_experiment(const ExperimentConfig& c) {
  if (c.trials < 1) throw ConfigError("experiment.trials: must be at least 1");
  ExperimentReport report;
  report.records.resize(c.trials);
  const std::size_t jobs = std::max<std::size_t>(1, c.jobs);
  for (std::size_t start = 0; start < c.trials; start += jobs) {
    std::vector<std::future<json>> running;
    for (std::size_t i = start; i < std::min(c.trials, start + jobs); ++i)
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async,
                                   [&c, i] { return detail::run_trial(c, i); }));
    for (std::size_t i = 0; i < running.size(); ++i) report.records[start + i] = running[i].get();
  }
  for (const auto& r : report.records) report.all_completed = report.all_completed && !r.contains("error");
  report.aggregate = aggregate_records(report.records, c.name, c.pipeline);
  if (c.output) detail::write_atomically(*c.output, report.to_jsonl());
  return report;
}

inline const std::vector<std::string>& table_columns() {
  static const std::vector<std::string> cols{"name", "pipeline", "trials", "completed", "accept_rate", "max_excess"};
  return cols;
}

// One CSV row per report, from its aggregate footer.
inline std::string emit_table(const std::vector<std::filesystem::path>& reports) {
  std::string out;
  for (std::size_t i = 0; i < table_columns().size(); ++i) out += (i ? "," : "") + table_columns()[i];
  out += '\n';
  std::optional<std::string> schema;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open report: " + path.string());
    std::string line, last;
    while (std::getline(in, line))
      if (!line.empty()) last = line;
    json footer;
    try {
      footer = json::parse(last).at("aggregate");
    } catch (const json::exception&) {
      throw InvalidInput("report has no aggregate footer: " + path.string());
    }
    const std::string s = footer.value("schema", std::string());
    if (schema && *schema != s) throw InvalidInput("report schemas differ: " + *schema + " vs " + s);
    schema = s;
    if (s != kReportSchema) throw InvalidInput("unsupported report schema '" + s + "' in " + path.string());
    for (std::size_t i = 0; i < table_columns().size(); ++i) {
      const json& v = footer.at(table_columns()[i]);
      if (i) out += ',';
      if (v.is_string()) out += v.get<std::string>();
      else if (v.is_null()) out += "";
      else if (v.is_number_float()) out += detail::format_double(v.get<double>());
      else out += v.dump();
    }
    out += '\n';
  }
  return out;
}

}  // namespace tds
