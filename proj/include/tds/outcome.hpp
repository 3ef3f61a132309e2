#pragma once

#include <optional>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"

namespace tds {

// Result of a full TDS run: either a rejection, or an accepted hypothesis with an
// error bound that holds on the test distribution.
struct TDSOutcome {
  Verdict verdict;
  std::optional<Concept> hypothesis;  // present iff accepted
  double training_error = 0.0;
  double certified_error_bound = 0.0;
  json details = json::object();
};

inline json outcome_to_json(const TDSOutcome& o) {
  json j{{"verdict", o.verdict},
         {"training_error", o.training_error},
         {"certified_error_bound", o.verdict.accepted ? json(o.certified_error_bound) : json(nullptr)},
         {"hypothesis", o.hypothesis ? concept_to_json(*o.hypothesis) : json(nullptr)}};
  if (!o.details.empty()) j["details"] = o.details;
  return j;
}

}  // namespace tds
