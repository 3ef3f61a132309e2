#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "tds/concepts.hpp"
#include "tds/distributions.hpp"

namespace tds {

// beta-hat = min(P[f = +1], P[f = -1]) over n fresh draws.
inline double estimate_balance(const Concept& c, const DistributionSpec& sampler, std::size_t n, RngSpec rng) {
  if (n == 0) throw InvalidInput("sample size must be at least 1");
  const std::size_t d = dim_of(sampler);
  detail::check_dim(c, d);
  std::size_t positive = 0;
  std::vector<int> labels(kSampleChunk);
  for_each_chunk(sampler, n, rng, [&](const double* pts, std::size_t count) {
    eval_many(c, pts, count, d, labels.data());
    for (std::size_t j = 0; j < count; ++j) positive += labels[j] > 0;
  });
  const double p = static_cast<double>(positive) / static_cast<double>(n);
  return std::min(p, 1.0 - p);
}

inline double estimate_disagreement(const Concept& f, const Concept& g, const DistributionSpec& sampler,
                                    std::size_t n, RngSpec rng) {
  if (n == 0) throw InvalidInput("sample size must be at least 1");
  const std::size_t d = dim_of(sampler);
  detail::check_dim(f, d);
  detail::check_dim(g, d);
  std::size_t differ = 0;
  std::vector<int> lf(kSampleChunk), lg(kSampleChunk);
  for_each_chunk(sampler, n, rng, [&](const double* pts, std::size_t count) {
    eval_many(f, pts, count, d, lf.data());
    eval_many(g, pts, count, d, lg.data());
    for (std::size_t j = 0; j < count; ++j) differ += lf[j] != lg[j];
  });
  return static_cast<double>(differ) / static_cast<double>(n);
}

// Fraction of points in the slab union of c: min_i |w_i.x - tau_i| <= varrho.
inline double boundary_fraction(const HalfspaceIntersection& c, const Dataset& ds, double varrho) {
  std::size_t inside = 0;
  for (std::size_t j = 0; j < ds.size(); ++j) inside += boundary_membership(c, ds.point(j), varrho);
  return static_cast<double>(inside) / static_cast<double>(ds.size());
}

inline double estimate_boundary_mass(const HalfspaceIntersection& c, double varrho, const DistributionSpec& sampler,
                                     std::size_t n, RngSpec rng) {
  if (!(varrho > 0.0)) throw InvalidInput("boundary width must be positive");
  if (n == 0) throw InvalidInput("sample size must be at least 1");
  const std::size_t d = dim_of(sampler);
  std::size_t inside = 0;
  for_each_chunk(sampler, n, rng, [&](const double* pts, std::size_t count) {
    for (std::size_t j = 0; j < count; ++j) inside += boundary_membership(c, {pts + j * d, d}, varrho);
  });
  return static_cast<double>(inside) / static_cast<double>(n);
}

}  // namespace tds
