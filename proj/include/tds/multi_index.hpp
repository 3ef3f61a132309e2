#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "tds/errors.hpp"

namespace tds {

using MultiIndex = std::vector<unsigned>;

inline unsigned total_degree(const MultiIndex& a) {
  return std::accumulate(a.begin(), a.end(), 0u);
}

// "a1,a2,...,ad"
inline std::string index_key(const MultiIndex& a) {
  std::string s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(a[i]);
  }
  return s;
}

inline MultiIndex parse_index_key(std::string_view key) {
  MultiIndex a;
  std::size_t pos = 0;
  while (pos <= key.size()) {
    const auto comma = key.find(',', pos);
    const auto field = key.substr(pos, comma == std::string_view::npos ? key.size() - pos : comma - pos);
    if (field.empty()) throw InvalidInput("malformed multi-index key '" + std::string(key) + "'");
    unsigned v = 0;
    for (char c : field) {
      if (c < '0' || c > '9') throw InvalidInput("malformed multi-index key '" + std::string(key) + "'");
      v = v * 10 + static_cast<unsigned>(c - '0');
    }
    a.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return a;
}

inline double count_multi_indices(std::size_t d, unsigned degree) {
  // C(d + l, l) in floating point so that huge values are reportable.
  double c = 1.0;
  for (unsigned i = 1; i <= degree; ++i) c = c * static_cast<double>(d + i) / static_cast<double>(i);
  return c;
}

inline constexpr double kDefaultIndexCap = 1e6;

// All alpha in N^d with |alpha|_1 <= degree, in lexicographic order.
inline std::vector<MultiIndex> enumerate_multi_indices(std::size_t d, unsigned degree,
                                                       double cap = kDefaultIndexCap) {
  if (d == 0) throw InvalidInput("multi-index dimension must be positive");
  const double count = count_multi_indices(d, degree);
  if (count > cap) throw BudgetRefused("multi-index count C(d+l,l)", count, cap);
  std::vector<MultiIndex> out;
  out.reserve(static_cast<std::size_t>(count + 0.5));
  MultiIndex a(d, 0);
  // Odometer over coordinates, last coordinate fastest, pruning by remaining degree.
  auto rec = [&](auto&& self, std::size_t i, unsigned left) -> void {
    if (i == d) {
      out.push_back(a);
      return;
    }
    for (unsigned v = 0; v <= left; ++v) {
      a[i] = v;
      self(self, i + 1, left - v);
    }
    a[i] = 0;
  };
  rec(rec, 0, degree);
  return out;
}

// Multilinear indices (alpha in {0,1}^d) with |alpha|_1 <= degree, lexicographic.
inline std::vector<MultiIndex> enumerate_multilinear_indices(std::size_t d, unsigned degree,
                                                             double cap = kDefaultIndexCap) {
  if (d == 0) throw InvalidInput("multi-index dimension must be positive");
  double count = 0.0, term = 1.0;
  for (unsigned j = 0; j <= std::min<std::size_t>(degree, d); ++j) {
    count += term;
    term = term * static_cast<double>(d - j) / static_cast<double>(j + 1);
  }
  if (count > cap) throw BudgetRefused("multilinear index count", count, cap);
  std::vector<MultiIndex> out;
  MultiIndex a(d, 0);
  auto rec = [&](auto&& self, std::size_t i, unsigned left) -> void {
    if (i == d) {
      out.push_back(a);
      return;
    }
    a[i] = 0;
    self(self, i + 1, left);
    if (left > 0) {
      a[i] = 1;
      self(self, i + 1, left - 1);
      a[i] = 0;
    }
  };
  rec(rec, 0, degree);
  return out;
}

namespace detail {

// For each index (in enumeration order) its parent alpha - e_j and the coordinate j,
// so x^alpha = x^parent * x_j. The zero index has parent npos.
struct MonomialPlan {
  std::size_t dim = 0;
  std::vector<std::size_t> parent;
  std::vector<std::size_t> coord;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit MonomialPlan(const std::vector<MultiIndex>& indices) {
    if (indices.empty()) return;
    dim = indices.front().size();
    std::vector<std::pair<MultiIndex, std::size_t>> sorted;
    sorted.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) sorted.emplace_back(indices[i], i);
    std::sort(sorted.begin(), sorted.end());
    auto find = [&](const MultiIndex& a) {
      auto it = std::lower_bound(sorted.begin(), sorted.end(), std::make_pair(a, std::size_t{0}));
      if (it == sorted.end() || it->first != a) throw InvalidInput("monomial set is not downward closed");
      return it->second;
    };
    parent.resize(indices.size(), npos);
    coord.resize(indices.size(), 0);
    // Parents must be evaluated first; process by total degree.
    order.resize(indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return total_degree(indices[x]) < total_degree(indices[y]);
    });
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const auto& a = indices[i];
      std::size_t j = a.size();
      while (j > 0 && a[j - 1] == 0) --j;
      if (j == 0) continue;
      MultiIndex p = a;
      --p[j - 1];
      parent[i] = find(p);
      coord[i] = j - 1;
    }
  }

  // out[i] = x^{indices[i]}
  void evaluate(const double* x, double* out) const {
    for (std::size_t i : order) out[i] = parent[i] == npos ? 1.0 : out[parent[i]] * x[coord[i]];
  }

  std::vector<std::size_t> order;
};

}  // namespace detail

}  // namespace tds
