#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/errors.hpp"
#include "tds/multi_index.hpp"

namespace tds {

using json = nlohmann::json;

struct Halfspace {
  std::vector<double> w;
  double tau = 0.0;

  double margin(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s - tau;
  }
};

// Rescales (w, tau) by 1/|w| so the described halfspace is unchanged.
inline Halfspace make_halfspace(std::vector<double> w, double tau) {
  double n2 = 0.0;
  for (double v : w) n2 += v * v;
  const double n = std::sqrt(n2);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidInput("halfspace normal must be nonzero and finite");
  for (double& v : w) v /= n;
  return {std::move(w), tau / n};
}

struct HalfspaceIntersection {
  std::vector<Halfspace> halfspaces;
};

struct PolynomialThreshold {
  std::size_t dim = 0;
  unsigned degree = 0;
  std::map<MultiIndex, double> coeffs;
  double shift = 0.0;

  double value(std::span<const double> x) const {
    double p = 0.0;
    for (const auto& [a, c] : coeffs) {
      double m = c;
      for (std::size_t i = 0; i < a.size(); ++i)
        for (unsigned e = 0; e < a[i]; ++e) m *= x[i];
      p += m;
    }
    return p;
  }
};

struct ConstantLabel {
  int label = 1;
  std::size_t dim = 0;  // 0: any dimension
};

struct Concept;

struct SubspaceJunta {
  std::vector<std::vector<double>> basis;  // k rows of length d
  std::shared_ptr<const Concept> inner;

  std::size_t k() const { return basis.size(); }
  std::size_t ambient_dim() const { return basis.empty() ? 0 : basis.front().size(); }
};

struct Concept : std::variant<Halfspace, HalfspaceIntersection, PolynomialThreshold, SubspaceJunta,
                              ConstantLabel> {
  using variant::variant;
};

inline std::size_t concept_dim(const Concept& c) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Halfspace>) return v.w.size();
        else if constexpr (std::is_same_v<T, HalfspaceIntersection>)
          return v.halfspaces.empty() ? 0 : v.halfspaces.front().w.size();
        else if constexpr (std::is_same_v<T, PolynomialThreshold>) return v.dim;
        else if constexpr (std::is_same_v<T, SubspaceJunta>) return v.ambient_dim();
        else return v.dim;
      },
      static_cast<const Concept::variant&>(c));
}

inline std::string concept_type(const Concept& c) {
  static const char* names[] = {"halfspace", "intersection", "ptf", "junta", "constant"};
  return names[c.index()];
}

namespace detail {

inline constexpr double kUnitTolerance = 1e-9;

inline void check_dim(const Concept& c, std::size_t d) {
  const std::size_t cd = concept_dim(c);
  if (cd != 0 && cd != d) throw DimensionMismatch(cd, d);
}

inline int sign_of(double v) { return v >= 0.0 ? 1 : -1; }

inline bool intersection_contains(const HalfspaceIntersection& f, std::span<const double> x) {
  for (const auto& h : f.halfspaces)
    if (h.margin(x) < 0.0) return false;
  return true;
}

int eval_unchecked(const Concept& c, std::span<const double> x);

inline int eval_junta(const SubspaceJunta& j, std::span<const double> x) {
  std::vector<double> z(j.k());
  for (std::size_t r = 0; r < j.k(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += j.basis[r][i] * x[i];
    z[r] = s;
  }
  return eval_unchecked(*j.inner, z);
}

inline int eval_unchecked(const Concept& c, std::span<const double> x) {
  return std::visit(
      [&](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Halfspace>) return sign_of(v.margin(x));
        else if constexpr (std::is_same_v<T, HalfspaceIntersection>)
          return intersection_contains(v, x) ? 1 : -1;
        else if constexpr (std::is_same_v<T, PolynomialThreshold>) return sign_of(v.value(x) - v.shift);
        else if constexpr (std::is_same_v<T, SubspaceJunta>) return eval_junta(v, x);
        else return v.label;
      },
      static_cast<const Concept::variant&>(c));
}

}  // namespace detail

// Label in {-1,+1}; sign(0) = +1.
inline int eval(const Concept& c, std::span<const double> x) {
  detail::check_dim(c, x.size());
  return detail::eval_unchecked(c, x);
}

inline int eval(const Concept& c, const std::vector<double>& x) { return eval(c, std::span<const double>(x)); }

// Labels for `count` row-major points of dimension d.
inline void eval_many(const Concept& c, const double* points, std::size_t count, std::size_t d, int* out) {
  detail::check_dim(c, d);
  if (const auto* h = std::get_if<Halfspace>(&c)) {
    for (std::size_t j = 0; j < count; ++j) out[j] = detail::sign_of(h->margin({points + j * d, d}));
    return;
  }
  for (std::size_t j = 0; j < count; ++j) out[j] = detail::eval_unchecked(c, {points + j * d, d});
}

inline bool boundary_membership(const HalfspaceIntersection& c, std::span<const double> x, double varrho) {
  if (!(varrho > 0.0)) throw InvalidInput("boundary width must be positive");
  if (c.halfspaces.empty()) return false;
  if (c.halfspaces.front().w.size() != x.size()) throw DimensionMismatch(c.halfspaces.front().w.size(), x.size());
  for (const auto& h : c.halfspaces)
    if (std::abs(h.margin(x)) <= varrho) return true;
  return false;
}

inline bool boundary_membership(const Halfspace& h, std::span<const double> x, double varrho) {
  return boundary_membership(HalfspaceIntersection{{h}}, x, varrho);
}

// Gram-Schmidt on the rows; rejects rank deficiency and inputs that move by more
// than `tolerance` under re-orthonormalization.
inline void check_orthonormal_rows(const std::vector<std::vector<double>>& rows, double tolerance) {
  if (rows.empty()) throw InvalidInput("basis must have at least one row");
  const std::size_t d = rows.front().size();
  if (rows.size() > d) throw InvalidInput("basis has more rows than columns");
  std::vector<std::vector<double>> q;
  for (const auto& r : rows) {
    if (r.size() != d) throw DimensionMismatch(d, r.size());
    std::vector<double> v = r;
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (!(n > tolerance)) throw InvalidInput("basis rows are linearly dependent");
    for (std::size_t i = 0; i < d; ++i) {
      v[i] /= n;
      if (std::abs(v[i] - r[i]) > tolerance)
        throw InvalidInput("basis is not orthonormal (Gram-Schmidt moved an entry by " +
                           std::to_string(std::abs(v[i] - r[i])) + ")");
    }
    q.push_back(std::move(v));
  }
}

inline void validate(const Concept& c) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        auto check_halfspace = [](const Halfspace& h) {
          double n2 = 0.0;
          for (double x : h.w) n2 += x * x;
          if (h.w.empty()) throw InvalidInput("halfspace normal is empty");
          if (std::abs(std::sqrt(n2) - 1.0) > detail::kUnitTolerance)
            throw InvalidInput("halfspace normal is not a unit vector");
          if (!std::isfinite(h.tau)) throw InvalidInput("halfspace threshold must be finite");
        };
        if constexpr (std::is_same_v<T, Halfspace>) {
          check_halfspace(v);
        } else if constexpr (std::is_same_v<T, HalfspaceIntersection>) {
          if (v.halfspaces.empty()) throw InvalidInput("intersection needs at least one halfspace");
          for (const auto& h : v.halfspaces) {
            check_halfspace(h);
            if (h.w.size() != v.halfspaces.front().w.size())
              throw DimensionMismatch(v.halfspaces.front().w.size(), h.w.size());
          }
        } else if constexpr (std::is_same_v<T, PolynomialThreshold>) {
          if (v.dim == 0) throw InvalidInput("polynomial threshold dimension must be positive");
          for (const auto& [a, coef] : v.coeffs) {
            if (a.size() != v.dim) throw DimensionMismatch(v.dim, a.size());
            if (total_degree(a) > v.degree)
              throw InvalidInput("monomial " + index_key(a) + " exceeds the declared degree");
            if (!std::isfinite(coef)) throw InvalidInput("non-finite coefficient");
          }
        } else if constexpr (std::is_same_v<T, SubspaceJunta>) {
          if (!v.inner) throw InvalidInput("junta has no inner concept");
          check_orthonormal_rows(v.basis, detail::kUnitTolerance);
          const std::size_t inner_dim = concept_dim(*v.inner);
          if (inner_dim != 0 && inner_dim != v.k()) throw DimensionMismatch(v.k(), inner_dim);
          validate(*v.inner);
        } else {
          if (v.label != 1 && v.label != -1) throw InvalidInput("constant label must be -1 or +1");
        }
      },
      static_cast<const Concept::variant&>(c));
}

inline SubspaceJunta make_subspace_junta(std::vector<std::vector<double>> basis, Concept inner) {
  SubspaceJunta j{std::move(basis), std::make_shared<const Concept>(std::move(inner))};
  validate(Concept(j));
  return j;
}

// ---- JSON ----

inline json halfspace_to_json(const Halfspace& h) { return json{{"w", h.w}, {"tau", h.tau}}; }

inline Halfspace halfspace_from_json(const json& j) {
  return Halfspace{j.at("w").get<std::vector<double>>(), j.at("tau").get<double>()};
}

inline json concept_to_json(const Concept& c) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Halfspace>) {
          json j = halfspace_to_json(v);
          j["type"] = "halfspace";
          return j;
        } else if constexpr (std::is_same_v<T, HalfspaceIntersection>) {
          json hs = json::array();
          for (const auto& h : v.halfspaces) hs.push_back(halfspace_to_json(h));
          return json{{"type", "intersection"}, {"halfspaces", hs}};
        } else if constexpr (std::is_same_v<T, PolynomialThreshold>) {
          json coeffs = json::object();
          for (const auto& [a, coef] : v.coeffs) coeffs[index_key(a)] = coef;
          return json{{"type", "ptf"}, {"dim", v.dim}, {"degree", v.degree}, {"coeffs", coeffs}, {"shift", v.shift}};
        } else if constexpr (std::is_same_v<T, SubspaceJunta>) {
          return json{{"type", "junta"}, {"basis", v.basis}, {"inner", concept_to_json(*v.inner)}};
        } else {
          return json{{"type", "constant"}, {"label", v.label}, {"dim", v.dim}};
        }
      },
      static_cast<const Concept::variant&>(c));
}

inline Concept concept_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    Concept c = ConstantLabel{};
    if (type == "halfspace") {
      c = halfspace_from_json(j);
    } else if (type == "intersection") {
      HalfspaceIntersection f;
      for (const auto& h : j.at("halfspaces")) f.halfspaces.push_back(halfspace_from_json(h));
      c = std::move(f);
    } else if (type == "ptf") {
      PolynomialThreshold p;
      p.dim = j.at("dim").get<std::size_t>();
      p.degree = j.at("degree").get<unsigned>();
      p.shift = j.at("shift").get<double>();
      for (const auto& [key, coef] : j.at("coeffs").items()) p.coeffs[parse_index_key(key)] = coef.get<double>();
      c = std::move(p);
    } else if (type == "junta") {
      c = SubspaceJunta{j.at("basis").get<std::vector<std::vector<double>>>(),
                        std::make_shared<const Concept>(concept_from_json(j.at("inner")))};
    } else if (type == "constant") {
      c = ConstantLabel{j.at("label").get<int>(), j.value("dim", std::size_t{0})};
    } else {
      throw InvalidInput("unknown concept type '" + type + "'");
    }
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed concept JSON: ") + e.what());
  }
}

}  // namespace tds
