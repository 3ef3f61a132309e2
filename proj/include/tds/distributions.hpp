#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/concepts.hpp"
#include "tds/data.hpp"
#include "tds/errors.hpp"
#include "tds/rng.hpp"

namespace tds {

struct DistributionSpec;
using SpecPtr = std::shared_ptr<const DistributionSpec>;

struct StandardGaussian { std::size_t d = 1; };
struct UniformCube { std::size_t d = 1; };
// Coordinates i.i.d. Laplace with scale 1/sqrt(2), so each has unit variance.
struct ProductLaplace { std::size_t d = 1; };
// Uniform on the ball of radius sqrt(d+2), which has identity covariance.
struct UniformBall { std::size_t d = 1; };
struct MeanShift { SpecPtr base; std::vector<double> shift; };
struct Scale { SpecPtr base; double factor = 1.0; };
struct MixtureComponent { double weight = 0.0; SpecPtr spec; };
struct Mixture { std::vector<MixtureComponent> components; };
// With probability `mass`, a base draw conditioned on |w.x - tau| <= width.
struct BoundarySpike { SpecPtr base; Halfspace plane; double width = 0.0; double mass = 0.0; };

struct DistributionSpec : std::variant<StandardGaussian, UniformCube, ProductLaplace, UniformBall, MeanShift,
                                       Scale, Mixture, BoundarySpike> {
  using variant::variant;
};

template <class T>
SpecPtr share(T spec) {
  return std::make_shared<const DistributionSpec>(std::move(spec));
}

inline constexpr std::size_t kSampleChunk = 4096;
inline constexpr std::size_t kMaxRejectionAttempts = 1000000;
inline const double kLaplaceScale = 1.0 / std::sqrt(2.0);

inline std::size_t dim_of(const DistributionSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MeanShift> || std::is_same_v<T, Scale> || std::is_same_v<T, BoundarySpike>)
          return dim_of(*s.base);
        else if constexpr (std::is_same_v<T, Mixture>)
          return s.components.empty() ? 0 : dim_of(*s.components.front().spec);
        else
          return s.d;
      },
      static_cast<const DistributionSpec::variant&>(spec));
}

inline void validate(const DistributionSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MeanShift>) {
          if (!s.base) throw ConfigError("mean shift has no base distribution");
          validate(*s.base);
          if (s.shift.size() != dim_of(*s.base)) throw DimensionMismatch(dim_of(*s.base), s.shift.size());
        } else if constexpr (std::is_same_v<T, Scale>) {
          if (!s.base) throw ConfigError("scale has no base distribution");
          validate(*s.base);
          if (!std::isfinite(s.factor)) throw ConfigError("scale factor must be finite");
        } else if constexpr (std::is_same_v<T, Mixture>) {
          if (s.components.empty()) throw ConfigError("mixture needs at least one component");
          double total = 0.0;
          for (const auto& c : s.components) {
            if (!c.spec) throw ConfigError("mixture component has no distribution");
            if (!(c.weight >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
            validate(*c.spec);
            if (dim_of(*c.spec) != dim_of(*s.components.front().spec))
              throw DimensionMismatch(dim_of(*s.components.front().spec), dim_of(*c.spec));
            total += c.weight;
          }
          if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
        } else if constexpr (std::is_same_v<T, BoundarySpike>) {
          if (!s.base) throw ConfigError("boundary spike has no base distribution");
          validate(*s.base);
          validate(Concept(s.plane));
          if (s.plane.w.size() != dim_of(*s.base)) throw DimensionMismatch(dim_of(*s.base), s.plane.w.size());
          if (!(s.width > 0.0)) throw ConfigError("spike width must be positive");
          if (!(s.mass >= 0.0 && s.mass <= 1.0)) throw ConfigError("spike mass must lie in [0,1]");
        } else {
          if (s.d == 0) throw ConfigError("distribution dimension must be positive");
        }
      },
      static_cast<const DistributionSpec::variant&>(spec));
}

namespace detail {

inline void draw(const DistributionSpec& spec, CounterEngine& eng, std::size_t count, double* out);

inline void draw_ball(std::size_t d, CounterEngine& eng, double* x) {
  double n2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    x[i] = eng.normal();
    n2 += x[i] * x[i];
  }
  const double r = std::pow(eng.uniform_open(), 1.0 / static_cast<double>(d)) *
                   std::sqrt(static_cast<double>(d) + 2.0);
  const double scale = r / std::sqrt(n2);
  for (std::size_t i = 0; i < d; ++i) x[i] *= scale;
}

// Points are drawn one after another, so drawing a block of `count` consumes the
// engine exactly as `count` single draws would.
inline void draw(const DistributionSpec& spec, CounterEngine& eng, std::size_t count, double* out) {
  const std::size_t d = dim_of(spec);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StandardGaussian>) {
          for (std::size_t i = 0; i < count * d; ++i) out[i] = eng.normal();
        } else if constexpr (std::is_same_v<T, UniformCube>) {
          for (std::size_t j = 0; j < count; ++j) {
            std::uint64_t bits = 0;
            for (std::size_t i = 0; i < d; ++i) {
              if (i % 64 == 0) bits = eng();
              out[j * d + i] = (bits & 1u) ? 1.0 : -1.0;
              bits >>= 1;
            }
          }
        } else if constexpr (std::is_same_v<T, ProductLaplace>) {
          for (std::size_t i = 0; i < count * d; ++i) {
            const double u = eng.uniform_open() - 0.5;
            out[i] = (u < 0 ? kLaplaceScale : -kLaplaceScale) * std::log(1.0 - 2.0 * std::abs(u));
          }
        } else if constexpr (std::is_same_v<T, UniformBall>) {
          for (std::size_t j = 0; j < count; ++j) draw_ball(d, eng, out + j * d);
        } else if constexpr (std::is_same_v<T, MeanShift>) {
          draw(*s.base, eng, count, out);
          for (std::size_t j = 0; j < count; ++j)
            for (std::size_t i = 0; i < d; ++i) out[j * d + i] += s.shift[i];
        } else if constexpr (std::is_same_v<T, Scale>) {
          draw(*s.base, eng, count, out);
          for (std::size_t i = 0; i < count * d; ++i) out[i] *= s.factor;
        } else if constexpr (std::is_same_v<T, Mixture>) {
          for (std::size_t j = 0; j < count; ++j) {
            const double u = eng.uniform();
            double acc = 0.0;
            std::size_t pick = s.components.size() - 1;
            for (std::size_t c = 0; c < s.components.size(); ++c) {
              acc += s.components[c].weight;
              if (u < acc) {
                pick = c;
                break;
              }
            }
            draw(*s.components[pick].spec, eng, 1, out + j * d);
          }
        } else if constexpr (std::is_same_v<T, BoundarySpike>) {
          for (std::size_t j = 0; j < count; ++j) {
            double* x = out + j * d;
            if (eng.uniform() >= s.mass) {
              draw(*s.base, eng, 1, x);
              continue;
            }
            std::size_t attempts = 0;
            for (;;) {
              draw(*s.base, eng, 1, x);
              if (std::abs(s.plane.margin({x, d})) <= s.width) break;
              if (++attempts >= kMaxRejectionAttempts)
                throw SamplingError("boundary spike: no point landed in the slab after " +
                                    std::to_string(kMaxRejectionAttempts) + " attempts");
            }
          }
        }
      },
      static_cast<const DistributionSpec::variant&>(spec));
}

}  // namespace detail

// Streams n draws in fixed chunks; chunk c uses stream rng.child(c). The callback
// sees (points, count) with points row-major. sample() is built on this, so any
// consumer of the stream sees exactly the points sample() would return.
inline void for_each_chunk(const DistributionSpec& spec, std::size_t n, RngSpec rng,
                           const std::function<void(const double*, std::size_t)>& fn) {
  validate(spec);
  const std::size_t d = dim_of(spec);
  std::vector<double> buf(kSampleChunk * d);
  for (std::size_t start = 0, c = 0; start < n; start += kSampleChunk, ++c) {
    const std::size_t count = std::min(kSampleChunk, n - start);
    CounterEngine eng(rng.child(c));
    detail::draw(spec, eng, count, buf.data());
    fn(buf.data(), count);
  }
}

inline Dataset sample(const DistributionSpec& spec, std::size_t n, RngSpec rng) {
  if (n == 0) throw InvalidInput("sample size must be at least 1");
  validate(spec);
  const std::size_t d = dim_of(spec);
  std::vector<double> values(n * d);
  for (std::size_t start = 0, c = 0; start < n; start += kSampleChunk, ++c) {
    const std::size_t count = std::min(kSampleChunk, n - start);
    CounterEngine eng(rng.child(c));
    detail::draw(spec, eng, count, values.data() + start * d);
  }
  return Dataset(d, std::move(values));
}

inline LabeledDataset label_with(const Concept& c, const Dataset& ds, double noise_rate, RngSpec rng) {
  if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw InvalidInput("noise rate must lie in [0, 0.5)");
  std::vector<int> labels(ds.size());
  eval_many(c, ds.data(), ds.size(), ds.dim(), labels.data());
  if (noise_rate > 0.0) {
    CounterEngine eng(rng);
    for (auto& y : labels)
      if (eng.uniform() < noise_rate) y = -y;
  }
  return LabeledDataset(ds, std::move(labels));
}

// ---- structured profiles ----

enum class ProfileFamily { Gaussian, LogConcave, Cube, Custom };

// Concentration mu_c(p) >= sup_v E[(v.x)^{2p}] and anticoncentration mu_ac(R), the
// density ratio against N_k on k-dimensional marginals inside radius R.
struct StructuredProfile {
  ProfileFamily family = ProfileFamily::Gaussian;
  std::size_t k = 1;
  double C = 2.0;
  std::vector<double> custom_mu_c;  // custom_mu_c[p-1] = mu_c(p)
  double custom_mu_ac = 1.0;

  double mu_c(unsigned p) const {
    if (p == 0) return 1.0;
    switch (family) {
      case ProfileFamily::Gaussian:
      case ProfileFamily::Cube: {
        double v = 1.0;
        for (unsigned i = 1; i <= 2 * p - 1; i += 2) v *= i;
        return v;
      }
      case ProfileFamily::LogConcave:
        return std::pow(C * p, 2.0 * p);
      case ProfileFamily::Custom:
        if (p > custom_mu_c.size()) throw ConfigError("custom profile has no mu_c(" + std::to_string(p) + ")");
        return custom_mu_c[p - 1];
    }
    return 1.0;
  }

  double mu_ac(double R) const {
    switch (family) {
      case ProfileFamily::Gaussian:
        return 1.0;
      case ProfileFamily::LogConcave:
        return std::pow(C * static_cast<double>(k), static_cast<double>(k)) * std::exp(R * R / 2.0);
      case ProfileFamily::Cube:
        return std::numeric_limits<double>::infinity();  // discrete: no density
      case ProfileFamily::Custom:
        return custom_mu_ac;
    }
    return 1.0;
  }
};

inline StructuredProfile gaussian_profile(std::size_t k = 1) { return {ProfileFamily::Gaussian, k, 2.0, {}, 1.0}; }

inline StructuredProfile log_concave_profile(std::size_t k = 1, double C = 2.0) {
  return {ProfileFamily::LogConcave, k, C, {}, 1.0};
}

inline StructuredProfile profile_of(const DistributionSpec& spec, std::size_t k = 1, double C = 2.0) {
  if (k == 0) throw ConfigError("profile dimension k must be positive");
  return std::visit(
      [&](const auto& s) -> StructuredProfile {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StandardGaussian>) return gaussian_profile(k);
        else if constexpr (std::is_same_v<T, ProductLaplace> || std::is_same_v<T, UniformBall>)
          return log_concave_profile(k, C);
        else if constexpr (std::is_same_v<T, UniformCube>) return StructuredProfile{ProfileFamily::Cube, k, C, {}, 1.0};
        else throw ConfigError("no certified profile for this distribution");
      },
      static_cast<const DistributionSpec::variant&>(spec));
}

inline json profile_to_json(const StructuredProfile& p) {
  static const char* names[] = {"gaussian", "log_concave", "cube", "custom"};
  json j{{"family", names[static_cast<int>(p.family)]}, {"k", p.k}, {"C", p.C}};
  if (p.family == ProfileFamily::Custom) {
    j["mu_c"] = p.custom_mu_c;
    j["mu_ac"] = p.custom_mu_ac;
  }
  return j;
}

inline StructuredProfile profile_from_json(const json& j) {
  StructuredProfile p;
  const auto fam = j.at("family").get<std::string>();
  p.k = j.value("k", std::size_t{1});
  p.C = j.value("C", 2.0);
  if (fam == "gaussian") p.family = ProfileFamily::Gaussian;
  else if (fam == "log_concave" || fam == "laplace") p.family = ProfileFamily::LogConcave;
  else if (fam == "cube") p.family = ProfileFamily::Cube;
  else if (fam == "custom") {
    p.family = ProfileFamily::Custom;
    p.custom_mu_c = j.at("mu_c").get<std::vector<double>>();
    p.custom_mu_ac = j.at("mu_ac").get<double>();
    for (double v : p.custom_mu_c)
      if (!(v >= 1.0)) throw ConfigError("custom mu_c values must be at least 1");
    if (!(p.custom_mu_ac >= 1.0)) throw ConfigError("custom mu_ac must be at least 1");
  } else {
    throw ConfigError("unknown profile family '" + fam + "'");
  }
  return p;
}

// ---- JSON ----

inline json spec_to_json(const DistributionSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StandardGaussian>) return {{"type", "gaussian"}, {"d", s.d}};
        else if constexpr (std::is_same_v<T, UniformCube>) return {{"type", "cube"}, {"d", s.d}};
        else if constexpr (std::is_same_v<T, ProductLaplace>) return {{"type", "laplace"}, {"d", s.d}};
        else if constexpr (std::is_same_v<T, UniformBall>) return {{"type", "ball"}, {"d", s.d}};
        else if constexpr (std::is_same_v<T, MeanShift>)
          return {{"type", "mean_shift"}, {"base", spec_to_json(*s.base)}, {"shift", s.shift}};
        else if constexpr (std::is_same_v<T, Scale>)
          return {{"type", "scale"}, {"base", spec_to_json(*s.base)}, {"factor", s.factor}};
        else if constexpr (std::is_same_v<T, Mixture>) {
          json comps = json::array();
          for (const auto& c : s.components) comps.push_back({{"weight", c.weight}, {"spec", spec_to_json(*c.spec)}});
          return {{"type", "mixture"}, {"components", comps}};
        } else {
          return {{"type", "boundary_spike"},
                  {"base", spec_to_json(*s.base)},
                  {"halfspace", halfspace_to_json(s.plane)},
                  {"width", s.width},
                  {"mass", s.mass}};
        }
      },
      static_cast<const DistributionSpec::variant&>(spec));
}

inline DistributionSpec spec_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    DistributionSpec s = StandardGaussian{};
    if (type == "gaussian") s = StandardGaussian{j.at("d").get<std::size_t>()};
    else if (type == "cube") s = UniformCube{j.at("d").get<std::size_t>()};
    else if (type == "laplace") s = ProductLaplace{j.at("d").get<std::size_t>()};
    else if (type == "ball") s = UniformBall{j.at("d").get<std::size_t>()};
    else if (type == "mean_shift")
      s = MeanShift{share(spec_from_json(j.at("base"))), j.at("shift").get<std::vector<double>>()};
    else if (type == "scale") s = Scale{share(spec_from_json(j.at("base"))), j.at("factor").get<double>()};
    else if (type == "mixture") {
      Mixture m;
      for (const auto& c : j.at("components"))
        m.components.push_back({c.at("weight").get<double>(), share(spec_from_json(c.at("spec")))});
      s = std::move(m);
    } else if (type == "boundary_spike")
      s = BoundarySpike{share(spec_from_json(j.at("base"))), halfspace_from_json(j.at("halfspace")),
                        j.at("width").get<double>(), j.at("mass").get<double>()};
    else
      throw ConfigError("unknown distribution type '" + type + "'");
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed distribution JSON: ") + e.what());
  }
}

}  // namespace tds
