#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tds/errors.hpp"
#include "tds/rng.hpp"

namespace tds {

using json = nlohmann::json;

// n points in R^d, stored row-major. Immutable once built.
class Dataset {
 public:
  Dataset(std::size_t dim, std::vector<double> values) : dim_(dim), values_(std::move(values)) {
    if (dim_ == 0) throw InvalidInput("dataset dimension must be positive");
    if (values_.size() % dim_ != 0)
      throw InvalidInput("dataset storage is not a whole number of points");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw InvalidInput("non-finite coordinate at point " + std::to_string(i / dim_) +
                           ", column " + std::to_string(i % dim_ + 1));
  }

  static Dataset from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw InvalidInput("empty dataset");
    const std::size_t d = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * d);
    for (const auto& r : rows) {
      if (r.size() != d) throw DimensionMismatch(d, r.size());
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return Dataset(d, std::move(flat));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return values_.size() / dim_; }
  bool empty() const { return values_.empty(); }
  std::span<const double> point(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<double>& values() const { return values_; }
  const double* data() const { return values_.data(); }

 private:
  std::size_t dim_;
  std::vector<double> values_;
};

class LabeledDataset {
 public:
  LabeledDataset(Dataset data, std::vector<int> labels)
      : data_(std::move(data)), labels_(std::move(labels)) {
    if (labels_.size() != data_.size())
      throw InvalidInput("label count " + std::to_string(labels_.size()) +
                         " does not match point count " + std::to_string(data_.size()));
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] != 1 && labels_[i] != -1)
        throw InvalidInput("label at row " + std::to_string(i + 1) + " is not -1 or +1");
  }

  const Dataset& data() const { return data_; }
  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return data_.dim(); }

 private:
  Dataset data_;
  std::vector<int> labels_;
};

namespace detail {

inline std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path,
                                                      std::size_t expected_columns) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open data file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::size_t col = 0;
    std::string_view rest(line);
    for (;;) {
      ++col;
      const auto comma = rest.find(',');
      std::string_view field = rest.substr(0, comma);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty() ||
          !std::isfinite(v))
        throw ParseError("parse error at row " + std::to_string(row) + ", col " +
                             std::to_string(col) + ": '" + std::string(field) + "'",
                         row, col);
      values.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (values.size() != expected_columns)
      throw DimensionMismatch(expected_columns, values.size(), "row " + std::to_string(row));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InvalidInput("empty dataset: " + path.string());
  return rows;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out << content;
    if (!out) throw RuntimeFailure("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& path, std::size_t dim) {
  if (dim == 0) throw InvalidInput("dimension must be positive");
  const auto rows = detail::read_csv_rows(path, dim);
  std::vector<double> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Dataset(dim, std::move(flat));
}

// Label is the final column.
inline LabeledDataset load_labeled_dataset(const std::filesystem::path& path, std::size_t dim) {
  if (dim == 0) throw InvalidInput("dimension must be positive");
  const auto rows = detail::read_csv_rows(path, dim + 1);
  std::vector<double> flat;
  std::vector<int> labels;
  flat.reserve(rows.size() * dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    flat.insert(flat.end(), rows[r].begin(), rows[r].begin() + static_cast<std::ptrdiff_t>(dim));
    const double y = rows[r][dim];
    if (y != 1.0 && y != -1.0)
      throw ParseError("label at row " + std::to_string(r + 1) + " is not -1 or +1", r + 1,
                       dim + 1);
    labels.push_back(y > 0 ? 1 : -1);
  }
  return LabeledDataset(Dataset(dim, std::move(flat)), std::move(labels));
}

// Column count of the first non-empty row, for callers that infer d.
inline std::size_t csv_column_count(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open data file: " + path.string());
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line != "\r") return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  throw InvalidInput("empty dataset: " + path.string());
}

inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.point(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j) out += ',';
      out += detail::format_double(x[j]);
    }
    out += '\n';
  }
  return out;
}

inline std::string to_csv(const LabeledDataset& ds) {
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.data().point(i)) {
      out += detail::format_double(v);
      out += ',';
    }
    out += ds.labels()[i] > 0 ? "1\n" : "-1\n";
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  detail::write_atomically(path, to_csv(ds));
}

inline void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  detail::write_atomically(path, to_csv(ds));
}

// Fisher-Yates permutation of 0..n-1 driven by rng.
inline std::vector<std::size_t> random_permutation(std::size_t n, RngSpec rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  CounterEngine eng(rng);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[eng.below(i)]);
  return perm;
}

namespace detail {

inline std::size_t first_part_size(std::size_t n, double fraction) {
  if (n < 2) throw InvalidInput("split needs at least 2 points, got " + std::to_string(n));
  if (!(fraction > 0.0 && fraction < 1.0))
    throw InvalidInput("split fraction must lie in (0,1)");
  const auto first = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (first == 0 || first >= n)
    throw InvalidInput("split of " + std::to_string(n) + " points at fraction " +
                       format_double(fraction) + " leaves an empty part");
  return first;
}

inline Dataset gather(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size() * ds.dim());
  for (auto i : idx) {
    const auto x = ds.point(i);
    out.insert(out.end(), x.begin(), x.end());
  }
  return Dataset(ds.dim(), std::move(out));
}

}  // namespace detail

inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction, RngSpec rng) {
  const std::size_t first = detail::first_part_size(ds.size(), fraction);
  const auto perm = random_permutation(ds.size(), rng);
  const std::span<const std::size_t> p(perm);
  return {detail::gather(ds, p.subspan(0, first)), detail::gather(ds, p.subspan(first))};
}

inline std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                               double fraction, RngSpec rng) {
  const std::size_t first = detail::first_part_size(ds.size(), fraction);
  const auto perm = random_permutation(ds.size(), rng);
  const std::span<const std::size_t> p(perm);
  auto labels_of = [&](std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds.labels()[i]);
    return out;
  };
  return {LabeledDataset(detail::gather(ds.data(), p.subspan(0, first)), labels_of(p.subspan(0, first))),
          LabeledDataset(detail::gather(ds.data(), p.subspan(first)), labels_of(p.subspan(first)))};
}

// Contiguous blocks, in order. Used for disjoint repetitions of a test.
inline std::vector<Dataset> partition_blocks(const Dataset& ds, std::size_t parts) {
  if (parts == 0 || parts > ds.size())
    throw InvalidInput("cannot cut " + std::to_string(ds.size()) + " points into " +
                       std::to_string(parts) + " blocks");
  std::vector<Dataset> out;
  const std::size_t n = ds.size();
  for (std::size_t b = 0; b < parts; ++b) {
    const std::size_t lo = b * n / parts, hi = (b + 1) * n / parts;
    out.emplace_back(ds.dim(), std::vector<double>(ds.values().begin() + static_cast<std::ptrdiff_t>(lo * ds.dim()),
                                                   ds.values().begin() + static_cast<std::ptrdiff_t>(hi * ds.dim())));
  }
  return out;
}

struct Verdict {
  bool accepted = true;
  std::optional<std::string> failed_check;
  double worst_gap = 0.0;
  std::map<std::string, double> thresholds;
  json diagnostics = json::object();

  // Records a failed check, keeping the first failure's name and the largest margin.
  void reject(const std::string& check, double margin) {
    if (accepted) failed_check = check;
    accepted = false;
    worst_gap = std::max(worst_gap, std::max(margin, 0.0));
  }
};

inline void to_json(json& j, const Verdict& v) {
  j = json{{"accepted", v.accepted},
           {"failed_check", v.failed_check ? json(*v.failed_check) : json(nullptr)},
           {"worst_gap", v.worst_gap},
           {"thresholds", v.thresholds}};
  if (!v.diagnostics.empty()) j["diagnostics"] = v.diagnostics;
}

inline void from_json(const json& j, Verdict& v) {
  v.accepted = j.at("accepted").get<bool>();
  v.failed_check.reset();
  if (j.contains("failed_check") && !j.at("failed_check").is_null())
    v.failed_check = j.at("failed_check").get<std::string>();
  v.worst_gap = j.at("worst_gap").get<double>();
  v.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
  v.diagnostics = j.value("diagnostics", json::object());
}

struct SampleBudget {
  std::size_t m_train = 1;
  std::size_t m_test = 1;
  std::size_t m_conc = 1;

  void validate() const {
    if (m_train < 1 || m_test < 1 || m_conc < 1)
      throw ConfigError("sample budget counts must be at least 1");
  }
};

inline void to_json(json& j, const SampleBudget& b) {
  j = json{{"m_train", b.m_train}, {"m_test", b.m_test}, {"m_conc", b.m_conc}};
}

inline void from_json(const json& j, SampleBudget& b) {
  b.m_train = j.at("m_train").get<std::size_t>();
  b.m_test = j.at("m_test").get<std::size_t>();
  b.m_conc = j.at("m_conc").get<std::size_t>();
  b.validate();
}

}  // namespace tds
