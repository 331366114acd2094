#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgp {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class CovariateKind { Continuous, Categorical };

struct ColumnSchema {
  CovariateKind kind = CovariateKind::Continuous;
  bool maskable = false;
  std::vector<std::string> levels;  // optional fixed level set for categoricals
};

// Sidecar description of a CSV file: which columns are covariates (and of
// what kind), which column is the response, and the optional trials/scaling
// columns. `id` names the individual identifier, `time` the column used to
// recover observation times for effect-time reporting (defaults to "age"
// when such a column exists).
struct DataSchema {
  std::map<std::string, ColumnSchema> columns;
  std::string response;
  std::string trials;
  std::string scaling;
  std::string id = "id";
  std::string time;
};

struct CovariateColumn {
  std::string name;
  CovariateKind kind = CovariateKind::Continuous;
  bool maskable = false;
  Eigen::VectorXd values;           // continuous: NaN at missing entries
  std::vector<char> missing;        // continuous: 1 where missing
  std::vector<int> codes;           // categorical: 1..M
  std::vector<std::string> levels;  // categorical level labels
  double center = 0.0;              // original = center + scale * value
  double scale = 1.0;

  int num_categories() const { return static_cast<int>(levels.size()); }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool equal_or_both_nan(double a, double b) {
  return a == b || (std::isnan(a) && std::isnan(b));
}

}  // namespace detail

// A fixed snapshot of one longitudinal study: covariate columns, a response
// vector, optional binomial trials and per-observation scaling factors.
// Immutable after construction; normalization returns a new dataset.
class LongitudinalDataset {
 public:
  LongitudinalDataset(std::vector<CovariateColumn> columns, std::string response_name,
                      Eigen::VectorXd response, std::string id_column,
                      Eigen::VectorXd trials = Eigen::VectorXd(),
                      Eigen::VectorXd scaling = Eigen::VectorXd(), std::string time_column = "")
      : columns_(std::move(columns)),
        response_name_(std::move(response_name)),
        response_(std::move(response)),
        trials_(std::move(trials)),
        scaling_(std::move(scaling)),
        id_column_(std::move(id_column)),
        time_column_(std::move(time_column)) {
    validate();
  }

  static LongitudinalDataset load_csv(const std::string& path, const DataSchema& schema);

  void write_csv(const std::string& path) const;

  int num_rows() const { return static_cast<int>(response_.size()); }
  int num_covariates() const { return static_cast<int>(columns_.size()); }

  bool has_column(const std::string& name) const {
    return std::any_of(columns_.begin(), columns_.end(),
                       [&](const CovariateColumn& c) { return c.name == name; });
  }

  const CovariateColumn& column(const std::string& name) const {
    for (const auto& c : columns_) {
      if (c.name == name) return c;
    }
    throw Error("unknown column '" + name + "'");
  }

  const CovariateColumn& column(int i) const { return columns_.at(i); }
  const std::vector<CovariateColumn>& columns() const { return columns_; }

  const Eigen::VectorXd& response() const { return response_; }
  const std::string& response_name() const { return response_name_; }

  bool has_trials() const { return trials_.size() > 0; }
  const Eigen::VectorXd& trials() const { return trials_; }

  bool has_scaling() const { return scaling_.size() > 0; }
  // Per-observation scaling factors c_i; zero when none were supplied.
  Eigen::VectorXd scaling_or_zero() const {
    if (has_scaling()) return scaling_;
    return Eigen::VectorXd::Zero(num_rows());
  }
  const Eigen::VectorXd& scaling() const { return scaling_; }

  const std::string& id_column() const { return id_column_; }
  const std::string& time_column() const { return time_column_; }
  int num_individuals() const { return column(id_column_).num_categories(); }

  // Returns a copy with `column` standardized to zero mean and unit variance
  // (population convention). Records the transform so original units can be
  // recovered as center + scale * value.
  LongitudinalDataset normalize_continuous(const std::string& name) const {
    LongitudinalDataset out = *this;
    CovariateColumn& col = out.mutable_column(name);
    require_continuous(col);
    double m, s;
    moments(col, m, s);
    if (s == 0.0) throw Error("column '" + name + "' is constant; cannot normalize");
    for (int i = 0; i < col.values.size(); ++i) {
      if (!col.missing[i]) col.values[i] = (col.values[i] - m) / s;
    }
    col.center = col.center + col.scale * m;
    col.scale = col.scale * s;
    return out;
  }

  // Returns a copy with `column` divided by its standard deviation, keeping
  // zero fixed. Used for disease-related ages, where zero marks the event
  // and must stay put.
  LongitudinalDataset scale_continuous(const std::string& name) const {
    LongitudinalDataset out = *this;
    CovariateColumn& col = out.mutable_column(name);
    require_continuous(col);
    double m, s;
    moments(col, m, s);
    if (s == 0.0) throw Error("column '" + name + "' is constant; cannot scale");
    for (int i = 0; i < col.values.size(); ++i) {
      if (!col.missing[i]) col.values[i] /= s;
    }
    col.scale = col.scale * s;
    return out;
  }

  bool operator==(const LongitudinalDataset& other) const {
    if (response_name_ != other.response_name_ || id_column_ != other.id_column_ ||
        time_column_ != other.time_column_)
      return false;
    if (columns_.size() != other.columns_.size()) return false;
    auto vec_eq = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      if (a.size() != b.size()) return false;
      for (int i = 0; i < a.size(); ++i) {
        if (!detail::equal_or_both_nan(a[i], b[i])) return false;
      }
      return true;
    };
    if (!vec_eq(response_, other.response_)) return false;
    if (!vec_eq(trials_, other.trials_)) return false;
    if (!vec_eq(scaling_, other.scaling_)) return false;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& a = columns_[j];
      const auto& b = other.columns_[j];
      if (a.name != b.name || a.kind != b.kind || a.maskable != b.maskable ||
          a.levels != b.levels || a.codes != b.codes || a.missing != b.missing ||
          a.center != b.center || a.scale != b.scale)
        return false;
      if (!vec_eq(a.values, b.values)) return false;
    }
    return true;
  }

 private:
  CovariateColumn& mutable_column(const std::string& name) {
    for (auto& c : columns_) {
      if (c.name == name) return c;
    }
    throw Error("unknown column '" + name + "'");
  }

  static void require_continuous(const CovariateColumn& col) {
    if (col.kind != CovariateKind::Continuous) {
      throw Error("column '" + col.name + "' is not continuous");
    }
  }

  static void moments(const CovariateColumn& col, double& mean, double& sd) {
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < col.values.size(); ++i) {
      if (!col.missing[i]) {
        sum += col.values[i];
        ++n;
      }
    }
    if (n == 0) throw Error("column '" + col.name + "' has no observed values");
    mean = sum / n;
    double ss = 0.0;
    for (int i = 0; i < col.values.size(); ++i) {
      if (!col.missing[i]) {
        double d = col.values[i] - mean;
        ss += d * d;
      }
    }
    sd = std::sqrt(ss / n);
  }

  void validate() const {
    int n = num_rows();
    if (n < 1) throw Error("dataset must contain at least one row");
    for (const auto& c : columns_) {
      if (c.kind == CovariateKind::Continuous) {
        if (c.values.size() != n || static_cast<int>(c.missing.size()) != n) {
          throw Error("column '" + c.name + "' has inconsistent length");
        }
        for (int i = 0; i < n; ++i) {
          if (c.missing[i] && !c.maskable) {
            throw Error("missing value in non-maskable column '" + c.name + "'");
          }
          if (!c.missing[i] && !std::isfinite(c.values[i])) {
            throw Error("non-finite value in column '" + c.name + "'");
          }
        }
      } else {
        if (static_cast<int>(c.codes.size()) != n) {
          throw Error("column '" + c.name + "' has inconsistent length");
        }
        int m = c.num_categories();
        if (m < 1) throw Error("categorical column '" + c.name + "' has no levels");
        for (int code : c.codes) {
          if (code < 1 || code > m) {
            throw Error("categorical code out of range in column '" + c.name + "'");
          }
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(response_[i])) throw Error("non-finite response value");
    }
    if (trials_.size() > 0) {
      if (trials_.size() != n) throw Error("trials column has inconsistent length");
      for (int i = 0; i < n; ++i) {
        if (!(trials_[i] >= 1.0) || trials_[i] != std::floor(trials_[i])) {
          throw Error("trials must be positive integers");
        }
        if (response_[i] < 0.0 || response_[i] > trials_[i] ||
            response_[i] != std::floor(response_[i])) {
          throw Error("response must be an integer in [0, trials]");
        }
      }
    }
    if (scaling_.size() > 0 && scaling_.size() != n) {
      throw Error("scaling column has inconsistent length");
    }
    if (!id_column_.empty()) {
      const CovariateColumn& id = column(id_column_);
      if (id.kind != CovariateKind::Categorical) {
        throw Error("id column '" + id_column_ + "' must be categorical");
      }
    }
  }

  std::vector<CovariateColumn> columns_;
  std::string response_name_;
  Eigen::VectorXd response_;
  Eigen::VectorXd trials_;
  Eigen::VectorXd scaling_;
  std::string id_column_;
  std::string time_column_;
};

inline LongitudinalDataset LongitudinalDataset::load_csv(const std::string& path,
                                                         const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path + "' is empty");
  std::vector<std::string> header = detail::split_csv_line(line);

  std::vector<std::vector<std::string>> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> row = detail::split_csv_line(line);
    if (row.size() != header.size()) {
      throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
    }
    cells.push_back(std::move(row));
  }
  int n = static_cast<int>(cells.size());
  if (n == 0) throw Error("'" + path + "' contains no data rows");

  auto column_index = [&](const std::string& name) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
  };

  if (schema.response.empty()) throw Error("schema does not name a response column");
  int yidx = column_index(schema.response);
  if (yidx < 0) throw Error("response column '" + schema.response + "' not found");
  int tidx = schema.trials.empty() ? -1 : column_index(schema.trials);
  if (!schema.trials.empty() && tidx < 0) {
    throw Error("trials column '" + schema.trials + "' not found");
  }
  int sidx = schema.scaling.empty() ? -1 : column_index(schema.scaling);
  if (!schema.scaling.empty() && sidx < 0) {
    throw Error("scaling column '" + schema.scaling + "' not found");
  }

  for (const auto& name : header) {
    if (name == schema.response || name == schema.trials || name == schema.scaling) continue;
    if (schema.columns.find(name) == schema.columns.end()) {
      throw Error("unknown column '" + name + "' (not in schema)");
    }
  }
  for (const auto& [name, cs] : schema.columns) {
    if (column_index(name) < 0) throw Error("schema column '" + name + "' not found in CSV");
  }

  std::vector<CovariateColumn> columns;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& name = header[j];
    if (static_cast<int>(j) == yidx || static_cast<int>(j) == tidx ||
        static_cast<int>(j) == sidx)
      continue;
    const ColumnSchema& cs = schema.columns.at(name);
    CovariateColumn col;
    col.name = name;
    col.kind = cs.kind;
    col.maskable = cs.maskable;
    if (cs.kind == CovariateKind::Continuous) {
      col.values.resize(n);
      col.missing.assign(n, 0);
      for (int i = 0; i < n; ++i) {
        const std::string& tok = cells[i][j];
        if (tok.empty() || tok == "NaN") {
          if (!cs.maskable) {
            throw Error(path + ":" + std::to_string(i + 2) + ": missing value in non-maskable column '" +
                        name + "'");
          }
          col.missing[i] = 1;
          col.values[i] = std::numeric_limits<double>::quiet_NaN();
        } else {
          double v;
          if (!detail::parse_double(tok, v)) {
            throw Error(path + ":" + std::to_string(i + 2) + ": cannot parse '" + tok +
                        "' in column '" + name + "'");
          }
          col.values[i] = v;
        }
      }
    } else {
      col.levels = cs.levels;
      col.codes.resize(n);
      for (int i = 0; i < n; ++i) {
        const std::string& tok = cells[i][j];
        if (tok.empty()) {
          throw Error(path + ":" + std::to_string(i + 2) + ": missing categorical value in column '" +
                      name + "'");
        }
        auto it = std::find(col.levels.begin(), col.levels.end(), tok);
        if (it == col.levels.end()) {
          if (!cs.levels.empty()) {
            throw Error(path + ":" + std::to_string(i + 2) + ": value '" + tok +
                        "' outside declared levels of column '" + name + "'");
          }
          col.levels.push_back(tok);
          col.codes[i] = static_cast<int>(col.levels.size());
        } else {
          col.codes[i] = static_cast<int>(it - col.levels.begin()) + 1;
        }
      }
    }
    columns.push_back(std::move(col));
  }

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    if (!detail::parse_double(cells[i][yidx], y[i])) {
      throw Error(path + ":" + std::to_string(i + 2) + ": cannot parse response '" +
                  cells[i][yidx] + "'");
    }
  }
  Eigen::VectorXd trials;
  if (tidx >= 0) {
    trials.resize(n);
    for (int i = 0; i < n; ++i) {
      if (!detail::parse_double(cells[i][tidx], trials[i])) {
        throw Error(path + ":" + std::to_string(i + 2) + ": cannot parse trials '" +
                    cells[i][tidx] + "'");
      }
    }
  }
  Eigen::VectorXd scaling;
  if (sidx >= 0) {
    scaling.resize(n);
    for (int i = 0; i < n; ++i) {
      if (!detail::parse_double(cells[i][sidx], scaling[i])) {
        throw Error(path + ":" + std::to_string(i + 2) + ": cannot parse scaling '" +
                    cells[i][sidx] + "'");
      }
    }
  }

  std::string id = schema.id;
  if (!id.empty() && column_index(id) < 0) {
    throw Error("id column '" + id + "' not found");
  }
  std::string time = schema.time;
  if (time.empty() && column_index("age") >= 0) time = "age";
  if (!time.empty() && column_index(time) < 0) {
    throw Error("time column '" + time + "' not found");
  }

  return LongitudinalDataset(std::move(columns), schema.response, std::move(y), id,
                             std::move(trials), std::move(scaling), time);
}

inline void LongitudinalDataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& c : columns_) out << c.name << ",";
  out << response_name_;
  if (has_trials()) out << ",trials";
  if (has_scaling()) out << ",scaling";
  out << "\n";
  for (int i = 0; i < num_rows(); ++i) {
    for (const auto& c : columns_) {
      if (c.kind == CovariateKind::Continuous) {
        if (!c.missing[i]) out << detail::format_double(c.values[i]);
      } else {
        out << c.levels[c.codes[i] - 1];
      }
      out << ",";
    }
    out << detail::format_double(response_[i]);
    if (has_trials()) out << "," << detail::format_double(trials_[i]);
    if (has_scaling()) out << "," << detail::format_double(scaling_[i]);
    out << "\n";
  }
}

}  // namespace lgp
