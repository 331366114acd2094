#pragma once

// Shared builders for the test binaries.

#include <string>
#include <vector>

#include <lgp/lgp.hpp>

namespace testutil {

inline lgp::CovariateColumn continuous_column(const std::string& name,
                                              const std::vector<double>& values,
                                              bool maskable = false) {
  lgp::CovariateColumn c;
  c.name = name;
  c.kind = lgp::CovariateKind::Continuous;
  c.maskable = maskable;
  c.values.resize(static_cast<int>(values.size()));
  c.missing.assign(values.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    c.values[static_cast<int>(i)] = values[i];
    if (std::isnan(values[i])) c.missing[i] = 1;
  }
  return c;
}

inline lgp::CovariateColumn categorical_column(const std::string& name,
                                               const std::vector<int>& codes, int m) {
  lgp::CovariateColumn c;
  c.name = name;
  c.kind = lgp::CovariateKind::Categorical;
  c.codes = codes;
  for (int i = 1; i <= m; ++i) c.levels.push_back(name + std::to_string(i));
  return c;
}

// 8 rows, 2 individuals x 4 ages, one binary covariate.
inline lgp::LongitudinalDataset tiny_dataset() {
  std::vector<lgp::CovariateColumn> cols;
  cols.push_back(categorical_column("id", {1, 1, 1, 1, 2, 2, 2, 2}, 2));
  cols.push_back(continuous_column("age", {0.0, 0.3, 0.9, 1.4, 2.0, 2.2, 3.1, 3.5}));
  cols.push_back(categorical_column("sex", {1, 2, 1, 2, 1, 2, 1, 2}, 2));
  Eigen::VectorXd y(8);
  y << 0.1, -0.4, 0.6, 1.2, -0.3, -0.8, 0.5, 1.1;
  return lgp::LongitudinalDataset(std::move(cols), "y", y, "id", {}, {}, "age");
}

// 4 individuals (2 cases) x 4 timepoints, with diseaseAge missing for the
// controls and a case/control group factor.
inline lgp::LongitudinalDataset disease_dataset() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  int P = 4, T = 4, N = P * T;
  std::vector<int> id(N), grp(N);
  std::vector<double> age(N), dis(N);
  double t_obs[2] = {4.0, 6.0};
  for (int p = 0; p < P; ++p) {
    for (int t = 0; t < T; ++t) {
      int i = p * T + t;
      id[i] = p + 1;
      age[i] = 3.0 * t;
      bool is_case = p < 2;
      grp[i] = is_case ? 1 : 2;
      dis[i] = is_case ? age[i] - t_obs[p] : nan;
    }
  }
  std::vector<lgp::CovariateColumn> cols;
  cols.push_back(categorical_column("id", id, P));
  cols.push_back(continuous_column("age", age));
  cols.push_back(continuous_column("diseaseAge", dis, true));
  cols.push_back(categorical_column("group", grp, 2));
  Eigen::VectorXd y(N);
  for (int i = 0; i < N; ++i) y[i] = 0.1 * i - 0.5;
  return lgp::LongitudinalDataset(std::move(cols), "y", y, "id", {}, {}, "age");
}

inline lgp::ModelSpec spec_for(const std::string& formula, const lgp::LongitudinalDataset& ds,
                               lgp::LikelihoodFamily fam = lgp::LikelihoodFamily::Gaussian) {
  lgp::ModelSpec spec = lgp::parse_formula(formula);
  spec.likelihood = fam;
  lgp::validate_spec(spec, ds);
  return spec;
}

}  // namespace testutil
