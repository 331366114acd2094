#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lgp/dataset.hpp"
#include "lgp/formula.hpp"
#include "lgp/kernels.hpp"
#include "lgp/rng.hpp"

namespace lgp {

// One extra covariate in a simulated study. Continuous covariates get an
// independent value per row; categorical ones a fixed level per individual.
// Irrelevant covariates appear in the dataset but not in the signal.
struct SimCovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::Continuous;
  int categories = 2;
  bool relevant = false;
  double magnitude = 1.0;
  bool interact_with_age = false;  // categorical: category-specific age curve
  double lengthscale = 1.0;        // continuous covariates
};

enum class DiseaseShape { WarpedGP, Bump };
enum class ShiftKind { None, Fixed, Exponential, Uniform };

struct SimConfig {
  int num_individuals = 12;
  int num_timepoints = 8;
  double t_max = 96.0;
  double time_jitter = 0.0;
  double case_fraction = 0.5;

  double age_magnitude = 1.0;
  double age_lengthscale = 36.0;
  double id_magnitude = 1.0;
  double id_lengthscale = 24.0;
  bool id_relevant = true;
  bool age_relevant = true;

  std::vector<SimCovariateSpec> covariates;

  bool disease_present = false;
  bool disease_relevant = true;
  double disease_magnitude = 1.0;
  DiseaseShape disease_shape = DiseaseShape::WarpedGP;
  double disease_lengthscale = 24.0;
  double warp_steepness = 0.1138;  // ~95% of the warp range over +-36
  double bump_width = 12.0;
  double vm_h = 0.025;
  int num_affected = -1;  // -1: every case is affected
  ShiftKind shift_kind = ShiftKind::None;
  double shift_a = 0.0;  // Fixed: the shift; Exponential: mean; Uniform: lower
  double shift_b = 0.0;  // Uniform: upper

  LikelihoodFamily family = LikelihoodFamily::Gaussian;
  double target_p_noise = 0.3;
  double nb_dispersion = 3.0;
  double nb_intercept = 1.2;  // log mean of the count response at signal 0

  std::uint64_t seed = 1;
};

struct SimResult {
  LongitudinalDataset dataset;
  std::map<std::string, bool> relevant;    // covariate name -> in the signal
  std::vector<char> affected;              // per case, aligned with case_ids
  std::vector<int> case_ids;               // individual codes that are cases
  std::vector<double> effect_times;        // true t_eff per case (NaN if unaffected)
  std::vector<double> observed_times;      // t_obs per case
  Eigen::MatrixXd components;              // one generating component per row
  std::vector<std::string> component_names;
  double sigma = 0.0;  // gaussian noise level implied by target_p_noise
};

// Rank-based AUC: the probability that a positive-label score exceeds a
// negative-label one, ties counting one half.
inline double roc_auc(const std::vector<double>& scores, const std::vector<char>& labels) {
  if (scores.size() != labels.size()) throw Error("roc_auc: length mismatch");
  double npos = 0.0, nneg = 0.0;
  for (char l : labels) (l ? npos : nneg) += 1.0;
  if (npos == 0.0 || nneg == 0.0) throw Error("roc_auc: both classes required");
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (labels[k]) continue;
      if (scores[i] > scores[k]) wins += 1.0;
      else if (scores[i] == scores[k]) wins += 0.5;
    }
  }
  return wins / (npos * nneg);
}

namespace detail {

// Draw one GP realization over precomputed kernel matrix K. Sampling goes
// through the eigendecomposition with small eigenvalues clamped to zero, so
// exact kernel null spaces (zero-sum directions, masked rows) survive in the
// draw instead of being blurred by jitter.
inline Eigen::VectorXd gp_draw(const Eigen::MatrixXd& K, Rng& rng) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  if (es.info() != Eigen::Success) throw Error("simulate: kernel not factorizable");
  Eigen::VectorXd z(K.rows());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * z;
}

inline Eigen::MatrixXd eq_matrix(const Eigen::VectorXd& x, double ell) {
  int n = static_cast<int>(x.size());
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k <= i; ++k) {
      K(i, k) = K(k, i) = k_eq(x[i], x[k], ell);
    }
  }
  return K;
}

// Scale a component to unit standard deviation over its support rows, then
// by the requested magnitude. Leaves all-zero components untouched.
inline void rescale(Eigen::VectorXd& f, const std::vector<char>& support, double magnitude) {
  double ss = 0.0, sum = 0.0;
  int n = 0;
  for (int i = 0; i < f.size(); ++i) {
    if (!support[i]) continue;
    sum += f[i];
    ++n;
  }
  if (n == 0) return;
  double mean = sum / n;
  for (int i = 0; i < f.size(); ++i) {
    if (support[i]) ss += (f[i] - mean) * (f[i] - mean);
  }
  double sd = std::sqrt(ss / n);
  if (sd <= 0.0) return;
  f *= magnitude / sd;
}

// Zero-sum categorical component: iid standard normal per category, centered
// across categories and rescaled, so the sum over categories is exactly zero
// and the covariance matches the zero-sum kernel.
inline Eigen::VectorXd zero_sum_offsets(int m, Rng& rng) {
  Eigen::VectorXd g(m);
  for (int i = 0; i < m; ++i) g[i] = rng.normal();
  double mean = g.mean();
  return std::sqrt(static_cast<double>(m) / (m - 1.0)) * (g.array() - mean).matrix();
}

}  // namespace detail

inline SimResult simulate(const SimConfig& cfg) {
  if (cfg.num_individuals < 2 || cfg.num_timepoints < 1) {
    throw Error("simulate: need at least two individuals and one timepoint");
  }
  if (cfg.family != LikelihoodFamily::Gaussian && cfg.family != LikelihoodFamily::NegBinomial) {
    throw Error("simulate: family must be gaussian or nb");
  }
  int P = cfg.num_individuals;
  int T = cfg.num_timepoints;
  int N = P * T;
  Rng rng(mix_seed(cfg.seed, 0x5751f8a2u));

  int num_cases = static_cast<int>(std::lround(cfg.case_fraction * P));
  num_cases = std::max(0, std::min(P, num_cases));
  if (cfg.disease_present && num_cases == 0) {
    throw Error("simulate: disease effect requested with zero cases");
  }
  int num_affected = cfg.num_affected < 0 ? num_cases : cfg.num_affected;
  if (num_affected > num_cases) throw Error("simulate: num_affected exceeds case count");

  // Rows grouped by individual; individuals 1..num_cases are the cases.
  std::vector<int> id_code(N);
  Eigen::VectorXd age(N);
  for (int p = 0; p < P; ++p) {
    for (int t = 0; t < T; ++t) {
      int i = p * T + t;
      id_code[i] = p + 1;
      double base = T == 1 ? 0.5 * cfg.t_max : cfg.t_max * t / (T - 1.0);
      age[i] = base + (cfg.time_jitter > 0.0 ? cfg.time_jitter * rng.uniform(-1.0, 1.0) : 0.0);
    }
  }

  std::map<std::string, bool> relevant;
  std::vector<char> affected;
  std::vector<int> case_ids;
  std::vector<double> effect_times, observed_times;
  std::vector<std::string> component_names;

  // Disease bookkeeping: observed and true effect times per case.
  std::vector<char> is_case(P, 0);
  for (int p = 0; p < num_cases; ++p) is_case[p] = 1;
  std::vector<char> affected_case(num_cases, 0);
  {
    std::vector<int> order(num_cases);
    for (int i = 0; i < num_cases; ++i) order[i] = i;
    rng.shuffle(order);
    for (int i = 0; i < num_affected; ++i) affected_case[order[i]] = 1;
  }
  Eigen::VectorXd disease_age(N);
  std::vector<char> disease_missing(N, 1);
  std::vector<char> row_affected(N, 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  disease_age.setConstant(nan);
  if (cfg.disease_present) {
    for (int q = 0; q < num_cases; ++q) {
      double t_obs = cfg.t_max * rng.uniform(0.4, 0.6);
      double shift = 0.0;
      switch (cfg.shift_kind) {
        case ShiftKind::None: break;
        case ShiftKind::Fixed: shift = cfg.shift_a; break;
        case ShiftKind::Exponential: shift = rng.exponential(1.0 / cfg.shift_a); break;
        case ShiftKind::Uniform: shift = rng.uniform(cfg.shift_a, cfg.shift_b); break;
      }
      double t_eff = t_obs - shift;
      case_ids.push_back(q + 1);
      observed_times.push_back(t_obs);
      affected.push_back(affected_case[q]);
      effect_times.push_back(affected_case[q] ? t_eff : nan);
      for (int t = 0; t < T; ++t) {
        int i = q * T + t;
        disease_age[i] = age[i] - t_obs;  // observed onset defines the covariate
        disease_missing[i] = 0;
        row_affected[i] = affected_case[q];
      }
    }
  }

  // Extra covariates.
  std::vector<CovariateColumn> columns;
  {
    CovariateColumn idc;
    idc.name = "id";
    idc.kind = CovariateKind::Categorical;
    idc.codes = id_code;
    for (int p = 0; p < P; ++p) idc.levels.push_back(std::to_string(p + 1));
    columns.push_back(std::move(idc));
    CovariateColumn agec;
    agec.name = "age";
    agec.kind = CovariateKind::Continuous;
    agec.values = age;
    agec.missing.assign(N, 0);
    columns.push_back(std::move(agec));
  }
  std::vector<std::vector<int>> roster_codes;
  std::vector<Eigen::VectorXd> roster_values;
  for (const auto& cov : cfg.covariates) {
    CovariateColumn col;
    col.name = cov.name;
    col.kind = cov.kind;
    if (cov.kind == CovariateKind::Categorical) {
      if (cov.categories < 2) throw Error("simulate: categorical covariates need >= 2 levels");
      std::vector<int> codes(N);
      for (int p = 0; p < P; ++p) {
        int c = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cov.categories)));
        for (int t = 0; t < T; ++t) codes[p * T + t] = c;
      }
      col.codes = codes;
      for (int c = 1; c <= cov.categories; ++c) col.levels.push_back(std::to_string(c));
      roster_codes.push_back(std::move(codes));
      roster_values.emplace_back();
    } else {
      Eigen::VectorXd v(N);
      for (int i = 0; i < N; ++i) v[i] = rng.normal();
      col.values = v;
      col.missing.assign(N, 0);
      roster_codes.emplace_back();
      roster_values.push_back(std::move(v));
    }
    columns.push_back(std::move(col));
  }
  if (cfg.disease_present) {
    CovariateColumn dis;
    dis.name = "diseaseAge";
    dis.kind = CovariateKind::Continuous;
    dis.maskable = true;
    dis.values = disease_age;
    dis.missing = disease_missing;
    columns.push_back(std::move(dis));
    CovariateColumn grp;
    grp.name = "group";
    grp.kind = CovariateKind::Categorical;
    grp.levels = {"case", "control"};
    grp.codes.resize(N);
    for (int i = 0; i < N; ++i) grp.codes[i] = is_case[(i / T)] ? 1 : 2;
    columns.push_back(std::move(grp));
  }

  // Signal components, each rescaled to its magnitude.
  Eigen::VectorXd signal = Eigen::VectorXd::Zero(N);
  std::vector<Eigen::VectorXd> comps;
  std::vector<char> all_rows(N, 1);
  auto add_component = [&](Eigen::VectorXd f, const std::vector<char>& support, double magnitude,
                           const std::string& name) {
    detail::rescale(f, support, magnitude);
    signal += f;
    comps.push_back(std::move(f));
    component_names.push_back(name);
  };

  if (cfg.age_relevant && cfg.age_magnitude > 0.0) {
    Eigen::MatrixXd K = detail::eq_matrix(age, cfg.age_lengthscale);
    add_component(detail::gp_draw(K, rng), all_rows, cfg.age_magnitude, "gp(age)");
  }
  relevant["age"] = cfg.age_relevant && cfg.age_magnitude > 0.0;

  if (cfg.id_relevant && cfg.id_magnitude > 0.0 && P >= 2) {
    // Per-category age curves, centered across individuals at matching rows.
    Eigen::MatrixXd K = detail::eq_matrix(age, cfg.id_lengthscale);
    Eigen::MatrixXd draws(P, N);
    for (int p = 0; p < P; ++p) draws.row(p) = detail::gp_draw(K, rng).transpose();
    Eigen::VectorXd f(N);
    double scale = std::sqrt(static_cast<double>(P) / (P - 1.0));
    for (int i = 0; i < N; ++i) {
      double mean = draws.col(i).mean();
      f[i] = scale * (draws(id_code[i] - 1, i) - mean);
    }
    add_component(std::move(f), all_rows, cfg.id_magnitude, "zs(id)*gp(age)");
  }
  relevant["id"] = cfg.id_relevant && cfg.id_magnitude > 0.0 && P >= 2;

  for (std::size_t ci = 0; ci < cfg.covariates.size(); ++ci) {
    const auto& cov = cfg.covariates[ci];
    relevant[cov.name] = cov.relevant && cov.magnitude > 0.0;
    if (!cov.relevant || cov.magnitude <= 0.0) continue;
    if (cov.kind == CovariateKind::Categorical) {
      const std::vector<int>& codes = roster_codes[ci];
      Eigen::VectorXd f(N);
      if (cov.interact_with_age) {
        Eigen::MatrixXd K = detail::eq_matrix(age, cfg.age_lengthscale);
        Eigen::MatrixXd draws(cov.categories, N);
        for (int c = 0; c < cov.categories; ++c) {
          draws.row(c) = detail::gp_draw(K, rng).transpose();
        }
        double scale = std::sqrt(static_cast<double>(cov.categories) / (cov.categories - 1.0));
        for (int i = 0; i < N; ++i) {
          double mean = draws.col(i).mean();
          f[i] = scale * (draws(codes[i] - 1, i) - mean);
        }
        add_component(std::move(f), all_rows, cov.magnitude, "zs(" + cov.name + ")*gp(age)");
      } else {
        Eigen::VectorXd off = detail::zero_sum_offsets(cov.categories, rng);
        for (int i = 0; i < N; ++i) f[i] = off[codes[i] - 1];
        add_component(std::move(f), all_rows, cov.magnitude, "zs(" + cov.name + ")");
      }
    } else {
      Eigen::MatrixXd K = detail::eq_matrix(roster_values[ci], cov.lengthscale);
      add_component(detail::gp_draw(K, rng), all_rows, cov.magnitude, "gp(" + cov.name + ")");
    }
  }

  if (cfg.disease_present) {
    relevant["diseaseAge"] = cfg.disease_relevant && cfg.disease_magnitude > 0.0;
    relevant["group"] = relevant["diseaseAge"];
    if (cfg.disease_relevant && cfg.disease_magnitude > 0.0 && num_affected > 0) {
      // Effective disease age of affected rows relative to the true onset.
      std::vector<int> rows;
      std::vector<double> x;
      for (int q = 0; q < num_cases; ++q) {
        if (!affected_case[q]) continue;
        for (int t = 0; t < T; ++t) {
          int i = q * T + t;
          rows.push_back(i);
          x.push_back(age[i] - effect_times[q]);
        }
      }
      int nr = static_cast<int>(rows.size());
      Eigen::VectorXd fr(nr);
      if (cfg.disease_shape == DiseaseShape::Bump) {
        for (int i = 0; i < nr; ++i) {
          fr[i] = std::exp(-(x[i] / cfg.bump_width) * (x[i] / cfg.bump_width));
        }
      } else {
        Eigen::MatrixXd K(nr, nr);
        for (int i = 0; i < nr; ++i) {
          for (int k = 0; k <= i; ++k) {
            K(i, k) = K(k, i) =
                k_vm(x[i], x[k], cfg.warp_steepness, cfg.disease_lengthscale, cfg.vm_h);
          }
        }
        fr = detail::gp_draw(K, rng);
      }
      Eigen::VectorXd f = Eigen::VectorXd::Zero(N);
      std::vector<char> support(N, 0);
      for (int i = 0; i < nr; ++i) {
        f[rows[i]] = fr[i];
        support[rows[i]] = 1;
      }
      add_component(std::move(f), support, cfg.disease_magnitude, "het(id)*gp_vm(diseaseAge)");
    }
  }

  // Response.
  Eigen::VectorXd y(N);
  Eigen::VectorXd trials, scaling;
  double sigma = 0.0;
  if (cfg.family == LikelihoodFamily::Gaussian) {
    double mean = signal.mean();
    double ss_c = (signal.array() - mean).square().sum();
    double p = cfg.target_p_noise;
    if (!(p > 0.0 && p < 1.0)) throw Error("simulate: target_p_noise must be in (0,1)");
    sigma = ss_c > 0.0 ? std::sqrt(p / (1.0 - p) * ss_c / N) : 1.0;
    for (int i = 0; i < N; ++i) y[i] = signal[i] + sigma * rng.normal();
  } else {
    scaling = Eigen::VectorXd::Constant(N, cfg.nb_intercept);
    for (int i = 0; i < N; ++i) {
      double mu = std::exp(cfg.nb_intercept + signal[i]);
      y[i] = static_cast<double>(rng.neg_binomial(mu, cfg.nb_dispersion));
    }
  }

  Eigen::MatrixXd components(static_cast<int>(comps.size()), N);
  for (std::size_t j = 0; j < comps.size(); ++j) {
    components.row(static_cast<int>(j)) = comps[j].transpose();
  }
  return SimResult{LongitudinalDataset(std::move(columns), "y", y, "id", trials, scaling, "age"),
                   std::move(relevant),
                   std::move(affected),
                   std::move(case_ids),
                   std::move(effect_times),
                   std::move(observed_times),
                   std::move(components),
                   std::move(component_names),
                   sigma};
}

}  // namespace lgp
