#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lgp/inference.hpp"
#include "lgp/model.hpp"

namespace lgp {

// Variance decomposition of one fit: averaged component relevances, the
// averaged noise proportion, and the minimal component subset reaching the
// selection threshold (a percentage).
struct RelevanceReport {
  std::vector<std::string> component_terms;
  Eigen::VectorXd rel;
  double p_noise = 0.0;
  Eigen::MatrixXd per_draw;  // S x (J+1); last column is the noise proportion
  std::vector<int> selected;
  double threshold = 95.0;
  std::vector<std::string> covariates;
  Eigen::VectorXd covariate_rel;
  std::vector<std::string> selected_covariates;
};

// Proportion of variation attributed to noise in one draw: the residual sum
// of squares against the predictions, normalized by explained plus residual.
// Exactly matched data gives 0, constant predictions of varying data give 1.
inline double noise_proportion(const Eigen::VectorXd& y, const Eigen::VectorXd& ypred) {
  if (y.size() != ypred.size()) throw Error("noise_proportion: length mismatch");
  double mean = ypred.mean();
  double ess = (ypred.array() - mean).square().sum();
  double rss = (ypred - y).squaredNorm();
  if (ess + rss <= 0.0) return 0.0;
  return rss / (ess + rss);
}

// Greedy minimal-subset selection: add components by descending relevance
// (ties to the lower index) until noise plus selected relevance reaches
// threshold/100. Returns 0-based component indices in ascending order.
inline std::vector<int> select_components(const Eigen::VectorXd& rel, double p_noise,
                                          double threshold) {
  if (!(threshold > 0.0 && threshold <= 100.0)) {
    throw Error("selection threshold must be in (0, 100]");
  }
  int J = static_cast<int>(rel.size());
  std::vector<int> order(J);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rel[a] > rel[b]; });
  double target = threshold / 100.0;
  double cum = p_noise;
  std::vector<int> selected;
  for (int j : order) {
    if (cum >= target) break;
    selected.push_back(j);
    cum += rel[j];
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

// The covariate a component's relevance is attributed to: the categorical
// covariate for offset and interaction terms, the continuous covariate
// otherwise (heterogeneous terms report their masked covariate).
inline std::string primary_covariate(const ComponentSpec& cs) {
  switch (cs.kind) {
    case ComponentKind::CategoricalOffset:
    case ComponentKind::CategoricalInteraction:
      return cs.categorical_covariate;
    default:
      return cs.continuous_covariate;
  }
}

namespace detail {

inline void data_scale_prediction(LikelihoodFamily fam, const Eigen::VectorXd& h,
                                  const Eigen::VectorXd* trials, Eigen::VectorXd& ypred) {
  switch (fam) {
    case LikelihoodFamily::Gaussian:
      ypred = h;
      break;
    case LikelihoodFamily::Poisson:
    case LikelihoodFamily::NegBinomial:
      ypred = h.array().exp();
      break;
    case LikelihoodFamily::Binomial:
    case LikelihoodFamily::BetaBinomial:
      ypred.resize(h.size());
      for (int i = 0; i < h.size(); ++i) ypred[i] = logistic(h[i]);
      (void)trials;
      break;
  }
}

}  // namespace detail

// Decompose a fit into per-component relevances averaged over posterior
// draws. Gaussian marginal fits use the analytic component posterior means
// per draw; latent fits reuse the stored component functions. `max_draws`
// (0 = all) thins the draws evenly before averaging.
inline RelevanceReport component_relevances(const BoundModel& m, const PosteriorFit& fit,
                                            double threshold = 95.0,
                                            bool allow_unconverged = false,
                                            int max_draws = 0) {
  if (!fit.diagnostics.converged && !allow_unconverged) {
    throw Error("fit has not converged; rerun with more iterations or override explicitly");
  }
  int J = m.num_components();
  int n = m.num_rows();
  int S = fit.total_draws();
  if (S < 1) throw Error("component_relevances: fit has no draws");
  if (fit.is_latent() && fit.latent.cols() != J * n) {
    throw Error("component_relevances: fit does not match model layout");
  }

  std::vector<int> rows;
  if (max_draws > 0 && S > max_draws) {
    for (int k = 0; k < max_draws; ++k) rows.push_back(k * S / max_draws);
  } else {
    rows.resize(S);
    std::iota(rows.begin(), rows.end(), 0);
  }

  LikelihoodFamily fam = m.spec().likelihood;
  const Eigen::VectorXd& y = m.data().response();
  const Eigen::VectorXd* trials = m.trials_ptr();
  Eigen::VectorXd target = y;
  if (fam == LikelihoodFamily::Binomial || fam == LikelihoodFamily::BetaBinomial) {
    target = y.cwiseQuotient(*trials);
  }

  RelevanceReport rep;
  rep.threshold = threshold;
  for (int j = 0; j < J; ++j) rep.component_terms.push_back(m.spec().components[j].term());
  rep.per_draw.resize(static_cast<int>(rows.size()), J + 1);

  Eigen::VectorXd ss(J), ypred(n), h(n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    int s = rows[k];
    if (fit.is_latent()) {
      h = m.offsets();
      for (int j = 0; j < J; ++j) {
        auto fj = fit.latent.row(s).segment(j * n, n);
        ss[j] = fj.squaredNorm();
        h += fj.transpose();
      }
      detail::data_scale_prediction(fam, h, trials, ypred);
    } else {
      ParamVector pv = m.params_from_constrained(fit.draws.row(s));
      ComponentPosterior cp = component_posterior_gaussian(m, pv, nullptr, false);
      for (int j = 0; j < J; ++j) ss[j] = cp.mean.row(j).squaredNorm();
      ypred = cp.total;
    }
    double pn = noise_proportion(target, ypred);
    double total_ss = ss.sum();
    if (total_ss > 0.0) {
      rep.per_draw.row(k).head(J) = ((1.0 - pn) / total_ss * ss).transpose();
    } else {
      rep.per_draw.row(k).head(J).setZero();
    }
    rep.per_draw(k, J) = pn;
  }

  rep.rel = rep.per_draw.leftCols(J).colwise().mean().transpose();
  rep.p_noise = rep.per_draw.col(J).mean();
  rep.selected = select_components(rep.rel, rep.p_noise, threshold);

  // Covariate-level table in order of first appearance.
  std::vector<double> cov_rel;
  for (int j = 0; j < J; ++j) {
    std::string cov = primary_covariate(m.spec().components[j]);
    auto it = std::find(rep.covariates.begin(), rep.covariates.end(), cov);
    if (it == rep.covariates.end()) {
      rep.covariates.push_back(cov);
      cov_rel.push_back(rep.rel[j]);
    } else {
      cov_rel[static_cast<std::size_t>(it - rep.covariates.begin())] += rep.rel[j];
    }
  }
  rep.covariate_rel = Eigen::Map<Eigen::VectorXd>(cov_rel.data(), static_cast<int>(cov_rel.size()));
  for (int j : rep.selected) {
    std::string cov = primary_covariate(m.spec().components[j]);
    if (std::find(rep.selected_covariates.begin(), rep.selected_covariates.end(), cov) ==
        rep.selected_covariates.end()) {
      rep.selected_covariates.push_back(cov);
    }
  }
  return rep;
}

}  // namespace lgp
