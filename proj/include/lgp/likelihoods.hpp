#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "lgp/dataset.hpp"
#include "lgp/formula.hpp"
#include "lgp/numerics.hpp"

namespace lgp {

// Observation-model parameters: sigma for gaussian, phi for negative
// binomial, gamma for beta-binomial. Unused entries stay NaN.
struct ObservationParams {
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double dispersion = std::numeric_limits<double>::quiet_NaN();
};

inline bool uses_sigma(LikelihoodFamily f) { return f == LikelihoodFamily::Gaussian; }

inline bool uses_dispersion(LikelihoodFamily f) {
  return f == LikelihoodFamily::NegBinomial || f == LikelihoodFamily::BetaBinomial;
}

inline bool uses_trials(LikelihoodFamily f) {
  return f == LikelihoodFamily::Binomial || f == LikelihoodFamily::BetaBinomial;
}

inline bool is_count_family(LikelihoodFamily f) { return f != LikelihoodFamily::Gaussian; }

inline const char* obs_param_name(LikelihoodFamily f) {
  switch (f) {
    case LikelihoodFamily::Gaussian: return "sigma";
    case LikelihoodFamily::NegBinomial: return "phi";
    case LikelihoodFamily::BetaBinomial: return "gamma";
    default: return "";
  }
}

// Inverse link: latent value h to the mean scale (gaussian: identity,
// counts: exp, binomial families: success probability).
inline double inv_link(LikelihoodFamily f, double h) {
  switch (f) {
    case LikelihoodFamily::Gaussian: return h;
    case LikelihoodFamily::Poisson:
    case LikelihoodFamily::NegBinomial: return std::exp(h);
    case LikelihoodFamily::Binomial:
    case LikelihoodFamily::BetaBinomial: return logistic(h);
  }
  throw Error("unreachable");
}

inline void validate_response(LikelihoodFamily f, const Eigen::VectorXd& y,
                              const Eigen::VectorXd* trials) {
  if (f == LikelihoodFamily::Gaussian) return;
  for (int i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) throw Error("count response must be non-negative");
    if (y[i] != std::floor(y[i])) throw Error("count response must be integer-valued");
  }
  if (uses_trials(f)) {
    if (trials == nullptr || trials->size() != y.size()) {
      throw Error("binomial likelihoods require a trials column");
    }
    for (int i = 0; i < y.size(); ++i) {
      if (y[i] > (*trials)[i]) throw Error("response exceeds trials");
    }
  }
}

// Total log likelihood of the observations given the latent function value
// h_i (scaling factors already added on the link scale).
inline double log_likelihood(LikelihoodFamily f, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& h, const ObservationParams& obs,
                             const Eigen::VectorXd* trials = nullptr) {
  if (y.size() != h.size()) throw Error("log_likelihood: size mismatch");
  int n = static_cast<int>(y.size());
  double lp = 0.0;
  switch (f) {
    case LikelihoodFamily::Gaussian: {
      double sigma = obs.sigma;
      if (!(sigma > 0.0)) throw Error("gaussian likelihood requires sigma > 0");
      for (int i = 0; i < n; ++i) {
        double z = (y[i] - h[i]) / sigma;
        lp += -0.5 * z * z;
      }
      lp += -n * (std::log(sigma) + 0.5 * klog2pi);
      break;
    }
    case LikelihoodFamily::Poisson: {
      for (int i = 0; i < n; ++i) {
        lp += y[i] * h[i] - std::exp(h[i]) - std::lgamma(y[i] + 1.0);
      }
      break;
    }
    case LikelihoodFamily::NegBinomial: {
      double phi = obs.dispersion;
      if (!(phi > 0.0)) throw Error("nb likelihood requires phi > 0");
      for (int i = 0; i < n; ++i) {
        double mu = std::exp(h[i]);
        lp += std::lgamma(y[i] + phi) - std::lgamma(phi) - std::lgamma(y[i] + 1.0) +
              phi * std::log(phi / (phi + mu)) + y[i] * (h[i] - std::log(phi + mu));
      }
      break;
    }
    case LikelihoodFamily::Binomial: {
      if (trials == nullptr) throw Error("binomial likelihood requires trials");
      for (int i = 0; i < n; ++i) {
        double eta = (*trials)[i];
        lp += std::lgamma(eta + 1.0) - std::lgamma(y[i] + 1.0) - std::lgamma(eta - y[i] + 1.0) +
              y[i] * h[i] - eta * log1p_exp(h[i]);
      }
      break;
    }
    case LikelihoodFamily::BetaBinomial: {
      if (trials == nullptr) throw Error("bb likelihood requires trials");
      double g = obs.dispersion;
      if (!(g > 0.0)) throw Error("bb likelihood requires gamma > 0");
      for (int i = 0; i < n; ++i) {
        double eta = (*trials)[i];
        double p = logistic(h[i]);
        double a = p * g;
        double b = (1.0 - p) * g;
        lp += std::lgamma(eta + 1.0) - std::lgamma(y[i] + 1.0) - std::lgamma(eta - y[i] + 1.0) +
              std::lgamma(g) - std::lgamma(a) - std::lgamma(b) + std::lgamma(y[i] + a) +
              std::lgamma(eta - y[i] + b) - std::lgamma(eta + g);
      }
      break;
    }
  }
  return lp;
}

// Gradient of the log likelihood with respect to the latent value h_i.
inline void dlog_likelihood_dh(LikelihoodFamily f, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& h, const ObservationParams& obs,
                               Eigen::VectorXd& g, const Eigen::VectorXd* trials = nullptr) {
  int n = static_cast<int>(y.size());
  g.resize(n);
  switch (f) {
    case LikelihoodFamily::Gaussian:
      g = (y - h) / (obs.sigma * obs.sigma);
      break;
    case LikelihoodFamily::Poisson:
      for (int i = 0; i < n; ++i) g[i] = y[i] - std::exp(h[i]);
      break;
    case LikelihoodFamily::NegBinomial: {
      double phi = obs.dispersion;
      for (int i = 0; i < n; ++i) {
        double mu = std::exp(h[i]);
        g[i] = y[i] - (y[i] + phi) * mu / (phi + mu);
      }
      break;
    }
    case LikelihoodFamily::Binomial:
      for (int i = 0; i < n; ++i) g[i] = y[i] - (*trials)[i] * logistic(h[i]);
      break;
    case LikelihoodFamily::BetaBinomial: {
      double gam = obs.dispersion;
      for (int i = 0; i < n; ++i) {
        double eta = (*trials)[i];
        double p = logistic(h[i]);
        double a = p * gam;
        double b = (1.0 - p) * gam;
        g[i] = gam * p * (1.0 - p) *
               (digamma(y[i] + a) - digamma(a) - digamma(eta - y[i] + b) + digamma(b));
      }
      break;
    }
  }
}

// Derivative of the log likelihood with respect to the observation parameter
// (sigma, phi or gamma), on the constrained scale. Zero for families without
// one.
inline double dlog_likelihood_dobs(LikelihoodFamily f, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& h, const ObservationParams& obs,
                                   const Eigen::VectorXd* trials = nullptr) {
  int n = static_cast<int>(y.size());
  double g = 0.0;
  switch (f) {
    case LikelihoodFamily::Gaussian: {
      double sigma = obs.sigma;
      for (int i = 0; i < n; ++i) {
        double r = y[i] - h[i];
        g += r * r / (sigma * sigma * sigma);
      }
      g -= n / sigma;
      break;
    }
    case LikelihoodFamily::Poisson:
      break;
    case LikelihoodFamily::NegBinomial: {
      double phi = obs.dispersion;
      for (int i = 0; i < n; ++i) {
        double mu = std::exp(h[i]);
        g += digamma(y[i] + phi) - digamma(phi) + std::log(phi / (phi + mu)) + 1.0 -
             (y[i] + phi) / (phi + mu);
      }
      break;
    }
    case LikelihoodFamily::Binomial:
      break;
    case LikelihoodFamily::BetaBinomial: {
      double gam = obs.dispersion;
      for (int i = 0; i < n; ++i) {
        double eta = (*trials)[i];
        double p = logistic(h[i]);
        double a = p * gam;
        double b = (1.0 - p) * gam;
        g += digamma(gam) - digamma(eta + gam) + p * (digamma(y[i] + a) - digamma(a)) +
             (1.0 - p) * (digamma(eta - y[i] + b) - digamma(b));
      }
      break;
    }
  }
  return g;
}

// log(1 + y) transform used by the simulation-study comparison arm that fits
// a gaussian model to transformed counts.
inline Eigen::VectorXd transform_log1p(const Eigen::VectorXd& y) {
  Eigen::VectorXd out(y.size());
  for (int i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) throw Error("transform_log1p: negative count");
    out[i] = std::log1p(y[i]);
  }
  return out;
}

}  // namespace lgp
