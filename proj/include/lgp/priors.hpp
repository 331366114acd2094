#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "lgp/dataset.hpp"
#include "lgp/formula.hpp"
#include "lgp/numerics.hpp"
#include "lgp/rng.hpp"

namespace lgp {

enum class PriorFamily {
  HalfStudentT,  // (nu, scale), x > 0
  LogNormal,     // (mu, sigma), x > 0
  Exponential,   // (rate, -), x > 0
  Beta,          // (b1, b2), x in (0, 1)
  Uniform,       // (lo, hi)
  Normal,        // (mu, sigma)
  InvGammaSq,    // (shape, scale) on x^2; density expressed for x > 0
};

struct PriorDensity {
  PriorFamily family = PriorFamily::LogNormal;
  double a = 0.0;
  double b = 1.0;
};

inline std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::HalfStudentT: return "half_student_t";
    case PriorFamily::LogNormal: return "lognormal";
    case PriorFamily::Exponential: return "exponential";
    case PriorFamily::Beta: return "beta";
    case PriorFamily::Uniform: return "uniform";
    case PriorFamily::Normal: return "normal";
    case PriorFamily::InvGammaSq: return "inv_gamma_sq";
  }
  throw Error("unreachable");
}

inline PriorFamily prior_family_from_string(const std::string& s) {
  if (s == "half_student_t") return PriorFamily::HalfStudentT;
  if (s == "lognormal") return PriorFamily::LogNormal;
  if (s == "exponential") return PriorFamily::Exponential;
  if (s == "beta") return PriorFamily::Beta;
  if (s == "uniform") return PriorFamily::Uniform;
  if (s == "normal") return PriorFamily::Normal;
  if (s == "inv_gamma_sq") return PriorFamily::InvGammaSq;
  throw Error("unknown prior family '" + s + "'");
}

// Log density of a prior at a point of its support. Out-of-support points
// return -inf rather than throwing, so samplers can reject them.
inline double prior_logpdf(const PriorDensity& d, double x) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  switch (d.family) {
    case PriorFamily::HalfStudentT: {
      if (x < 0.0) return neg_inf;
      double nu = d.a, s = d.b;
      return std::log(2.0) + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
             0.5 * std::log(nu * M_PI) - std::log(s) -
             0.5 * (nu + 1.0) * std::log1p(x * x / (nu * s * s));
    }
    case PriorFamily::LogNormal: {
      if (x <= 0.0) return neg_inf;
      double z = (std::log(x) - d.a) / d.b;
      return -std::log(x) - std::log(d.b) - 0.5 * klog2pi - 0.5 * z * z;
    }
    case PriorFamily::Exponential:
      if (x < 0.0) return neg_inf;
      return std::log(d.a) - d.a * x;
    case PriorFamily::Beta:
      if (x <= 0.0 || x >= 1.0) return neg_inf;
      return std::lgamma(d.a + d.b) - std::lgamma(d.a) - std::lgamma(d.b) +
             (d.a - 1.0) * std::log(x) + (d.b - 1.0) * std::log1p(-x);
    case PriorFamily::Uniform:
      if (x < d.a || x > d.b) return neg_inf;
      return -std::log(d.b - d.a);
    case PriorFamily::Normal: {
      double z = (x - d.a) / d.b;
      return -0.5 * z * z - std::log(d.b) - 0.5 * klog2pi;
    }
    case PriorFamily::InvGammaSq: {
      if (x <= 0.0) return neg_inf;
      return d.a * std::log(d.b) - std::lgamma(d.a) - (2.0 * d.a + 1.0) * std::log(x) -
             d.b / (x * x) + std::log(2.0);
    }
  }
  throw Error("unreachable");
}

// Derivative of prior_logpdf with respect to x, on the interior of the
// support.
inline double prior_dlogpdf(const PriorDensity& d, double x) {
  switch (d.family) {
    case PriorFamily::HalfStudentT:
      return -(d.a + 1.0) * x / (d.a * d.b * d.b + x * x);
    case PriorFamily::LogNormal:
      return (-1.0 - (std::log(x) - d.a) / (d.b * d.b)) / x;
    case PriorFamily::Exponential:
      return -d.a;
    case PriorFamily::Beta:
      return (d.a - 1.0) / x - (d.b - 1.0) / (1.0 - x);
    case PriorFamily::Uniform:
      return 0.0;
    case PriorFamily::Normal:
      return -(x - d.a) / (d.b * d.b);
    case PriorFamily::InvGammaSq:
      return -(2.0 * d.a + 1.0) / x + 2.0 * d.b / (x * x * x);
  }
  throw Error("unreachable");
}

inline double prior_sample(const PriorDensity& d, Rng& rng) {
  switch (d.family) {
    case PriorFamily::HalfStudentT:
      return std::fabs(d.b * rng.student_t(d.a));
    case PriorFamily::LogNormal:
      return std::exp(d.a + d.b * rng.normal());
    case PriorFamily::Exponential:
      return rng.exponential(d.a);
    case PriorFamily::Beta:
      return rng.beta(d.a, d.b);
    case PriorFamily::Uniform:
      return rng.uniform(d.a, d.b);
    case PriorFamily::Normal:
      return rng.normal(d.a, d.b);
    case PriorFamily::InvGammaSq:
      return std::sqrt(1.0 / rng.gamma(d.a, 1.0 / d.b));
  }
  throw Error("unreachable");
}

inline void validate_prior(const PriorDensity& d, const std::string& what) {
  auto positive = [&](double v, const char* which) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error("prior for " + what + ": " + which + " must be positive and finite");
    }
  };
  switch (d.family) {
    case PriorFamily::HalfStudentT:
      positive(d.a, "nu");
      positive(d.b, "scale");
      break;
    case PriorFamily::LogNormal:
    case PriorFamily::Normal:
      if (!std::isfinite(d.a)) throw Error("prior for " + what + ": location must be finite");
      positive(d.b, "scale");
      break;
    case PriorFamily::Exponential:
      positive(d.a, "rate");
      break;
    case PriorFamily::Beta:
      positive(d.a, "shape");
      positive(d.b, "shape");
      break;
    case PriorFamily::Uniform:
      if (!(d.a < d.b)) throw Error("prior for " + what + ": need lo < hi");
      break;
    case PriorFamily::InvGammaSq:
      positive(d.a, "shape");
      positive(d.b, "scale");
      break;
  }
}

enum class EffectTimeMode { OnDelta, Direct };

// Prior configuration for a model. Magnitudes, lengthscales and observation
// parameters get weakly informative defaults on standardized data. The warp
// steepness default is set from the disease-age column so that, in original
// time units, the warp transition window spans roughly three years around
// the event.
struct PriorSpec {
  PriorDensity alpha{PriorFamily::HalfStudentT, 20.0, 1.0};
  PriorDensity lengthscale{PriorFamily::LogNormal, 0.0, 1.0};
  PriorDensity warp{PriorFamily::LogNormal, std::log(2.0 * std::log(39.0) / 36.0), 0.3};
  PriorDensity sigma{PriorFamily::HalfStudentT, 4.0, 1.0};
  PriorDensity dispersion{PriorFamily::LogNormal, 1.0, 1.0};
  double beta_b1 = 0.2;
  double beta_b2 = 0.2;
  EffectTimeMode effect_time_mode = EffectTimeMode::OnDelta;
  // OnDelta: density of the backward shift delta_t = t_obs - t_eff >= 0.
  // Direct: density of t_eff itself (uniform or normal).
  PriorDensity effect_time{PriorFamily::Exponential, 0.05, 0.0};
  double vm_h = 0.025;

  void validate() const {
    validate_prior(alpha, "alpha");
    validate_prior(lengthscale, "lengthscale");
    validate_prior(warp, "warp steepness");
    validate_prior(sigma, "sigma");
    validate_prior(dispersion, "dispersion");
    if (!(beta_b1 > 0.0) || !(beta_b2 > 0.0)) {
      throw Error("prior for beta: shapes must be positive");
    }
    validate_prior(effect_time, "effect time");
    if (effect_time_mode == EffectTimeMode::OnDelta &&
        effect_time.family != PriorFamily::Exponential &&
        effect_time.family != PriorFamily::LogNormal) {
      throw Error("effect-time prior on delta_t must be exponential or lognormal");
    }
    if (effect_time_mode == EffectTimeMode::Direct &&
        effect_time.family != PriorFamily::Uniform && effect_time.family != PriorFamily::Normal) {
      throw Error("direct effect-time prior must be uniform or normal");
    }
    if (!(vm_h > 0.0 && vm_h < 0.5)) throw Error("vm_h must lie in (0, 0.5)");
  }
};

// Defaults adapted to a dataset: the warp prior location is chosen so the
// median steepness, expressed in the (possibly rescaled) units of the first
// warped covariate, matches the fixed default used for disease ages measured
// in months. The effect-time shift prior gets the same treatment, so its
// mean stays at 20 original time units regardless of rescaling.
inline PriorSpec default_priors(const LongitudinalDataset& ds, const ModelSpec& spec) {
  PriorSpec out;
  for (const auto& c : spec.components) {
    if (c.is_warped()) {
      double s = ds.column(c.continuous_covariate).scale;
      out.warp.a = std::log(2.0 * std::log(39.0) / 36.0 * s);
      break;
    }
  }
  for (const auto& c : spec.components) {
    if (c.uncertain_effect_time) {
      double s = ds.column(c.continuous_covariate).scale;
      out.effect_time.a *= s;
      break;
    }
  }
  return out;
}

}  // namespace lgp
