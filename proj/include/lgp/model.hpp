#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "lgp/dataset.hpp"
#include "lgp/formula.hpp"
#include "lgp/kernels.hpp"
#include "lgp/likelihoods.hpp"
#include "lgp/linalg.hpp"
#include "lgp/numerics.hpp"
#include "lgp/priors.hpp"
#include "lgp/rng.hpp"

namespace lgp {

struct ParamVector {
  KernelParams kernel;
  ObservationParams obs;
};

struct ParamSlot {
  enum class Target { Alpha, Ell, WarpA, Beta, DeltaT, EffectTime, Sigma, Dispersion };
  enum class Transform { Log, Logit, Identity, ScaledLogit };

  std::string name;
  Target target = Target::Alpha;
  Transform transform = Transform::Log;
  int comp = -1;  // 0-based component index for Alpha/Ell
  int slot = -1;  // case slot for Beta/DeltaT/EffectTime
  double lo = 0.0, hi = 1.0;  // ScaledLogit bounds
  PriorDensity prior;
};

// A model specification bound to a concrete dataset: resolves the parameter
// layout, case individuals, observation times, and the transform from the
// unconstrained sampling space to constrained parameters.
class BoundModel {
 public:
  BoundModel(ModelSpec spec, LongitudinalDataset ds, PriorSpec priors)
      : spec_(std::move(spec)), ds_(std::move(ds)), priors_(std::move(priors)) {
    priors_.validate();
    validate_spec(spec_, ds_);
    validate_response(spec_.likelihood, ds_.response(),
                      ds_.has_trials() ? &ds_.trials() : nullptr);

    bool any_het = false, any_unc = false, any_warped = false;
    for (const auto& c : spec_.components) {
      any_warped = any_warped || c.is_warped();
      any_het = any_het || c.kind == ComponentKind::HeterogeneousVarianceMasked;
      any_unc = any_unc || c.uncertain_effect_time;
      if (c.is_disease()) {
        if (disease_covariate_.empty()) {
          disease_covariate_ = c.continuous_covariate;
        } else if (disease_covariate_ != c.continuous_covariate) {
          throw Error("disease terms must share one disease-age covariate");
        }
      }
    }
    if (!disease_covariate_.empty()) {
      cases_ = case_assignment(ds_, disease_covariate_);
      if (cases_.num_cases() == 0) {
        throw Error("no case individuals: column '" + disease_covariate_ +
                    "' has no observed values");
      }
      derive_t_obs();
    }
    if (any_unc && priors_.effect_time_mode == EffectTimeMode::Direct) {
      for (int q = 0; q < cases_.num_cases(); ++q) {
        if (!std::isfinite(t_obs_[q])) {
          throw Error("direct effect-time priors require observation times; dataset has no "
                      "usable time column");
        }
      }
    }

    for (const auto& c : spec_.components) {
      kernels_.emplace_back(c, ds_, cases_.num_cases() > 0 ? &cases_ : nullptr);
    }

    // Layout: magnitudes, lengthscales, warp steepness, heterogeneity,
    // effect times, observation parameter.
    int J = static_cast<int>(spec_.components.size());
    for (int j = 0; j < J; ++j) {
      ParamSlot s;
      s.name = "alpha[" + std::to_string(j + 1) + "]";
      s.target = ParamSlot::Target::Alpha;
      s.transform = ParamSlot::Transform::Log;
      s.comp = j;
      s.prior = priors_.alpha;
      layout_.push_back(s);
    }
    for (int j = 0; j < J; ++j) {
      if (!spec_.components[j].has_continuous()) continue;
      ParamSlot s;
      s.name = "ell[" + std::to_string(j + 1) + "]";
      s.target = ParamSlot::Target::Ell;
      s.transform = ParamSlot::Transform::Log;
      s.comp = j;
      s.prior = priors_.lengthscale;
      layout_.push_back(s);
    }
    if (any_warped) {
      ParamSlot s;
      s.name = "warp_a";
      s.target = ParamSlot::Target::WarpA;
      s.transform = ParamSlot::Transform::Log;
      s.prior = priors_.warp;
      layout_.push_back(s);
    }
    if (any_het) {
      for (int q = 0; q < cases_.num_cases(); ++q) {
        ParamSlot s;
        s.name = "beta[" + case_label(q) + "]";
        s.target = ParamSlot::Target::Beta;
        s.transform = ParamSlot::Transform::Logit;
        s.slot = q;
        s.prior = PriorDensity{PriorFamily::Beta, priors_.beta_b1, priors_.beta_b2};
        layout_.push_back(s);
      }
    }
    if (any_unc) {
      for (int q = 0; q < cases_.num_cases(); ++q) {
        ParamSlot s;
        s.slot = q;
        if (priors_.effect_time_mode == EffectTimeMode::OnDelta) {
          s.name = "delta_t[" + case_label(q) + "]";
          s.target = ParamSlot::Target::DeltaT;
          s.transform = ParamSlot::Transform::Log;
          s.prior = priors_.effect_time;
        } else {
          s.name = "t_eff[" + case_label(q) + "]";
          s.target = ParamSlot::Target::EffectTime;
          if (priors_.effect_time.family == PriorFamily::Uniform) {
            s.transform = ParamSlot::Transform::ScaledLogit;
            s.lo = priors_.effect_time.a;
            s.hi = priors_.effect_time.b;
          } else {
            s.transform = ParamSlot::Transform::Identity;
          }
          s.prior = priors_.effect_time;
        }
        layout_.push_back(s);
      }
      has_unc_ = true;
    }
    if (uses_sigma(spec_.likelihood)) {
      ParamSlot s;
      s.name = "sigma";
      s.target = ParamSlot::Target::Sigma;
      s.transform = ParamSlot::Transform::Log;
      s.prior = priors_.sigma;
      layout_.push_back(s);
    } else if (uses_dispersion(spec_.likelihood)) {
      ParamSlot s;
      s.name = obs_param_name(spec_.likelihood);
      s.target = ParamSlot::Target::Dispersion;
      s.transform = ParamSlot::Transform::Log;
      s.prior = priors_.dispersion;
      layout_.push_back(s);
    }
    has_het_ = any_het;
  }

  const ModelSpec& spec() const { return spec_; }
  const LongitudinalDataset& data() const { return ds_; }
  const PriorSpec& priors() const { return priors_; }
  const std::vector<ParamSlot>& layout() const { return layout_; }
  int num_params() const { return static_cast<int>(layout_.size()); }
  int num_components() const { return static_cast<int>(spec_.components.size()); }
  int num_rows() const { return ds_.num_rows(); }
  const ComponentKernel& kernel(int j) const { return kernels_.at(j); }
  const CaseAssignment& cases() const { return cases_; }
  bool has_cases() const { return cases_.num_cases() > 0; }
  bool has_heterogeneity() const { return has_het_; }
  bool has_uncertain_effect_time() const { return has_unc_; }
  const std::string& disease_covariate() const { return disease_covariate_; }

  // Observation time of each case individual, in original time units (NaN
  // when the dataset lacks a usable time column).
  const Eigen::VectorXd& t_obs() const { return t_obs_; }

  std::string case_label(int slot) const {
    const auto& id = ds_.column(ds_.id_column());
    return id.levels[cases_.individuals[slot] - 1];
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    names.reserve(layout_.size());
    for (const auto& s : layout_) names.push_back(s.name);
    return names;
  }

  // Map an unconstrained vector to constrained parameters.
  ParamVector constrain(const Eigen::VectorXd& u) const {
    if (u.size() != num_params()) throw Error("constrain: wrong parameter count");
    ParamVector pv = empty_params();
    for (int i = 0; i < num_params(); ++i) {
      set_value(pv, layout_[i], constrained_value(layout_[i], u[i]));
    }
    return pv;
  }

  // Rebuild a ParamVector from a row of constrained values in layout order.
  ParamVector params_from_constrained(const Eigen::VectorXd& v) const {
    if (v.size() != num_params()) throw Error("params_from_constrained: wrong parameter count");
    ParamVector pv = empty_params();
    for (int i = 0; i < num_params(); ++i) set_value(pv, layout_[i], v[i]);
    return pv;
  }

  Eigen::VectorXd unconstrain(const ParamVector& pv) const {
    Eigen::VectorXd u(num_params());
    for (int i = 0; i < num_params(); ++i) {
      const ParamSlot& s = layout_[i];
      double v = get_value(pv, s);
      switch (s.transform) {
        case ParamSlot::Transform::Log:
          if (!(v > 0.0)) throw Error("unconstrain: '" + s.name + "' must be positive");
          u[i] = std::log(v);
          break;
        case ParamSlot::Transform::Logit:
          if (!(v > 0.0 && v < 1.0)) throw Error("unconstrain: '" + s.name + "' must be in (0,1)");
          u[i] = std::log(v / (1.0 - v));
          break;
        case ParamSlot::Transform::ScaledLogit: {
          double t = (v - s.lo) / (s.hi - s.lo);
          if (!(t > 0.0 && t < 1.0)) throw Error("unconstrain: '" + s.name + "' out of bounds");
          u[i] = std::log(t / (1.0 - t));
          break;
        }
        case ParamSlot::Transform::Identity:
          u[i] = v;
          break;
      }
    }
    return u;
  }

  // Log prior density of the constrained parameters plus the log Jacobian of
  // the transform, as a function of the unconstrained vector. Gradients are
  // accumulated into `grad` when given.
  double log_prior_jacobian(const Eigen::VectorXd& u, Eigen::VectorXd* grad = nullptr) const {
    double lp = 0.0;
    for (int i = 0; i < num_params(); ++i) {
      const ParamSlot& s = layout_[i];
      double v = constrained_value(s, u[i]);
      double pdf = prior_logpdf(s.prior, v);
      if (!std::isfinite(pdf)) return -std::numeric_limits<double>::infinity();
      lp += pdf;
      double dpdf = grad != nullptr ? prior_dlogpdf(s.prior, v) : 0.0;
      switch (s.transform) {
        case ParamSlot::Transform::Log:
          lp += u[i];
          if (grad) (*grad)[i] += dpdf * v + 1.0;
          break;
        case ParamSlot::Transform::Logit: {
          lp += std::log(v * (1.0 - v));
          if (grad) (*grad)[i] += dpdf * v * (1.0 - v) + (1.0 - 2.0 * v);
          break;
        }
        case ParamSlot::Transform::ScaledLogit: {
          double t = logistic(u[i]);
          double jac = (s.hi - s.lo) * t * (1.0 - t);
          lp += std::log(jac);
          if (grad) (*grad)[i] += dpdf * jac + (1.0 - 2.0 * t);
          break;
        }
        case ParamSlot::Transform::Identity:
          if (grad) (*grad)[i] += dpdf;
          break;
      }
    }
    return lp;
  }

  // Chain rule factor d(constrained)/d(unconstrained) for slot i at u_i.
  double dconstrained_du(int i, double ui) const {
    const ParamSlot& s = layout_[i];
    switch (s.transform) {
      case ParamSlot::Transform::Log:
        return std::exp(ui);
      case ParamSlot::Transform::Logit: {
        double t = logistic(ui);
        return t * (1.0 - t);
      }
      case ParamSlot::Transform::ScaledLogit: {
        double t = logistic(ui);
        return (s.hi - s.lo) * t * (1.0 - t);
      }
      case ParamSlot::Transform::Identity:
        return 1.0;
    }
    return 1.0;
  }

  // Derivative of the kernel-facing value (delta_t) with respect to the
  // constrained slot value: -1 for direct effect times, +1 otherwise.
  double kernel_chain_sign(const ParamSlot& s) const {
    return s.target == ParamSlot::Target::EffectTime ? -1.0 : 1.0;
  }

  double constrained_value(const ParamSlot& s, double ui) const {
    switch (s.transform) {
      case ParamSlot::Transform::Log:
        return std::exp(ui);
      case ParamSlot::Transform::Logit:
        return logistic(ui);
      case ParamSlot::Transform::ScaledLogit:
        return s.lo + (s.hi - s.lo) * logistic(ui);
      case ParamSlot::Transform::Identity:
        return ui;
    }
    return ui;
  }

  // Constrained slot value from a parameter vector (inverse of set_value).
  double get_value(const ParamVector& pv, const ParamSlot& s) const {
    switch (s.target) {
      case ParamSlot::Target::Alpha: return pv.kernel.alpha[s.comp];
      case ParamSlot::Target::Ell: return pv.kernel.ell[s.comp];
      case ParamSlot::Target::WarpA: return pv.kernel.warp_a;
      case ParamSlot::Target::Beta: return pv.kernel.beta[s.slot];
      case ParamSlot::Target::DeltaT: return pv.kernel.delta_t[s.slot];
      case ParamSlot::Target::EffectTime: return t_obs_[s.slot] - pv.kernel.delta_t[s.slot];
      case ParamSlot::Target::Sigma: return pv.obs.sigma;
      case ParamSlot::Target::Dispersion: return pv.obs.dispersion;
    }
    throw Error("unreachable");
  }

  void set_value(ParamVector& pv, const ParamSlot& s, double v) const {
    switch (s.target) {
      case ParamSlot::Target::Alpha: pv.kernel.alpha[s.comp] = v; break;
      case ParamSlot::Target::Ell: pv.kernel.ell[s.comp] = v; break;
      case ParamSlot::Target::WarpA: pv.kernel.warp_a = v; break;
      case ParamSlot::Target::Beta: pv.kernel.beta[s.slot] = v; break;
      case ParamSlot::Target::DeltaT: pv.kernel.delta_t[s.slot] = v; break;
      case ParamSlot::Target::EffectTime: pv.kernel.delta_t[s.slot] = t_obs_[s.slot] - v; break;
      case ParamSlot::Target::Sigma: pv.obs.sigma = v; break;
      case ParamSlot::Target::Dispersion: pv.obs.dispersion = v; break;
    }
  }

  ParamVector empty_params() const {
    ParamVector pv;
    int J = num_components();
    pv.kernel.alpha = Eigen::VectorXd::Constant(J, std::numeric_limits<double>::quiet_NaN());
    pv.kernel.ell = Eigen::VectorXd::Constant(J, std::numeric_limits<double>::quiet_NaN());
    pv.kernel.warp_a = 1.0;
    pv.kernel.vm_h = priors_.vm_h;
    int q = cases_.num_cases();
    pv.kernel.beta = Eigen::VectorXd::Constant(has_het_ ? q : 0, 1.0);
    pv.kernel.delta_t = Eigen::VectorXd::Constant(has_unc_ ? q : 0, 0.0);
    return pv;
  }

  // Draw constrained parameters from the prior.
  ParamVector sample_prior(Rng& rng) const {
    ParamVector pv = empty_params();
    for (const auto& s : layout_) {
      set_value(pv, s, prior_sample(s.prior, rng));
    }
    return pv;
  }

  // Uniform(-2, 2) start on the unconstrained scale.
  Eigen::VectorXd random_init(Rng& rng) const {
    Eigen::VectorXd u(num_params());
    for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(-2.0, 2.0);
    return u;
  }

  // Scaling factors on the link scale (zeros when none were supplied).
  Eigen::VectorXd offsets() const { return ds_.scaling_or_zero(); }

  const Eigen::VectorXd* trials_ptr() const {
    return ds_.has_trials() ? &ds_.trials() : nullptr;
  }

 private:
  // Observation time per case individual, recovered from the time column:
  // the disease-age covariate stores time since the event, so the event time
  // is time minus disease age on any row where both are observed.
  void derive_t_obs() {
    int q = cases_.num_cases();
    t_obs_ = Eigen::VectorXd::Constant(q, std::numeric_limits<double>::quiet_NaN());
    if (ds_.time_column().empty() || !ds_.has_column(ds_.time_column())) return;
    const CovariateColumn& time = ds_.column(ds_.time_column());
    const CovariateColumn& dis = ds_.column(disease_covariate_);
    if (time.kind != CovariateKind::Continuous) return;
    for (int i = 0; i < ds_.num_rows(); ++i) {
      int slot = cases_.row_slot[i];
      if (slot < 0 || dis.missing[i] || time.missing[i]) continue;
      double t_orig = time.center + time.scale * time.values[i];
      double d_orig = dis.center + dis.scale * dis.values[i];
      double t0 = t_orig - d_orig;
      if (std::isnan(t_obs_[slot])) {
        t_obs_[slot] = t0;
      } else if (std::fabs(t_obs_[slot] - t0) > 1e-6 * std::max(1.0, std::fabs(t0))) {
        throw Error("inconsistent observation times for individual '" + case_label(slot) + "'");
      }
    }
  }

  ModelSpec spec_;
  LongitudinalDataset ds_;
  PriorSpec priors_;
  std::vector<ParamSlot> layout_;
  std::vector<ComponentKernel> kernels_;
  CaseAssignment cases_;
  Eigen::VectorXd t_obs_;
  std::string disease_covariate_;
  bool has_het_ = false;
  bool has_unc_ = false;
};

// Standard covariate preparation for fitting: z-score the continuous
// covariates a model uses, except maskable ones, which are only divided by
// their standard deviation so that zero keeps marking the event.
inline LongitudinalDataset normalize_for_model(const LongitudinalDataset& ds,
                                               const ModelSpec& spec) {
  LongitudinalDataset out = ds;
  std::vector<std::string> done;
  for (const auto& comp : spec.components) {
    if (!comp.has_continuous()) continue;
    const std::string& name = comp.continuous_covariate;
    if (std::find(done.begin(), done.end(), name) != done.end()) continue;
    done.push_back(name);
    if (out.column(name).maskable) {
      out = out.scale_continuous(name);
    } else {
      out = out.normalize_continuous(name);
    }
  }
  return out;
}

// Prior predictive draws on the response scale, one row per draw. Component
// functions are drawn from their GP priors with a small relative jitter.
inline Eigen::MatrixXd sample_prior_predictive(const BoundModel& m, int draws,
                                               std::uint64_t seed) {
  if (draws < 1) throw Error("sample_prior_predictive: draws must be positive");
  int n = m.num_rows();
  Eigen::MatrixXd out(draws, n);
  Rng rng(mix_seed(seed, 0x9d2c5680));
  Eigen::VectorXd c = m.offsets();
  const Eigen::VectorXd* trials = m.trials_ptr();
  Eigen::MatrixXd K;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int s = 0; s < draws; ++s) {
    ParamVector pv = m.sample_prior(rng);
    Eigen::VectorXd h = c;
    for (int j = 0; j < m.num_components(); ++j) {
      m.kernel(j).matrix(pv.kernel, K);
      K.diagonal().array() += 1e-8 * pv.kernel.alpha[j] * pv.kernel.alpha[j] + 1e-12;
      if (!safe_llt(K, llt)) throw Error("prior predictive: covariance not factorizable");
      Eigen::VectorXd z(n);
      for (int i = 0; i < n; ++i) z[i] = rng.normal();
      h += llt.matrixL() * z;
    }
    for (int i = 0; i < n; ++i) {
      switch (m.spec().likelihood) {
        case LikelihoodFamily::Gaussian:
          out(s, i) = h[i] + pv.obs.sigma * rng.normal();
          break;
        case LikelihoodFamily::Poisson:
          out(s, i) = static_cast<double>(rng.poisson(std::exp(h[i])));
          break;
        case LikelihoodFamily::NegBinomial:
          out(s, i) = static_cast<double>(rng.neg_binomial(std::exp(h[i]), pv.obs.dispersion));
          break;
        case LikelihoodFamily::Binomial:
          out(s, i) = static_cast<double>(
              rng.binomial(static_cast<long>((*trials)[i]), logistic(h[i])));
          break;
        case LikelihoodFamily::BetaBinomial:
          out(s, i) = static_cast<double>(rng.beta_binomial(
              static_cast<long>((*trials)[i]), logistic(h[i]), pv.obs.dispersion));
          break;
      }
    }
  }
  return out;
}

}  // namespace lgp
