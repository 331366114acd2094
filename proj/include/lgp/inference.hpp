#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "lgp/diagnostics.hpp"
#include "lgp/linalg.hpp"
#include "lgp/model.hpp"
#include "lgp/nuts.hpp"

namespace lgp {

struct SamplerConfig {
  int chains = 4;
  int iters = 1000;
  int warmup = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  int max_treedepth = 10;
  double target_accept = 0.8;
  bool prior_only = false;
  bool force_latent = false;
  double rhat_max = 1.05;
  double ess_min_per_chain = 100.0;
  double max_divergence_frac = 0.10;
};

struct ParamDiagnostic {
  std::string name;
  double rhat = std::numeric_limits<double>::quiet_NaN();
  double ess_bulk = std::numeric_limits<double>::quiet_NaN();
  double ess_tail = std::numeric_limits<double>::quiet_NaN();
};

struct FitDiagnostics {
  std::vector<ParamDiagnostic> params;
  int divergences = 0;
  double divergence_rate = 0.0;
  bool converged = true;
  std::vector<std::string> warnings;
};

// Posterior sample from one model fit. Draws are stored on the constrained
// scale, all chains stacked in order. For latent-path fits, `latent` holds
// the per-draw component functions f^(j) flattened as J blocks of N.
struct PosteriorFit {
  std::string method;  // "marginal" or "latent"
  std::vector<std::string> param_names;
  Eigen::MatrixXd draws;
  Eigen::MatrixXd latent;
  Eigen::VectorXd logp;
  std::vector<char> divergent;
  int chains = 0;
  int iters = 0;
  int warmup = 0;
  std::uint64_t seed = 0;
  std::vector<double> stepsizes;
  std::vector<double> accept_means;
  FitDiagnostics diagnostics;
  SamplerConfig config;

  int total_draws() const { return static_cast<int>(draws.rows()); }
  bool is_latent() const { return method == "latent"; }
};

namespace detail {

inline bool log_scale_overflow(const BoundModel& m, const Eigen::VectorXd& u) {
  for (int i = 0; i < m.num_params(); ++i) {
    if (m.layout()[i].transform == ParamSlot::Transform::Log && std::fabs(u[i]) > 50.0) {
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Log marginal likelihood of a gaussian model: log N(y | c, sum_j K_j +
// sigma^2 I). Returns -inf when the covariance cannot be factorized.
inline double log_marginal_gaussian(const BoundModel& m, const ParamVector& pv) {
  if (m.spec().likelihood != LikelihoodFamily::Gaussian) {
    throw Error("log_marginal_gaussian requires a gaussian likelihood");
  }
  int n = m.num_rows();
  Eigen::MatrixXd Ky = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd Kj;
  for (int j = 0; j < m.num_components(); ++j) {
    m.kernel(j).matrix(pv.kernel, Kj);
    Ky += Kj;
  }
  Ky.diagonal().array() += pv.obs.sigma * pv.obs.sigma;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!safe_llt(Ky, llt)) return -std::numeric_limits<double>::infinity();
  Eigen::VectorXd r = m.data().response() - m.offsets();
  Eigen::VectorXd b = llt.solve(r);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
  return -0.5 * r.dot(b) - logdet - 0.5 * n * klog2pi;
}

// Posterior density (or bare likelihood) of a gaussian model with the
// components integrated out analytically. Exposes logp and its gradient on
// the unconstrained scale.
class MarginalTarget {
 public:
  MarginalTarget(const BoundModel& m, bool prior_only = false, bool include_prior = true)
      : m_(m), prior_only_(prior_only), include_prior_(include_prior) {
    if (m.spec().likelihood != LikelihoodFamily::Gaussian) {
      throw Error("marginal inference requires a gaussian likelihood");
    }
    int J = m.num_components();
    Kj_.resize(J);
    r_ = m.data().response() - m.offsets();
  }

  int dim() const { return m_.num_params(); }

  double logp_grad(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    grad.setZero(dim());
    if (detail::log_scale_overflow(m_, u)) return neg_inf;
    ParamVector pv = m_.constrain(u);
    double lp = 0.0;
    if (include_prior_) {
      lp = m_.log_prior_jacobian(u, &grad);
      if (!std::isfinite(lp)) return neg_inf;
    }
    if (prior_only_) return lp;

    int n = m_.num_rows();
    int J = m_.num_components();
    Ky_.setZero(n, n);
    for (int j = 0; j < J; ++j) {
      m_.kernel(j).matrix(pv.kernel, Kj_[j]);
      Ky_ += Kj_[j];
    }
    double sigma = pv.obs.sigma;
    Ky_.diagonal().array() += sigma * sigma;
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (!safe_llt(Ky_, llt)) return neg_inf;
    Eigen::VectorXd b = llt.solve(r_);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
    lp += -0.5 * r_.dot(b) - logdet - 0.5 * n * klog2pi;

    // W = b b^T - Ky^{-1}; d(loglik)/dtheta = 0.5 <W, dKy/dtheta>.
    W_ = -llt.solve(Eigen::MatrixXd::Identity(n, n));
    W_.selfadjointView<Eigen::Lower>().rankUpdate(b, 1.0);
    W_.triangularView<Eigen::StrictlyUpper>() = W_.transpose();

    for (int i = 0; i < m_.num_params(); ++i) {
      const ParamSlot& s = m_.layout()[i];
      double dot = 0.0;
      switch (s.target) {
        case ParamSlot::Target::Alpha:
          dot = 2.0 / pv.kernel.alpha[s.comp] * W_.cwiseProduct(Kj_[s.comp]).sum();
          break;
        case ParamSlot::Target::Ell:
          m_.kernel(s.comp).grad(pv.kernel, KernelParamRef::ell_of(s.comp), G_, &Kj_[s.comp]);
          dot = W_.cwiseProduct(G_).sum();
          break;
        case ParamSlot::Target::WarpA:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::warp())) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::warp(), G_, &Kj_[j]);
            dot += W_.cwiseProduct(G_).sum();
          }
          break;
        case ParamSlot::Target::Beta:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::beta_of(s.slot))) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::beta_of(s.slot), G_, &Kj_[j]);
            dot += W_.cwiseProduct(G_).sum();
          }
          break;
        case ParamSlot::Target::DeltaT:
        case ParamSlot::Target::EffectTime:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::delta_t_of(s.slot))) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::delta_t_of(s.slot), G_, &Kj_[j]);
            dot += W_.cwiseProduct(G_).sum();
          }
          dot *= m_.kernel_chain_sign(s);
          break;
        case ParamSlot::Target::Sigma:
          dot = 2.0 * sigma * W_.trace();
          break;
        case ParamSlot::Target::Dispersion:
          break;
      }
      grad[i] += 0.5 * dot * m_.dconstrained_du(i, u[i]);
    }
    return lp;
  }

 private:
  const BoundModel& m_;
  bool prior_only_;
  bool include_prior_;
  Eigen::VectorXd r_;
  mutable std::vector<Eigen::MatrixXd> Kj_;
  mutable Eigen::MatrixXd Ky_, W_, G_;
};

// Gradient of the log marginal likelihood (prior excluded) with respect to
// the unconstrained parameters.
inline Eigen::VectorXd grad_log_marginal_gaussian(const BoundModel& m, const Eigen::VectorXd& u) {
  MarginalTarget t(m, false, false);
  Eigen::VectorXd g(m.num_params());
  t.logp_grad(u, g);
  return g;
}

// Posterior density of hyperparameters and whitened component functions
// f^(j) = L_j eta_j for any likelihood family. Parameter order: hyper slots,
// then J blocks of N whitened values.
class LatentTarget {
 public:
  LatentTarget(const BoundModel& m, bool prior_only = false)
      : m_(m), prior_only_(prior_only) {
    int J = m.num_components();
    Kraw_.resize(J);
    L_.resize(J);
    fj_.resize(J);
    c_ = m.offsets();
  }

  int dim() const { return m_.num_params() + m_.num_components() * m_.num_rows(); }

  int hyper_dim() const { return m_.num_params(); }

  // Component functions of the last successful evaluation.
  const std::vector<Eigen::VectorXd>& component_values() const { return fj_; }

  double logp_grad(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    int P = m_.num_params();
    int n = m_.num_rows();
    int J = m_.num_components();
    grad.setZero(dim());
    Eigen::VectorXd uh = u.head(P);
    if (detail::log_scale_overflow(m_, uh)) return neg_inf;
    ParamVector pv = m_.constrain(uh);
    Eigen::VectorXd gh = Eigen::VectorXd::Zero(P);
    double lp = m_.log_prior_jacobian(uh, &gh);
    if (!std::isfinite(lp)) return neg_inf;
    grad.head(P) = gh;

    for (int j = 0; j < J; ++j) {
      auto eta = u.segment(P + j * n, n);
      lp += -0.5 * eta.squaredNorm() - 0.5 * n * klog2pi;
      grad.segment(P + j * n, n) = -eta;
    }
    if (prior_only_) return lp;

    Eigen::VectorXd f = c_;
    for (int j = 0; j < J; ++j) {
      m_.kernel(j).matrix(pv.kernel, Kraw_[j]);
      Kt_ = Kraw_[j];
      double a = pv.kernel.alpha[j];
      Kt_.diagonal().array() += 1e-8 * a * a;
      llt_.compute(Kt_);
      if (llt_.info() != Eigen::Success) return neg_inf;
      L_[j] = llt_.matrixL();
      fj_[j] = L_[j].triangularView<Eigen::Lower>() * u.segment(P + j * n, n);
      f += fj_[j];
    }
    const Eigen::VectorXd& y = m_.data().response();
    const Eigen::VectorXd* trials = m_.trials_ptr();
    double ll = log_likelihood(m_.spec().likelihood, y, f, pv.obs, trials);
    if (!std::isfinite(ll)) return neg_inf;
    lp += ll;

    dlog_likelihood_dh(m_.spec().likelihood, y, f, pv.obs, g_, trials);
    for (int j = 0; j < J; ++j) {
      grad.segment(P + j * n, n) +=
          L_[j].triangularView<Eigen::Lower>().transpose() * g_;
    }

    // Adjoint of each kernel matrix through its Cholesky factor, then dotted
    // with the analytic parameter derivatives.
    Kbar_.resize(J);
    for (int j = 0; j < J; ++j) {
      Eigen::MatrixXd Lbar =
          (g_ * u.segment(P + j * n, n).transpose()).triangularView<Eigen::Lower>();
      Kbar_[j] = chol_rev(L_[j], Lbar);
    }
    for (int i = 0; i < P; ++i) {
      const ParamSlot& s = m_.layout()[i];
      double dot = 0.0;
      switch (s.target) {
        case ParamSlot::Target::Alpha: {
          double a = pv.kernel.alpha[s.comp];
          dot = 2.0 / a * Kbar_[s.comp].cwiseProduct(Kraw_[s.comp]).sum() +
                2e-8 * a * Kbar_[s.comp].trace();
          break;
        }
        case ParamSlot::Target::Ell:
          m_.kernel(s.comp).grad(pv.kernel, KernelParamRef::ell_of(s.comp), G_, &Kraw_[s.comp]);
          dot = Kbar_[s.comp].cwiseProduct(G_).sum();
          break;
        case ParamSlot::Target::WarpA:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::warp())) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::warp(), G_, &Kraw_[j]);
            dot += Kbar_[j].cwiseProduct(G_).sum();
          }
          break;
        case ParamSlot::Target::Beta:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::beta_of(s.slot))) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::beta_of(s.slot), G_, &Kraw_[j]);
            dot += Kbar_[j].cwiseProduct(G_).sum();
          }
          break;
        case ParamSlot::Target::DeltaT:
        case ParamSlot::Target::EffectTime:
          for (int j = 0; j < J; ++j) {
            if (!m_.kernel(j).depends_on(KernelParamRef::delta_t_of(s.slot))) continue;
            m_.kernel(j).grad(pv.kernel, KernelParamRef::delta_t_of(s.slot), G_, &Kraw_[j]);
            dot += Kbar_[j].cwiseProduct(G_).sum();
          }
          dot *= m_.kernel_chain_sign(s);
          break;
        case ParamSlot::Target::Sigma:
        case ParamSlot::Target::Dispersion:
          dot = 0.0;
          grad[i] += dlog_likelihood_dobs(m_.spec().likelihood, y, f, pv.obs, trials) *
                     m_.dconstrained_du(i, u[i]);
          break;
      }
      if (dot != 0.0) grad[i] += dot * m_.dconstrained_du(i, u[i]);
    }
    return lp;
  }

 private:
  const BoundModel& m_;
  bool prior_only_;
  Eigen::VectorXd c_;
  mutable std::vector<Eigen::MatrixXd> Kraw_, L_, Kbar_;
  mutable std::vector<Eigen::VectorXd> fj_;
  mutable Eigen::MatrixXd Kt_, G_;
  mutable Eigen::LLT<Eigen::MatrixXd> llt_;
  mutable Eigen::VectorXd g_;
};

// Posterior of the component functions of a gaussian model at fixed
// parameters. mean.row(j) is E[f^(j) | y]; var.row(j) the pointwise
// posterior variance; total the posterior mean of c + sum_j f^(j).
struct ComponentPosterior {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
  Eigen::VectorXd total;
};

inline ComponentPosterior component_posterior_gaussian(const BoundModel& m,
                                                       const ParamVector& pv,
                                                       const LongitudinalDataset* at = nullptr,
                                                       bool want_var = true) {
  if (m.spec().likelihood != LikelihoodFamily::Gaussian) {
    throw Error("component_posterior_gaussian requires a gaussian likelihood");
  }
  int n = m.num_rows();
  int J = m.num_components();
  int nstar = at != nullptr ? at->num_rows() : n;

  std::vector<Eigen::MatrixXd> Kj(J);
  Eigen::MatrixXd Ky = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < J; ++j) {
    m.kernel(j).matrix(pv.kernel, Kj[j]);
    Ky += Kj[j];
  }
  Ky.diagonal().array() += pv.obs.sigma * pv.obs.sigma;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!safe_llt(Ky, llt)) throw Error("component posterior: covariance not factorizable");
  Eigen::VectorXd r = m.data().response() - m.offsets();
  Eigen::VectorXd b = llt.solve(r);

  ComponentPosterior out;
  out.mean.resize(J, nstar);
  if (want_var) out.var.resize(J, nstar);
  Eigen::VectorXd cstar =
      at != nullptr ? at->scaling_or_zero() : m.offsets();
  out.total = cstar;
  for (int j = 0; j < J; ++j) {
    Eigen::MatrixXd Kstar =
        at != nullptr ? m.kernel(j).cross_matrix(pv.kernel, *at) : Kj[j];
    out.mean.row(j) = (Kstar * b).transpose();
    out.total += out.mean.row(j).transpose();
    if (want_var) {
      Eigen::VectorXd prior_diag =
          at != nullptr ? m.kernel(j).diag_at(pv.kernel, *at) : Kj[j].diagonal();
      Eigen::MatrixXd V = llt.solve(Kstar.transpose());
      for (int i = 0; i < nstar; ++i) {
        out.var(j, i) = std::max(0.0, prior_diag[i] - Kstar.row(i).dot(V.col(i)));
      }
    }
  }
  return out;
}

namespace detail {

inline void run_chain(const BoundModel& m, const SamplerConfig& cfg, bool latent, int chain,
                      NutsResult& result) {
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(chain)));
  NutsOptions opt;
  opt.warmup = cfg.warmup;
  opt.iters = cfg.iters;
  opt.max_treedepth = cfg.max_treedepth;
  opt.target_accept = cfg.target_accept;
  if (latent) {
    LatentTarget target(m, cfg.prior_only);
    Eigen::VectorXd init(target.dim());
    Eigen::VectorXd u0 = m.random_init(rng);
    init.head(m.num_params()) = u0;
    for (int i = m.num_params(); i < target.dim(); ++i) init[i] = 0.1 * rng.normal();
    NutsSampler<LatentTarget> sampler(target, opt, rng);
    result = sampler.run(init);
  } else {
    MarginalTarget target(m, cfg.prior_only);
    Eigen::VectorXd init = m.random_init(rng);
    NutsSampler<MarginalTarget> sampler(target, opt, rng);
    result = sampler.run(init);
  }
}

}  // namespace detail

// Draw from the posterior of a bound model with dynamic HMC. Gaussian models
// integrate the components out analytically (unless force_latent); other
// likelihoods sample whitened component functions jointly with the
// hyperparameters.
inline PosteriorFit sample_posterior(const BoundModel& m, const SamplerConfig& cfg) {
  if (cfg.chains < 1 || cfg.iters < 1 || cfg.warmup < 0) {
    throw Error("sampler config: chains and iters must be positive");
  }
  bool latent = cfg.force_latent || m.spec().likelihood != LikelihoodFamily::Gaussian;
  int P = m.num_params();
  int n = m.num_rows();
  int J = m.num_components();

  std::vector<NutsResult> results(cfg.chains);
  int workers = std::max(1, std::min(cfg.threads, cfg.chains));
  if (workers == 1) {
    for (int c = 0; c < cfg.chains; ++c) detail::run_chain(m, cfg, latent, c, results[c]);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < workers; ++wkr) {
      pool.emplace_back([&]() {
        for (;;) {
          int c = next.fetch_add(1);
          if (c >= cfg.chains) return;
          detail::run_chain(m, cfg, latent, c, results[c]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  PosteriorFit fit;
  fit.method = latent ? "latent" : "marginal";
  fit.param_names = m.param_names();
  fit.chains = cfg.chains;
  fit.iters = cfg.iters;
  fit.warmup = cfg.warmup;
  fit.seed = cfg.seed;
  fit.config = cfg;
  int S = cfg.chains * cfg.iters;
  fit.draws.resize(S, P);
  fit.logp.resize(S);
  fit.divergent.assign(S, 0);
  if (latent) fit.latent.resize(S, J * n);

  Eigen::MatrixXd K;
  Eigen::LLT<Eigen::MatrixXd> llt;
  int row = 0;
  int divergences = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    const NutsResult& res = results[c];
    fit.stepsizes.push_back(res.stepsize);
    fit.accept_means.push_back(res.accept_mean);
    divergences += res.divergences;
    for (int k = 0; k < cfg.iters; ++k, ++row) {
      for (int i = 0; i < P; ++i) {
        fit.draws(row, i) = m.constrained_value(m.layout()[i], res.draws(k, i));
      }
      fit.logp[row] = res.logp[k];
      fit.divergent[row] = res.divergent[k];
      if (latent) {
        ParamVector pv = m.constrain(res.draws.row(k).head(P));
        for (int j = 0; j < J; ++j) {
          m.kernel(j).matrix(pv.kernel, K);
          double a = pv.kernel.alpha[j];
          K.diagonal().array() += 1e-8 * a * a;
          llt.compute(K);
          if (llt.info() != Eigen::Success) {
            throw Error("latent reconstruction: covariance not factorizable");
          }
          Eigen::VectorXd eta = res.draws.row(k).segment(P + j * n, n);
          fit.latent.row(row).segment(j * n, n) =
              (Eigen::MatrixXd(llt.matrixL()).triangularView<Eigen::Lower>() * eta).transpose();
        }
      }
    }
  }

  // Diagnostics on the constrained draws.
  FitDiagnostics& diag = fit.diagnostics;
  diag.divergences = divergences;
  diag.divergence_rate = S > 0 ? static_cast<double>(divergences) / S : 0.0;
  for (int i = 0; i < P; ++i) {
    std::vector<Eigen::VectorXd> per_chain(cfg.chains);
    for (int c = 0; c < cfg.chains; ++c) {
      per_chain[c] = fit.draws.col(i).segment(c * cfg.iters, cfg.iters);
    }
    ScalarDiagnostics sd = diagnose_scalar(per_chain, cfg.chains >= 2);
    diag.params.push_back({fit.param_names[i], sd.rhat, sd.ess_bulk, sd.ess_tail});
  }

  bool ok = true;
  if (diag.divergence_rate > cfg.max_divergence_frac) {
    ok = false;
    diag.warnings.push_back("divergence rate " + std::to_string(diag.divergence_rate) +
                            " exceeds " + std::to_string(cfg.max_divergence_frac));
  }
  for (const auto& pd : diag.params) {
    if (cfg.chains >= 2 && !(pd.rhat <= cfg.rhat_max)) {
      ok = false;
      diag.warnings.push_back("rhat of " + pd.name + " is " + std::to_string(pd.rhat));
    }
    if (!(pd.ess_bulk >= cfg.ess_min_per_chain * cfg.chains)) {
      ok = false;
      diag.warnings.push_back("bulk ESS of " + pd.name + " is " + std::to_string(pd.ess_bulk));
    }
  }
  diag.converged = ok;
  return fit;
}

}  // namespace lgp
