#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lgp/dataset.hpp"
#include "lgp/rng.hpp"

namespace lgp {

struct NutsOptions {
  int warmup = 1000;
  int iters = 1000;
  int max_treedepth = 10;
  double target_accept = 0.8;
  bool adapt_metric = true;
  double divergence_threshold = 1000.0;
};

struct NutsResult {
  Eigen::MatrixXd draws;  // iters x dim, unconstrained scale
  Eigen::VectorXd logp;
  std::vector<char> divergent;
  std::vector<int> treedepth;
  int warmup_divergences = 0;
  int divergences = 0;
  double stepsize = 0.0;
  double accept_mean = 0.0;
  Eigen::VectorXd inv_metric;
};

// Dynamic-trajectory HMC with multinomial sampling over the trajectory,
// doubling until a U-turn or the depth cap, dual-averaging step size
// adaptation and windowed estimation of a diagonal metric.
//
// Target requirements:
//   int dim() const;
//   double logp_grad(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const;
// logp_grad may return -inf to reject a point.
template <class Target>
class NutsSampler {
 public:
  NutsSampler(const Target& target, const NutsOptions& opt, Rng& rng)
      : target_(target), opt_(opt), rng_(rng), dim_(target.dim()) {
    inv_metric_ = Eigen::VectorXd::Ones(dim_);
  }

  NutsResult run(const Eigen::VectorXd& init) {
    NutsResult out;
    out.draws.resize(opt_.iters, dim_);
    out.logp.resize(opt_.iters);
    out.divergent.assign(opt_.iters, 0);
    out.treedepth.assign(opt_.iters, 0);

    State cur;
    cur.q = init;
    cur.grad.resize(dim_);
    cur.logp = target_.logp_grad(cur.q, cur.grad);
    if (!std::isfinite(cur.logp)) {
      // Nudge the start until the density is finite.
      for (int attempt = 0; attempt < 100 && !std::isfinite(cur.logp); ++attempt) {
        for (int i = 0; i < dim_; ++i) cur.q[i] = rng_.uniform(-2.0, 2.0);
        cur.logp = target_.logp_grad(cur.q, cur.grad);
      }
      if (!std::isfinite(cur.logp)) {
        throw Error("sampler initialization failed: log density not finite");
      }
    }

    init_stepsize(cur);
    da_reset(stepsize_);

    // Welford accumulators for the metric.
    Eigen::VectorXd wm = Eigen::VectorXd::Zero(dim_);
    Eigen::VectorXd ws = Eigen::VectorXd::Zero(dim_);
    int wn = 0;

    // Adaptation windows: an initial fast interval (step size only), then
    // doubling slow windows for the metric, then a terminal fast interval.
    int init_buf = 75, term_buf = 50, base_window = 25;
    if (opt_.warmup < init_buf + term_buf + base_window) {
      init_buf = static_cast<int>(0.15 * opt_.warmup);
      term_buf = static_cast<int>(0.10 * opt_.warmup);
      base_window = opt_.warmup - init_buf - term_buf;
    }
    bool any_slow = opt_.adapt_metric && base_window > 0 && dim_ > 0;
    int window_end = any_slow ? init_buf + base_window : -1;
    int window_size = base_window;

    double accept_sum = 0.0;
    int total = opt_.warmup + opt_.iters;
    for (int it = 0; it < total; ++it) {
      bool warm = it < opt_.warmup;
      Iter res = transition(cur);
      if (warm) {
        da_update(res.accept_stat);
        stepsize_ = std::exp(da_log_eps_);
        if (any_slow && it >= init_buf && it < opt_.warmup - term_buf) {
          ++wn;
          for (int i = 0; i < dim_; ++i) {
            double d = cur.q[i] - wm[i];
            wm[i] += d / wn;
            ws[i] += d * (cur.q[i] - wm[i]);
          }
          if (it + 1 == window_end) {
            if (wn > 1) {
              for (int i = 0; i < dim_; ++i) {
                double var = ws[i] / (wn - 1);
                inv_metric_[i] =
                    std::max(1e-10, var * wn / (wn + 5.0) + 1e-3 * (5.0 / (wn + 5.0)));
              }
            }
            wm.setZero();
            ws.setZero();
            wn = 0;
            init_stepsize(cur);
            da_reset(stepsize_);
            window_size *= 2;
            int next_end = window_end + window_size;
            // Extend the last window to the end of the slow phase.
            if (next_end + 2 * window_size > opt_.warmup - term_buf) {
              next_end = opt_.warmup - term_buf;
            }
            window_end = next_end;
          }
        }
        if (res.divergent) ++out.warmup_divergences;
        if (it + 1 == opt_.warmup) stepsize_ = std::exp(da_log_eps_bar_);
      } else {
        int k = it - opt_.warmup;
        out.draws.row(k) = cur.q;
        out.logp[k] = cur.logp;
        out.divergent[k] = res.divergent ? 1 : 0;
        out.treedepth[k] = res.depth;
        if (res.divergent) ++out.divergences;
        accept_sum += res.accept_stat;
      }
    }
    out.stepsize = stepsize_;
    out.accept_mean = opt_.iters > 0 ? accept_sum / opt_.iters : 0.0;
    out.inv_metric = inv_metric_;
    return out;
  }

 private:
  struct State {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double logp = 0.0;
  };

  struct Tree {
    State minus, plus;
    Eigen::VectorXd q_prop, grad_prop;
    double logp_prop = 0.0;
    double lw = 0.0;  // log total multinomial weight
    double sum_accept = 0.0;
    int n_leaf = 0;
    bool divergent = false;
    bool ok = true;
  };

  struct Iter {
    double accept_stat = 0.0;
    bool divergent = false;
    int depth = 0;
  };

  double kinetic(const Eigen::VectorXd& p) const {
    double k = 0.0;
    for (int i = 0; i < dim_; ++i) k += inv_metric_[i] * p[i] * p[i];
    return 0.5 * k;
  }

  void sample_momentum(Eigen::VectorXd& p) {
    p.resize(dim_);
    for (int i = 0; i < dim_; ++i) p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
  }

  // One leapfrog step; returns false when the new point has non-finite
  // density.
  bool leapfrog(State& s, double eps) const {
    s.p += 0.5 * eps * s.grad;
    for (int i = 0; i < dim_; ++i) s.q[i] += eps * inv_metric_[i] * s.p[i];
    s.logp = target_.logp_grad(s.q, s.grad);
    if (!std::isfinite(s.logp)) return false;
    s.p += 0.5 * eps * s.grad;
    return true;
  }

  bool uturn(const State& minus, const State& plus) const {
    Eigen::VectorXd dq = plus.q - minus.q;
    double a = 0.0, b = 0.0;
    for (int i = 0; i < dim_; ++i) {
      a += dq[i] * inv_metric_[i] * minus.p[i];
      b += dq[i] * inv_metric_[i] * plus.p[i];
    }
    return a < 0.0 || b < 0.0;
  }

  static double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  void build_tree(int depth, const State& from, int dir, double H0, Tree& out) {
    if (depth == 0) {
      State s = from;
      bool finite = leapfrog(s, dir * stepsize_);
      double H = finite ? -s.logp + kinetic(s.p) : std::numeric_limits<double>::infinity();
      double dH = H0 - H;  // > 0 when energy decreased
      out.minus = s;
      out.plus = s;
      out.q_prop = s.q;
      out.grad_prop = s.grad;
      out.logp_prop = s.logp;
      out.lw = dH;
      out.n_leaf = 1;
      out.sum_accept = std::isfinite(dH) ? std::min(1.0, std::exp(dH)) : 0.0;
      out.divergent = !(dH > -opt_.divergence_threshold);
      out.ok = !out.divergent;
      return;
    }
    Tree t1;
    build_tree(depth - 1, from, dir, H0, t1);
    if (!t1.ok) {
      out = std::move(t1);
      return;
    }
    Tree t2;
    build_tree(depth - 1, dir > 0 ? t1.plus : t1.minus, dir, H0, t2);
    out.n_leaf = t1.n_leaf + t2.n_leaf;
    out.sum_accept = t1.sum_accept + t2.sum_accept;
    out.divergent = t1.divergent || t2.divergent;
    out.minus = dir > 0 ? t1.minus : t2.minus;
    out.plus = dir > 0 ? t2.plus : t1.plus;
    if (!t2.ok) {
      out.ok = false;
      return;
    }
    out.lw = log_sum_exp(t1.lw, t2.lw);
    bool take2 = std::log(rng_.uniform()) < t2.lw - out.lw;
    const Tree& chosen = take2 ? t2 : t1;
    out.q_prop = chosen.q_prop;
    out.grad_prop = chosen.grad_prop;
    out.logp_prop = chosen.logp_prop;
    out.ok = !uturn(out.minus, out.plus);
  }

  Iter transition(State& cur) {
    Iter res;
    Eigen::VectorXd p;
    sample_momentum(p);
    double H0 = -cur.logp + kinetic(p);

    State minus{cur.q, p, cur.grad, cur.logp};
    State plus = minus;
    Eigen::VectorXd q_prop = cur.q, grad_prop = cur.grad;
    double logp_prop = cur.logp;
    double total_lw = 0.0;
    double sum_accept = 0.0;
    int n_leaf = 0;

    for (int depth = 0; depth < opt_.max_treedepth; ++depth) {
      int dir = rng_.uniform() < 0.5 ? -1 : 1;
      Tree tree;
      build_tree(depth, dir > 0 ? plus : minus, dir, H0, tree);
      sum_accept += tree.sum_accept;
      n_leaf += tree.n_leaf;
      if (!tree.ok) {
        res.divergent = res.divergent || tree.divergent;
        break;
      }
      // Biased progressive sampling favors the fresh subtree.
      if (std::log(rng_.uniform()) < tree.lw - total_lw) {
        q_prop = tree.q_prop;
        grad_prop = tree.grad_prop;
        logp_prop = tree.logp_prop;
      }
      total_lw = log_sum_exp(total_lw, tree.lw);
      if (dir > 0) {
        plus = tree.plus;
      } else {
        minus = tree.minus;
      }
      res.depth = depth + 1;
      if (uturn(minus, plus)) break;
    }
    cur.q = q_prop;
    cur.grad = grad_prop;
    cur.logp = logp_prop;
    res.accept_stat = n_leaf > 0 ? sum_accept / n_leaf : 0.0;
    return res;
  }

  // Coarse search for a step size with acceptance near one half.
  void init_stepsize(const State& cur) {
    if (dim_ == 0) return;
    stepsize_ = std::max(stepsize_, 1e-10);
    Eigen::VectorXd p;
    sample_momentum(p);
    double H0 = -cur.logp + kinetic(p);
    int direction = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      State s{cur.q, p, cur.grad, cur.logp};
      bool finite = leapfrog(s, stepsize_);
      double H = finite ? -s.logp + kinetic(s.p) : std::numeric_limits<double>::infinity();
      double a = std::exp(H0 - H);
      if (direction == 0) direction = a > 0.5 ? 1 : -1;
      if (direction > 0) {
        if (!(a > 0.5)) break;
        stepsize_ *= 2.0;
      } else {
        if (!(a < 0.5)) break;
        stepsize_ *= 0.5;
      }
      if (stepsize_ > 1e7 || stepsize_ < 1e-16) break;
    }
  }

  void da_reset(double eps) {
    da_mu_ = std::log(10.0 * std::max(eps, 1e-16));
    da_log_eps_ = std::log(std::max(eps, 1e-16));
    da_log_eps_bar_ = da_log_eps_;
    da_hbar_ = 0.0;
    da_t_ = 0;
  }

  void da_update(double accept) {
    ++da_t_;
    double t = static_cast<double>(da_t_);
    double eta = 1.0 / (t + 10.0);
    da_hbar_ = (1.0 - eta) * da_hbar_ + eta * (opt_.target_accept - accept);
    da_log_eps_ = da_mu_ - std::sqrt(t) / 0.05 * da_hbar_;
    double w = std::pow(t, -0.75);
    da_log_eps_bar_ = w * da_log_eps_ + (1.0 - w) * da_log_eps_bar_;
  }

  const Target& target_;
  NutsOptions opt_;
  Rng& rng_;
  int dim_;
  Eigen::VectorXd inv_metric_;
  double stepsize_ = 1.0;
  double da_mu_ = 0.0, da_log_eps_ = 0.0, da_log_eps_bar_ = 0.0, da_hbar_ = 0.0;
  int da_t_ = 0;
};

}  // namespace lgp
