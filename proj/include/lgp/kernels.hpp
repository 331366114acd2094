#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgp/dataset.hpp"
#include "lgp/formula.hpp"
#include "lgp/numerics.hpp"

namespace lgp {

// ---------------------------------------------------------------------------
// Scalar kernel functions
// ---------------------------------------------------------------------------

inline double k_eq(double x1, double x2, double ell) {
  double d = (x1 - x2) / ell;
  return std::exp(-0.5 * d * d);
}

// Zero-sum categorical kernel: 1 on the diagonal blocks, -1/(M-1) off.
// Function draws sum to zero over the M categories at any shared input.
inline double k_zerosum(int z1, int z2, int M) {
  if (M < 2) throw Error("k_zerosum: need at least two categories");
  return z1 == z2 ? 1.0 : -1.0 / (M - 1.0);
}

// Input warp: monotone map of the real line onto (-1, 1) with steepness a,
// zero at zero. Compresses inputs far from the event so the effect component
// is stationary in warped time.
inline double warp_input(double x, double a) { return 2.0 * (logistic(a * x) - 0.5); }

// Nonstationary kernel: EQ kernel applied to warped inputs.
inline double k_ns(double x1, double x2, double a, double ell) {
  return k_eq(warp_input(x1, a), warp_input(x2, a), ell);
}

// Variance mask: sigmoidal factor that releases the effect variance around
// the event. Calibrated so the mask equals h at the warp's lower saturation
// point: vm_mask(r) = h where warp_input(r, a) = 2h - 1.
inline double vm_mask(double x, double a, double h) {
  double r = std::log(h / (1.0 - h)) / a;
  return logistic(a * (x - r));
}

inline double k_vm(double x1, double x2, double a, double ell, double h) {
  return vm_mask(x1, a, h) * vm_mask(x2, a, h) * k_ns(x1, x2, a, ell);
}

// Heterogeneity kernel over case individuals: rho(q, q') = sqrt(beta_q beta_q').
inline double k_heter(int q1, int q2, const Eigen::VectorXd& beta) {
  return std::sqrt(beta[q1] * beta[q2]);
}

// Missing-value mask: a kernel factor is zeroed whenever either input is
// unobserved.
inline double k_missing_mask(bool miss1, bool miss2) { return (miss1 || miss2) ? 0.0 : 1.0; }

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct KernelParams {
  Eigen::VectorXd alpha;    // magnitude per component
  Eigen::VectorXd ell;      // lengthscale per component (NaN where unused)
  double warp_a = 1.0;      // warp steepness, shared by warped components
  Eigen::VectorXd beta;     // heterogeneity per case individual, in [0, 1]
  Eigen::VectorXd delta_t;  // backward effect-time shift per case individual,
                            // in original time units, >= 0
  double vm_h = 0.025;
};

struct KernelParamRef {
  enum class Kind { Alpha, Ell, WarpA, Beta, DeltaT };
  Kind kind = Kind::Alpha;
  int index = -1;  // component for Alpha/Ell, case slot for Beta/DeltaT

  static KernelParamRef alpha_of(int comp) { return {Kind::Alpha, comp}; }
  static KernelParamRef ell_of(int comp) { return {Kind::Ell, comp}; }
  static KernelParamRef warp() { return {Kind::WarpA, -1}; }
  static KernelParamRef beta_of(int slot) { return {Kind::Beta, slot}; }
  static KernelParamRef delta_t_of(int slot) { return {Kind::DeltaT, slot}; }
};

// ---------------------------------------------------------------------------
// Case assignment
// ---------------------------------------------------------------------------

// Case individuals are those with at least one observed value of the
// maskable covariate. `row_slot[i]` maps rows to positions in `individuals`
// (-1 for rows of non-case individuals).
struct CaseAssignment {
  std::vector<int> individuals;  // id codes, ascending
  std::vector<int> row_slot;

  int num_cases() const { return static_cast<int>(individuals.size()); }
};

inline CaseAssignment case_assignment(const LongitudinalDataset& ds,
                                      const std::string& maskable_col) {
  const CovariateColumn& id = ds.column(ds.id_column());
  const CovariateColumn& x = ds.column(maskable_col);
  if (x.kind != CovariateKind::Continuous || !x.maskable) {
    throw Error("column '" + maskable_col + "' is not a maskable continuous covariate");
  }
  int q = id.num_categories();
  std::vector<char> is_case(q + 1, 0);
  for (int i = 0; i < ds.num_rows(); ++i) {
    if (!x.missing[i]) is_case[id.codes[i]] = 1;
  }
  CaseAssignment out;
  std::vector<int> slot_of(q + 1, -1);
  for (int code = 1; code <= q; ++code) {
    if (is_case[code]) {
      slot_of[code] = static_cast<int>(out.individuals.size());
      out.individuals.push_back(code);
    }
  }
  out.row_slot.resize(ds.num_rows());
  for (int i = 0; i < ds.num_rows(); ++i) {
    out.row_slot[i] = slot_of[id.codes[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Component kernel evaluator
// ---------------------------------------------------------------------------

// Evaluates one additive component's N x N covariance matrix and its
// gradients with respect to the kernel parameters the component depends on.
// The structure (covariate values, categories, missingness, case slots) is
// bound once; parameters vary per call.
class ComponentKernel {
 public:
  ComponentKernel(const ComponentSpec& spec, const LongitudinalDataset& ds,
                  const CaseAssignment* cases = nullptr)
      : spec_(spec), n_(ds.num_rows()) {
    if (spec_.has_continuous()) {
      const CovariateColumn& col = ds.column(spec_.continuous_covariate);
      if (col.kind != CovariateKind::Continuous) {
        throw Error("covariate '" + col.name + "' must be continuous");
      }
      xv_ = col.values;
      miss_.assign(col.missing.begin(), col.missing.end());
      masked_ = col.maskable;
      x_scale_ = col.scale;
      for (int i = 0; i < n_; ++i) {
        if (miss_[i]) xv_[i] = 0.0;
      }
    }
    if (spec_.has_categorical()) {
      const CovariateColumn& col = ds.column(spec_.categorical_covariate);
      if (col.kind != CovariateKind::Categorical) {
        throw Error("covariate '" + col.name + "' must be categorical");
      }
      zc_ = col.codes;
      m_ = col.num_categories();
    }
    needs_cases_ = spec_.uncertain_effect_time ||
                   spec_.kind == ComponentKind::HeterogeneousVarianceMasked;
    if (needs_cases_) {
      if (cases == nullptr) throw Error("term " + spec_.term() + " requires case assignment");
      cases_ = *cases;
      if (cases_.num_cases() == 0) {
        throw Error("term " + spec_.term() + " requires at least one case individual");
      }
    }
  }

  const ComponentSpec& spec() const { return spec_; }
  int num_rows() const { return n_; }
  const CaseAssignment& cases() const { return cases_; }

  bool depends_on(const KernelParamRef& wrt) const {
    switch (wrt.kind) {
      case KernelParamRef::Kind::Alpha:
        return wrt.index == spec_.index - 1;
      case KernelParamRef::Kind::Ell:
        return wrt.index == spec_.index - 1 && spec_.has_continuous();
      case KernelParamRef::Kind::WarpA:
        return spec_.is_warped();
      case KernelParamRef::Kind::Beta:
        return spec_.kind == ComponentKind::HeterogeneousVarianceMasked;
      case KernelParamRef::Kind::DeltaT:
        return spec_.uncertain_effect_time;
    }
    return false;
  }

  void matrix(const KernelParams& p, Eigen::MatrixXd& K) const {
    K.resize(n_, n_);
    fill(p, K, nullptr);
  }

  Eigen::MatrixXd matrix(const KernelParams& p) const {
    Eigen::MatrixXd K;
    matrix(p, K);
    return K;
  }

  // Gradient of the component matrix with respect to one parameter, on the
  // constrained scale. `Kc` may pass a matrix previously returned by
  // matrix() with identical parameters, to avoid recomputation.
  void grad(const KernelParams& p, const KernelParamRef& wrt, Eigen::MatrixXd& G,
            const Eigen::MatrixXd* Kc = nullptr) const {
    if (!depends_on(wrt)) {
      throw Error("term " + spec_.term() + " does not depend on the requested parameter");
    }
    G.resize(n_, n_);
    fill(p, G, &wrt, Kc);
  }

  Eigen::MatrixXd grad(const KernelParams& p, const KernelParamRef& wrt,
                       const Eigen::MatrixXd* Kc = nullptr) const {
    Eigen::MatrixXd G;
    grad(p, wrt, G, Kc);
    return G;
  }

  // Cross-covariance between the bound rows and the rows of `other`
  // (columns: bound dataset; rows: other). Used for posterior interpolation.
  Eigen::MatrixXd cross_matrix(const KernelParams& p, const LongitudinalDataset& other) const {
    ComponentKernel that(spec_, other, needs_cases_ ? &cross_cases(other) : nullptr);
    Eigen::MatrixXd K(that.n_, n_);
    double alpha = p.alpha[spec_.index - 1];
    for (int i = 0; i < that.n_; ++i) {
      for (int k = 0; k < n_; ++k) {
        K(i, k) = alpha * alpha * entry(that, i, *this, k, p);
      }
    }
    return K;
  }

  // Prior variance of the component at the rows of `other`.
  Eigen::VectorXd diag_at(const KernelParams& p, const LongitudinalDataset& other) const {
    ComponentKernel that(spec_, other, needs_cases_ ? &cross_cases(other) : nullptr);
    Eigen::VectorXd d(that.n_);
    double alpha = p.alpha[spec_.index - 1];
    for (int i = 0; i < that.n_; ++i) {
      d[i] = alpha * alpha * entry(that, i, that, i, p);
    }
    return d;
  }

 private:
  // Case assignment for a prediction dataset, aligned to the bound case
  // list: new rows of individuals that are cases here keep their slot.
  const CaseAssignment& cross_cases(const LongitudinalDataset& other) const {
    cross_cases_cache_ = case_assignment(other, spec_.continuous_covariate);
    // Remap slots so they index the bound case list.
    std::vector<int> remap(cross_cases_cache_.individuals.size(), -1);
    for (std::size_t s = 0; s < cross_cases_cache_.individuals.size(); ++s) {
      int code = cross_cases_cache_.individuals[s];
      for (std::size_t t = 0; t < cases_.individuals.size(); ++t) {
        if (cases_.individuals[t] == code) remap[s] = static_cast<int>(t);
      }
      if (remap[s] < 0) {
        throw Error("prediction rows contain a case individual unseen at fit time");
      }
    }
    for (auto& s : cross_cases_cache_.row_slot) {
      if (s >= 0) s = remap[s];
    }
    cross_cases_cache_.individuals = cases_.individuals;
    return cross_cases_cache_;
  }

  // Effective continuous input of row i under parameters p (shifted by the
  // individual's delta_t for uncertain effect-time components).
  static double xeff(const ComponentKernel& c, int i, const KernelParams& p) {
    double x = c.xv_[i];
    if (c.spec_.uncertain_effect_time) {
      int slot = c.cases_.row_slot[i];
      if (slot >= 0) x += p.delta_t[slot] / c.x_scale_;
    }
    return x;
  }

  // One unscaled kernel entry (without alpha^2) between row i of `a` and
  // row k of `b`. Slow general path, used for cross matrices only.
  static double entry(const ComponentKernel& a, int i, const ComponentKernel& b, int k,
                      const KernelParams& p) {
    const ComponentSpec& spec = a.spec_;
    int j = spec.index - 1;
    double v = 1.0;
    if (spec.has_categorical() && spec.kind != ComponentKind::HeterogeneousVarianceMasked) {
      v *= k_zerosum(a.zc_[i], b.zc_[k], a.m_);
    }
    if (spec.has_continuous()) {
      if (a.masked_ && (a.miss_[i] || b.miss_[k])) return 0.0;
      double xi = xeff(a, i, p);
      double xk = xeff(b, k, p);
      if (spec.is_warped()) {
        double wi = warp_input(xi, p.warp_a);
        double wk = warp_input(xk, p.warp_a);
        v *= k_eq(wi, wk, p.ell[j]);
        if (spec.kind != ComponentKind::Nonstationary) {
          v *= vm_mask(xi, p.warp_a, p.vm_h) * vm_mask(xk, p.warp_a, p.vm_h);
        }
      } else {
        v *= k_eq(xi, xk, p.ell[j]);
      }
    }
    if (spec.kind == ComponentKind::HeterogeneousVarianceMasked) {
      int qi = a.cases_.row_slot[i];
      int qk = b.cases_.row_slot[k];
      if (qi < 0 || qk < 0) return 0.0;
      v *= k_heter(qi, qk, p.beta);
    }
    return v;
  }

  void check_params(const KernelParams& p) const {
    int j = spec_.index - 1;
    if (j < 0 || j >= p.alpha.size()) throw Error("kernel params: alpha size mismatch");
    if (spec_.has_continuous() && (j >= p.ell.size() || !std::isfinite(p.ell[j]))) {
      throw Error("kernel params: missing lengthscale for term " + spec_.term());
    }
    if (spec_.kind == ComponentKind::HeterogeneousVarianceMasked &&
        p.beta.size() != cases_.num_cases()) {
      throw Error("kernel params: beta size mismatch");
    }
    if (spec_.uncertain_effect_time && p.delta_t.size() != cases_.num_cases()) {
      throw Error("kernel params: delta_t size mismatch");
    }
  }

  // Shared fill for the matrix and its gradients. With wrt == nullptr the
  // component matrix is written; otherwise its derivative. `Kc` short-cuts
  // the entry value when the caller already has the matrix.
  void fill(const KernelParams& p, Eigen::MatrixXd& out, const KernelParamRef* wrt,
            const Eigen::MatrixXd* Kc = nullptr) const {
    check_params(p);
    int j = spec_.index - 1;
    double alpha = p.alpha[j];
    double a2 = alpha * alpha;
    bool warped = spec_.is_warped();
    bool vm = spec_.kind == ComponentKind::VarianceMasked ||
              spec_.kind == ComponentKind::HeterogeneousVarianceMasked;
    bool het = spec_.kind == ComponentKind::HeterogeneousVarianceMasked;
    double ell = spec_.has_continuous() ? p.ell[j] : 1.0;

    // Per-row caches for the warped kernels.
    Eigen::VectorXd xe, w, dwda, dwdx, f, dfda_over_f, dfdx_over_f;
    if (spec_.has_continuous()) {
      xe.resize(n_);
      for (int i = 0; i < n_; ++i) xe[i] = xeff(*this, i, p);
    }
    if (warped) {
      w.resize(n_);
      dwda.resize(n_);
      dwdx.resize(n_);
      for (int i = 0; i < n_; ++i) {
        double s = logistic(p.warp_a * xe[i]);
        double g = 2.0 * s * (1.0 - s);
        w[i] = 2.0 * s - 1.0;
        dwda[i] = xe[i] * g;
        dwdx[i] = p.warp_a * g;
      }
      if (vm) {
        f.resize(n_);
        dfda_over_f.resize(n_);
        dfdx_over_f.resize(n_);
        double ch = std::log((1.0 - p.vm_h) / p.vm_h);
        for (int i = 0; i < n_; ++i) {
          double fi = logistic(p.warp_a * xe[i] + ch);
          f[i] = fi;
          dfda_over_f[i] = xe[i] * (1.0 - fi);
          dfdx_over_f[i] = p.warp_a * (1.0 - fi);
        }
      }
    }

    for (int i = 0; i < n_; ++i) {
      for (int k = 0; k <= i; ++k) {
        double v;
        bool dead = spec_.has_continuous() && masked_ && (miss_[i] || miss_[k]);
        if (het && !dead) {
          dead = cases_.row_slot[i] < 0 || cases_.row_slot[k] < 0;
        }
        if (dead) {
          out(i, k) = out(k, i) = 0.0;
          continue;
        }
        if (Kc != nullptr) {
          v = (*Kc)(i, k);
        } else {
          v = a2;
          if (spec_.has_categorical() && !het) v *= k_zerosum(zc_[i], zc_[k], m_);
          if (spec_.has_continuous()) {
            double d = warped ? (w[i] - w[k]) / ell : (xe[i] - xe[k]) / ell;
            v *= std::exp(-0.5 * d * d);
          }
          if (vm) v *= f[i] * f[k];
          if (het) v *= std::sqrt(p.beta[cases_.row_slot[i]] * p.beta[cases_.row_slot[k]]);
        }
        if (wrt == nullptr) {
          out(i, k) = out(k, i) = v;
          continue;
        }
        double g = 0.0;
        switch (wrt->kind) {
          case KernelParamRef::Kind::Alpha:
            g = 2.0 * v / alpha;
            break;
          case KernelParamRef::Kind::Ell: {
            double dw = warped ? (w[i] - w[k]) : (xe[i] - xe[k]);
            g = v * dw * dw / (ell * ell * ell);
            break;
          }
          case KernelParamRef::Kind::WarpA: {
            g = -v * (w[i] - w[k]) * (dwda[i] - dwda[k]) / (ell * ell);
            if (vm) g += v * (dfda_over_f[i] + dfda_over_f[k]);
            break;
          }
          case KernelParamRef::Kind::Beta: {
            int qi = cases_.row_slot[i];
            int qk = cases_.row_slot[k];
            int mult = (qi == wrt->index ? 1 : 0) + (qk == wrt->index ? 1 : 0);
            g = mult == 0 ? 0.0 : v * mult / (2.0 * p.beta[wrt->index]);
            break;
          }
          case KernelParamRef::Kind::DeltaT: {
            // dK/dx_i, chained through x_i = x0_i + delta_t / scale.
            double gi = 0.0, gk = 0.0;
            if (cases_.row_slot[i] == wrt->index) {
              gi = -(w[i] - w[k]) * dwdx[i] / (ell * ell);
              if (vm) gi += dfdx_over_f[i];
            }
            if (cases_.row_slot[k] == wrt->index) {
              gk = -(w[k] - w[i]) * dwdx[k] / (ell * ell);
              if (vm) gk += dfdx_over_f[k];
            }
            g = v * (gi + gk) / x_scale_;
            break;
          }
        }
        out(i, k) = out(k, i) = g;
      }
    }
  }

  ComponentSpec spec_;
  int n_ = 0;
  Eigen::VectorXd xv_;
  std::vector<char> miss_;
  bool masked_ = false;
  double x_scale_ = 1.0;
  std::vector<int> zc_;
  int m_ = 0;
  bool needs_cases_ = false;
  CaseAssignment cases_;
  mutable CaseAssignment cross_cases_cache_;
};

// Convenience wrappers for one-off evaluation.
inline Eigen::MatrixXd component_matrix(const ComponentSpec& spec, const LongitudinalDataset& ds,
                                        const KernelParams& p,
                                        const CaseAssignment* cases = nullptr) {
  return ComponentKernel(spec, ds, cases).matrix(p);
}

inline Eigen::MatrixXd component_matrix_grad(const ComponentSpec& spec,
                                             const LongitudinalDataset& ds,
                                             const KernelParams& p, const KernelParamRef& wrt,
                                             const CaseAssignment* cases = nullptr) {
  return ComponentKernel(spec, ds, cases).grad(p, wrt);
}

}  // namespace lgp
