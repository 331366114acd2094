#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lgp/numerics.hpp"

namespace lgp {

namespace detail {

// Split each chain into halves, dropping the middle draw of odd chains.
inline std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    int n2 = static_cast<int>(c.size()) / 2;
    if (n2 < 1) continue;
    out.push_back(c.head(n2));
    out.push_back(c.tail(n2));
  }
  return out;
}

// Fractional average ranks with midranks for ties, mapped through the
// inverse normal CDF.
inline std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& seqs) {
  int total = 0;
  for (const auto& s : seqs) total += static_cast<int>(s.size());
  std::vector<std::pair<double, int>> pool;
  pool.reserve(total);
  int offset = 0;
  for (const auto& s : seqs) {
    for (int i = 0; i < s.size(); ++i) pool.push_back({s[i], offset + i});
    offset += static_cast<int>(s.size());
  }
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> rank(total);
  int i = 0;
  while (i < total) {
    int j = i;
    while (j + 1 < total && pool[j + 1].first == pool[i].first) ++j;
    double mid = 0.5 * (i + j) + 1.0;  // average of ranks i+1..j+1
    for (int k = i; k <= j; ++k) rank[pool[k].second] = mid;
    i = j + 1;
  }
  std::vector<Eigen::VectorXd> out(seqs.size());
  offset = 0;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    out[s].resize(seqs[s].size());
    for (int k = 0; k < seqs[s].size(); ++k) {
      out[s][k] = inv_Phi((rank[offset + k] - 0.375) / (total + 0.25));
    }
    offset += static_cast<int>(seqs[s].size());
  }
  return out;
}

// Potential scale reduction factor over already-split sequences. Returns
// +inf when chains have zero within-variance but distinct means, NaN when
// everything is constant.
inline double rhat_of(const std::vector<Eigen::VectorXd>& seqs) {
  int m = static_cast<int>(seqs.size());
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  int n = static_cast<int>(seqs[0].size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double grand = 0.0;
  std::vector<double> means(m);
  for (int c = 0; c < m; ++c) {
    means[c] = seqs[c].mean();
    grand += means[c];
  }
  grand /= m;
  double w = 0.0, b = 0.0;
  for (int c = 0; c < m; ++c) {
    double ss = (seqs[c].array() - means[c]).square().sum();
    w += ss / (n - 1);
    b += (means[c] - grand) * (means[c] - grand);
  }
  w /= m;
  b *= static_cast<double>(n) / (m - 1);
  // constant chains leave rounding noise in w and b; measure both against the
  // pooled second moment so ties collapse to the documented NaN/inf verdicts
  double m2 = 0.0;
  for (int c = 0; c < m; ++c) m2 += seqs[c].squaredNorm();
  m2 /= static_cast<double>(m) * n;
  double tol = 1e-20 * std::max(m2, 1e-300);
  if (w <= tol) {
    if (b <= tol) return std::numeric_limits<double>::quiet_NaN();
    return std::numeric_limits<double>::infinity();
  }
  double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Effective sample size over split sequences, using per-chain
// autocovariances combined with Geyer's initial monotone positive sequence.
inline double ess_of(const std::vector<Eigen::VectorXd>& seqs) {
  int m = static_cast<int>(seqs.size());
  if (m < 1) return std::numeric_limits<double>::quiet_NaN();
  int n = static_cast<int>(seqs[0].size());
  if (n < 4) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> means(m);
  double w = 0.0;
  for (int c = 0; c < m; ++c) {
    means[c] = seqs[c].mean();
    w += (seqs[c].array() - means[c]).square().sum() / (n - 1);
  }
  w /= m;
  double b = 0.0;
  if (m > 1) {
    double grand = 0.0;
    for (double mu : means) grand += mu;
    grand /= m;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(n) / (m - 1);
  }
  double var_plus = (n - 1.0) / n * w + b / n;
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  auto acov = [&](int c, int t) {
    double s = 0.0;
    for (int i = 0; i < n - t; ++i) {
      s += (seqs[c][i] - means[c]) * (seqs[c][i + t] - means[c]);
    }
    return s / n;
  };
  auto rho = [&](int t) {
    double a = 0.0;
    for (int c = 0; c < m; ++c) a += acov(c, t);
    a /= m;
    return 1.0 - (w - a) / var_plus;
  };

  double tau = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau -= 1.0;
  tau = std::max(tau, 1e-12);
  return m * static_cast<double>(n) / tau;
}

inline double pooled_quantile(const std::vector<Eigen::VectorXd>& seqs, double p) {
  std::vector<double> v;
  for (const auto& s : seqs) {
    for (int i = 0; i < s.size(); ++i) v.push_back(s[i]);
  }
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double idx = p * (v.size() - 1);
  int lo = static_cast<int>(std::floor(idx));
  int hi = static_cast<int>(std::ceil(idx));
  double frac = idx - lo;
  return (1.0 - frac) * v[lo] + frac * v[hi];
}

}  // namespace detail

struct ScalarDiagnostics {
  double rhat = std::numeric_limits<double>::quiet_NaN();
  double ess_bulk = std::numeric_limits<double>::quiet_NaN();
  double ess_tail = std::numeric_limits<double>::quiet_NaN();
};

// Rank-normalized split R-hat (max of the location and scale versions) and
// bulk/tail effective sample sizes for one scalar quantity. `chains` holds
// the post-warmup draws of each chain. R-hat needs at least two chains; ESS
// is computed from split chains either way.
inline ScalarDiagnostics diagnose_scalar(const std::vector<Eigen::VectorXd>& chains,
                                         bool rhat_wanted = true) {
  ScalarDiagnostics out;
  std::vector<Eigen::VectorXd> split = detail::split_chains(chains);
  if (split.empty()) return out;

  std::vector<Eigen::VectorXd> z = detail::rank_normalize(split);
  if (rhat_wanted && chains.size() >= 2) {
    double med = detail::pooled_quantile(split, 0.5);
    std::vector<Eigen::VectorXd> folded(split.size());
    for (std::size_t c = 0; c < split.size(); ++c) {
      folded[c] = (split[c].array() - med).abs();
    }
    std::vector<Eigen::VectorXd> zf = detail::rank_normalize(folded);
    double r1 = detail::rhat_of(z);
    double r2 = detail::rhat_of(zf);
    if (std::isnan(r1)) {
      out.rhat = r2;
    } else if (std::isnan(r2)) {
      out.rhat = r1;
    } else {
      out.rhat = std::max(r1, r2);
    }
  }
  out.ess_bulk = detail::ess_of(z);

  double q05 = detail::pooled_quantile(split, 0.05);
  double q95 = detail::pooled_quantile(split, 0.95);
  std::vector<Eigen::VectorXd> lo(split.size()), hi(split.size());
  for (std::size_t c = 0; c < split.size(); ++c) {
    lo[c].resize(split[c].size());
    hi[c].resize(split[c].size());
    for (int i = 0; i < split[c].size(); ++i) {
      lo[c][i] = split[c][i] <= q05 ? 1.0 : 0.0;
      hi[c][i] = split[c][i] <= q95 ? 1.0 : 0.0;
    }
  }
  out.ess_tail = std::min(detail::ess_of(lo), detail::ess_of(hi));
  return out;
}

// Effective sample size of the mean of a raw (untransformed) scalar series;
// used for Monte Carlo standard errors.
inline double ess_mean(const std::vector<Eigen::VectorXd>& chains) {
  return detail::ess_of(detail::split_chains(chains));
}

}  // namespace lgp
