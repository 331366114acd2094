#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace lgp {

// splitmix64 step, used to derive independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random number generator. All distributions are implemented
// explicitly on top of std::mt19937_64 so that streams are reproducible
// across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t u64() { return gen_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (both values used alternately).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Gamma(shape, scale) via Marsaglia-Tsang, with the boost trick for
  // shape < 1.
  double gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) {
      throw std::invalid_argument("gamma: shape and scale must be positive");
    }
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a, 1.0);
    double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double chi_squared(double nu) { return gamma(0.5 * nu, 2.0); }

  double student_t(double nu) { return normal() / std::sqrt(chi_squared(nu) / nu); }

  // Poisson: inversion by multiplication for small means, PTRS otherwise.
  long poisson(double mu) {
    if (!(mu >= 0.0)) throw std::invalid_argument("poisson: mean must be non-negative");
    if (mu == 0.0) return 0;
    if (mu < 30.0) {
      double p = std::exp(-mu);
      double f = p;
      double u = uniform();
      long k = 0;
      while (u > f && k < 10000) {
        ++k;
        p *= mu / static_cast<double>(k);
        f += p;
      }
      return k;
    }
    return poisson_ptrs(mu);
  }

  // Negative binomial with mean mu and dispersion phi (gamma-Poisson mixture).
  long neg_binomial(double mu, double phi) {
    double lambda = gamma(phi, mu / phi);
    return poisson(lambda);
  }

  long binomial(long n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0) throw std::invalid_argument("binomial: bad arguments");
    long k = 0;
    for (long i = 0; i < n; ++i) {
      if (uniform() < p) ++k;
    }
    return k;
  }

  long beta_binomial(long n, double p, double gamma_par) {
    double q = beta(p * gamma_par, (1.0 - p) * gamma_par);
    return binomial(n, q);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  // Hoermann's PTRS transformed-rejection sampler for large Poisson means.
  long poisson_ptrs(double mu) {
    double slam = std::sqrt(mu);
    double loglam = std::log(mu);
    double b = 0.931 + 2.53 * slam;
    double a = -0.059 + 0.02483 * b;
    double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      double us = 0.5 - std::fabs(u);
      double k = std::floor((2.0 * a / us + b) * u + mu + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<long>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          k * loglam - mu - std::lgamma(k + 1.0)) {
        return static_cast<long>(k);
      }
    }
  }

  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lgp
