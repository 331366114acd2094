#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <lgp/numerics.hpp>

using Catch::Approx;

TEST_CASE("logistic") {
  CHECK(lgp::logistic(0.0) == 0.5);
  CHECK(lgp::logistic(2.0) == Approx(0.8807970779778823).epsilon(1e-14));
  CHECK(lgp::logistic(-800.0) == 0.0);
  CHECK(lgp::logistic(800.0) == 1.0);
  // symmetry
  for (double x : {0.1, 1.0, 3.7, 12.0}) {
    CHECK(lgp::logistic(x) + lgp::logistic(-x) == Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("log1p_exp") {
  CHECK(lgp::log1p_exp(0.0) == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(lgp::log1p_exp(3.2) == Approx(3.2399533331624304).epsilon(1e-14));
  CHECK(lgp::log1p_exp(-3.2) == Approx(0.03995333316243035).epsilon(1e-14));
  // large arguments must not overflow
  CHECK(lgp::log1p_exp(800.0) == 800.0);
  CHECK(lgp::log1p_exp(-800.0) == Approx(0.0).margin(1e-300));
}

TEST_CASE("digamma matches reference values") {
  CHECK(lgp::digamma(1.0) == Approx(-0.5772156649015329).epsilon(1e-12));
  CHECK(lgp::digamma(0.5) == Approx(-1.9635100260214235).epsilon(1e-12));
  CHECK(lgp::digamma(3.7) == Approx(1.1671535393615113).epsilon(1e-12));
  CHECK(lgp::digamma(0.01) == Approx(-100.56088545786868).epsilon(1e-12));
  CHECK(lgp::digamma(25.0) == Approx(3.198742512851974).epsilon(1e-12));
}

TEST_CASE("digamma recurrence") {
  // psi(x+1) = psi(x) + 1/x
  for (double x : {0.3, 1.7, 4.2}) {
    CHECK(lgp::digamma(x + 1.0) == Approx(lgp::digamma(x) + 1.0 / x).epsilon(1e-12));
  }
}

TEST_CASE("inverse normal CDF") {
  CHECK(lgp::inv_Phi(0.5) == Approx(0.0).margin(1e-15));
  CHECK(lgp::inv_Phi(0.975) == Approx(1.959963984540054).epsilon(1e-12));
  CHECK(lgp::inv_Phi(0.3) == Approx(-0.5244005127080409).epsilon(1e-12));
  CHECK(lgp::inv_Phi(1e-10) == Approx(-6.361340902404056).epsilon(1e-10));
  CHECK(lgp::inv_Phi(0.9999) == Approx(3.719016485455709).epsilon(1e-12));
  // symmetry
  for (double p : {0.01, 0.2, 0.45}) {
    CHECK(lgp::inv_Phi(p) == Approx(-lgp::inv_Phi(1.0 - p)).epsilon(1e-9));
  }
}

TEST_CASE("normal log density") {
  CHECK(lgp::normal_logpdf(1.3, 0.5, 2.0) == Approx(-1.6920857137646181).epsilon(1e-14));
  CHECK(lgp::normal_logpdf(0.0, 0.0, 1.0) == Approx(-0.5 * lgp::klog2pi).epsilon(1e-15));
}
