#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using lgp::ComponentKind;

TEST_CASE("parsing every term kind") {
  lgp::ModelSpec spec = lgp::parse_formula(
      "y ~ gp(age) + zs(id) + zs(id)*gp(age) + gp_ns(age) + gp_vm(diseaseAge) "
      "+ het(id)*gp_vm(diseaseAge) + unc(gp_vm(blodAge))");
  REQUIRE(spec.components.size() == 7);
  CHECK(spec.response == "y");
  CHECK(spec.components[0].kind == ComponentKind::SharedEQ);
  CHECK(spec.components[0].continuous_covariate == "age");
  CHECK(spec.components[1].kind == ComponentKind::CategoricalOffset);
  CHECK(spec.components[1].categorical_covariate == "id");
  CHECK(spec.components[2].kind == ComponentKind::CategoricalInteraction);
  CHECK(spec.components[2].continuous_covariate == "age");
  CHECK(spec.components[3].kind == ComponentKind::Nonstationary);
  CHECK(spec.components[4].kind == ComponentKind::VarianceMasked);
  CHECK_FALSE(spec.components[4].uncertain_effect_time);
  CHECK(spec.components[5].kind == ComponentKind::HeterogeneousVarianceMasked);
  CHECK(spec.components[5].categorical_covariate == "id");
  CHECK(spec.components[5].continuous_covariate == "diseaseAge");
  CHECK(spec.components[6].kind == ComponentKind::VarianceMasked);
  CHECK(spec.components[6].uncertain_effect_time);
  CHECK(spec.components[6].continuous_covariate == "blodAge");
  // 1-based placement
  for (int j = 0; j < 7; ++j) CHECK(spec.components[j].index == j + 1);
}

TEST_CASE("printing reproduces the canonical form") {
  std::string canonical =
      "y ~ gp(age) + zs(sex)*gp(age) + unc(het(id)*gp_vm(diseaseAge)) + zs(group)";
  lgp::ModelSpec spec = lgp::parse_formula(canonical);
  CHECK(lgp::print_formula(spec) == canonical);
  // idempotent through a reparse
  CHECK(lgp::print_formula(lgp::parse_formula(lgp::print_formula(spec))) == canonical);
}

TEST_CASE("whitespace is free") {
  lgp::ModelSpec a = lgp::parse_formula("y~gp(age)+zs( id )* gp( age )");
  lgp::ModelSpec b = lgp::parse_formula("y ~ gp(age) + zs(id)*gp(age)");
  CHECK(a == b);
}

TEST_CASE("parse errors") {
  using lgp::FormulaError;
  CHECK_THROWS_AS(lgp::parse_formula(""), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y gp(age)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ spline(age)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ gp(age"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ gp(age) +"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ gp(age) zs(id)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ zs(id)*gp_ns(age)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ het(id)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ het(id)*gp(age)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ unc(gp(age))"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ unc(zs(id))"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ gp(age) + gp(age)"), FormulaError);
  CHECK_THROWS_AS(lgp::parse_formula("y ~ gp()"), FormulaError);
  // offsets point at the trouble
  try {
    lgp::parse_formula("y ~ gp(age) + wobble(id)");
    FAIL("expected FormulaError");
  } catch (const FormulaError& e) {
    CHECK(e.offset() == 14);
  }
}

TEST_CASE("parser totality on garbage") {
  // Any input either parses or raises FormulaError; nothing else escapes.
  lgp::Rng rng(42);
  const std::string alphabet = "yage~+*()_ gpzsunchet.0禁";
  for (int trial = 0; trial < 3000; ++trial) {
    int len = static_cast<int>(rng.uniform_int(40));
    std::string s;
    for (int i = 0; i < len; ++i) s += alphabet[rng.uniform_int(alphabet.size())];
    try {
      lgp::ModelSpec spec = lgp::parse_formula(s);
      CHECK(!spec.components.empty());
    } catch (const lgp::FormulaError&) {
      // fine
    }
  }
}

TEST_CASE("validation against a dataset") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();

  CHECK_NOTHROW(testutil::spec_for("y ~ gp(age) + zs(id)*gp(age) + gp_vm(diseaseAge)", ds));
  CHECK_NOTHROW(testutil::spec_for("y ~ unc(het(id)*gp_vm(diseaseAge)) + zs(group)", ds));

  // response mismatch
  CHECK_THROWS(testutil::spec_for("z ~ gp(age)", ds));
  // unknown covariate
  CHECK_THROWS(testutil::spec_for("y ~ gp(weight)", ds));
  // kind mismatches
  CHECK_THROWS(testutil::spec_for("y ~ gp(id)", ds));
  CHECK_THROWS(testutil::spec_for("y ~ zs(age)", ds));
  // masked kernels need a maskable covariate
  CHECK_THROWS(testutil::spec_for("y ~ gp_vm(age)", ds));
  CHECK_THROWS(testutil::spec_for("y ~ unc(gp_vm(age))", ds));
  // het must target the id column
  CHECK_THROWS(testutil::spec_for("y ~ het(group)*gp_vm(diseaseAge)", ds));
  // binomial families need trials
  CHECK_THROWS(testutil::spec_for("y ~ gp(age)", ds, lgp::LikelihoodFamily::Binomial));
  CHECK_THROWS(testutil::spec_for("y ~ gp(age)", ds, lgp::LikelihoodFamily::BetaBinomial));
}

TEST_CASE("likelihood names round trip") {
  using lgp::LikelihoodFamily;
  for (auto f : {LikelihoodFamily::Gaussian, LikelihoodFamily::Poisson,
                 LikelihoodFamily::NegBinomial, LikelihoodFamily::Binomial,
                 LikelihoodFamily::BetaBinomial}) {
    CHECK(lgp::likelihood_from_string(lgp::to_string(f)) == f);
  }
  CHECK_THROWS(lgp::likelihood_from_string("weibull"));
}
