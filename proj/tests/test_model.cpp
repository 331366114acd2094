#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using Catch::Approx;
using lgp::ParamSlot;

TEST_CASE("parameter layout") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec = testutil::spec_for(
      "y ~ gp(age) + zs(id)*gp(age) + gp_vm(diseaseAge) + zs(group)*gp(age) + zs(group)", ds);
  lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));

  std::vector<std::string> want = {"alpha[1]", "alpha[2]", "alpha[3]", "alpha[4]", "alpha[5]",
                                   "ell[1]",   "ell[2]",   "ell[3]",   "ell[4]",   "warp_a",
                                   "sigma"};
  CHECK(m.param_names() == want);
  CHECK(m.num_params() == 11);
  CHECK(m.num_components() == 5);
  CHECK(m.has_cases());
  CHECK_FALSE(m.has_heterogeneity());
  CHECK_FALSE(m.has_uncertain_effect_time());
  CHECK(m.disease_covariate() == "diseaseAge");
}

TEST_CASE("layout adds per-case slots and observation params") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();

  SECTION("heterogeneity and uncertain onsets") {
    lgp::ModelSpec spec = testutil::spec_for("y ~ unc(het(id)*gp_vm(diseaseAge))", ds);
    lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));
    std::vector<std::string> want = {"alpha[1]", "ell[1]",     "warp_a",     "beta[id1]",
                                     "beta[id2]", "delta_t[id1]", "delta_t[id2]", "sigma"};
    CHECK(m.param_names() == want);
    CHECK(m.has_heterogeneity());
    CHECK(m.has_uncertain_effect_time());
  }
  SECTION("dispersion for nb") {
    lgp::ModelSpec spec;
    {
      lgp::LongitudinalDataset cds = testutil::disease_dataset();
      // counts need integer responses
      Eigen::VectorXd y(cds.num_rows());
      for (int i = 0; i < y.size(); ++i) y[i] = i % 4;
      std::vector<lgp::CovariateColumn> cols;
      cols = cds.columns();
      lgp::LongitudinalDataset nds(cols, "y", y, "id", {}, {}, "age");
      spec = testutil::spec_for("y ~ gp(age)", nds, lgp::LikelihoodFamily::NegBinomial);
      lgp::BoundModel m(spec, nds, lgp::PriorSpec{});
      std::vector<std::string> want = {"alpha[1]", "ell[1]", "phi"};
      CHECK(m.param_names() == want);
    }
  }
  SECTION("categorical-only model has no lengthscale") {
    lgp::ModelSpec spec = testutil::spec_for("y ~ zs(group)", ds);
    lgp::BoundModel m(spec, ds, lgp::PriorSpec{});
    std::vector<std::string> want = {"alpha[1]", "sigma"};
    CHECK(m.param_names() == want);
  }
}

TEST_CASE("constrain and unconstrain are inverse") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec =
      testutil::spec_for("y ~ gp(age) + unc(het(id)*gp_vm(diseaseAge)) + zs(group)", ds);
  lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));

  lgp::Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd u = m.random_init(rng);
    lgp::ParamVector pv = m.constrain(u);
    Eigen::VectorXd back = m.unconstrain(pv);
    CHECK((back - u).cwiseAbs().maxCoeff() < 1e-12);

    // round trip through the constrained row representation as well
    Eigen::VectorXd row(m.num_params());
    for (int i = 0; i < m.num_params(); ++i) row[i] = m.get_value(pv, m.layout()[i]);
    lgp::ParamVector pv2 = m.params_from_constrained(row);
    CHECK((m.unconstrain(pv2) - u).cwiseAbs().maxCoeff() < 1e-12);
  }

  // constrained values respect their supports
  Eigen::VectorXd u = m.random_init(rng);
  lgp::ParamVector pv = m.constrain(u);
  CHECK(pv.kernel.alpha.minCoeff() > 0.0);
  CHECK(pv.kernel.warp_a > 0.0);
  CHECK(pv.kernel.beta.minCoeff() > 0.0);
  CHECK(pv.kernel.beta.maxCoeff() < 1.0);
  CHECK(pv.kernel.delta_t.minCoeff() > 0.0);
  CHECK(pv.obs.sigma > 0.0);
  CHECK(pv.kernel.vm_h == 0.025);
}

TEST_CASE("observation times are derived from the time column") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec = testutil::spec_for("y ~ unc(gp_vm(diseaseAge))", ds);
  lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));
  REQUIRE(m.t_obs().size() == 2);
  CHECK(m.t_obs()[0] == Approx(4.0).margin(1e-12));
  CHECK(m.t_obs()[1] == Approx(6.0).margin(1e-12));

  // rescaling the covariates must not change the derived times
  lgp::LongitudinalDataset nd = lgp::normalize_for_model(ds, spec);
  lgp::BoundModel m2(spec, nd, lgp::default_priors(nd, spec));
  CHECK(m2.t_obs()[0] == Approx(4.0).margin(1e-9));
  CHECK(m2.t_obs()[1] == Approx(6.0).margin(1e-9));
}

TEST_CASE("direct effect-time parameterization") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec = testutil::spec_for("y ~ unc(gp_vm(diseaseAge))", ds);
  lgp::PriorSpec priors = lgp::default_priors(ds, spec);
  priors.effect_time_mode = lgp::EffectTimeMode::Direct;
  priors.effect_time = {lgp::PriorFamily::Uniform, 0.0, 9.0};
  lgp::BoundModel m(spec, ds, priors);

  auto names = m.param_names();
  CHECK(std::find(names.begin(), names.end(), "t_eff[id1]") != names.end());

  // t_eff is stored as t_obs - delta_t, so the slot round-trips through it
  lgp::Rng rng(3);
  Eigen::VectorXd u = m.random_init(rng);
  lgp::ParamVector pv = m.constrain(u);
  for (int i = 0; i < m.num_params(); ++i) {
    const ParamSlot& s = m.layout()[i];
    if (s.target == ParamSlot::Target::EffectTime) {
      double teff = m.get_value(pv, s);
      CHECK(teff > 0.0);
      CHECK(teff < 9.0);
      CHECK(teff == Approx(m.t_obs()[s.slot] - pv.kernel.delta_t[s.slot]).margin(1e-12));
      CHECK(m.kernel_chain_sign(s) == -1.0);
    } else {
      CHECK(m.kernel_chain_sign(s) == 1.0);
    }
  }
}

TEST_CASE("prior plus jacobian matches a finite-difference gradient") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec =
      testutil::spec_for("y ~ gp(age) + unc(het(id)*gp_vm(diseaseAge))", ds);
  lgp::PriorSpec priors = lgp::default_priors(ds, spec);
  lgp::BoundModel m(spec, ds, priors);

  lgp::Rng rng(9);
  Eigen::VectorXd u = m.random_init(rng);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.num_params());
  double lp = m.log_prior_jacobian(u, &g);
  REQUIRE(std::isfinite(lp));
  for (int i = 0; i < m.num_params(); ++i) {
    double eps = 1e-6;
    Eigen::VectorXd up = u, um = u;
    up[i] += eps;
    um[i] -= eps;
    double fd = (m.log_prior_jacobian(up) - m.log_prior_jacobian(um)) / (2 * eps);
    CHECK(g[i] == Approx(fd).margin(1e-5 * std::max(1.0, std::fabs(g[i]))));
  }
}

TEST_CASE("prior samples have finite density") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec =
      testutil::spec_for("y ~ gp(age) + unc(het(id)*gp_vm(diseaseAge)) + zs(group)", ds);
  lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));
  lgp::Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    lgp::ParamVector pv = m.sample_prior(rng);
    Eigen::VectorXd u = m.unconstrain(pv);
    CHECK(std::isfinite(m.log_prior_jacobian(u)));
  }
}

TEST_CASE("model construction errors") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  // two disease covariates in het/unc terms cannot mix; build a dataset with
  // a second maskable column to provoke it
  std::vector<lgp::CovariateColumn> cols;
  cols = ds.columns();
  lgp::CovariateColumn extra = ds.column("diseaseAge");
  extra.name = "otherAge";
  cols.push_back(extra);
  lgp::LongitudinalDataset ds2(cols, "y", ds.response(), "id", {}, {}, "age");

  lgp::ModelSpec bad =
      lgp::parse_formula("y ~ unc(gp_vm(diseaseAge)) + unc(gp_vm(otherAge))");
  lgp::validate_spec(bad, ds2);
  CHECK_THROWS(lgp::BoundModel(bad, ds2, lgp::default_priors(ds2, bad)));

  // gaussian response with a count family
  lgp::ModelSpec spec = lgp::parse_formula("y ~ gp(age)");
  spec.likelihood = lgp::LikelihoodFamily::Poisson;
  CHECK_THROWS(lgp::BoundModel(spec, ds, lgp::PriorSpec{}));
}

TEST_CASE("prior predictive draws") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec = testutil::spec_for("y ~ gp(age) + zs(group)", ds);
  lgp::BoundModel m(spec, ds, lgp::default_priors(ds, spec));

  Eigen::MatrixXd d1 = lgp::sample_prior_predictive(m, 25, 7);
  Eigen::MatrixXd d2 = lgp::sample_prior_predictive(m, 25, 7);
  Eigen::MatrixXd d3 = lgp::sample_prior_predictive(m, 25, 8);
  CHECK(d1.rows() == 25);
  CHECK(d1.cols() == ds.num_rows());
  CHECK(d1 == d2);
  CHECK(d1 != d3);
  CHECK(d1.allFinite());
  CHECK_THROWS(lgp::sample_prior_predictive(m, 0, 7));
}
