#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "helpers.hpp"

using Catch::Approx;
using lgp::json;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content = "") {
    path = "/tmp/lgp_ser_" + name;
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("numbers with missingness") {
  CHECK(lgp::num_or_null(1.5) == json(1.5));
  CHECK(lgp::num_or_null(std::numeric_limits<double>::quiet_NaN()).is_null());
  CHECK(lgp::num_from(json(2.25)) == 2.25);
  CHECK(std::isnan(lgp::num_from(json(nullptr))));
}

TEST_CASE("dataset json round-trip") {
  SECTION("masked covariates survive as nulls") {
    lgp::LongitudinalDataset ds = testutil::disease_dataset();
    json j = lgp::dataset_to_json(ds);
    // control rows of the disease-age column serialize as null
    bool any_null = false;
    for (const auto& jc : j.at("columns")) {
      if (jc.at("name") == "diseaseAge") {
        for (const auto& v : jc.at("values")) any_null |= v.is_null();
      }
    }
    CHECK(any_null);
    CHECK(lgp::dataset_from_json(j) == ds);
  }
  SECTION("normalization state survives") {
    lgp::LongitudinalDataset raw = testutil::disease_dataset();
    lgp::ModelSpec spec = testutil::spec_for("y ~ gp(age) + gp_vm(diseaseAge)", raw);
    lgp::LongitudinalDataset ds = lgp::normalize_for_model(raw, spec);
    CHECK(lgp::dataset_from_json(lgp::dataset_to_json(ds)) == ds);
  }
  SECTION("trials and scaling survive") {
    lgp::LongitudinalDataset base = testutil::tiny_dataset();
    std::vector<lgp::CovariateColumn> cols = base.columns();
    Eigen::VectorXd y(8), trials(8), scaling(8);
    for (int i = 0; i < 8; ++i) {
      y[i] = i % 4;
      trials[i] = 5;
      scaling[i] = 0.25 * i;
    }
    lgp::LongitudinalDataset ds(cols, "y", y, "id", trials, scaling, "age");
    lgp::LongitudinalDataset back = lgp::dataset_from_json(lgp::dataset_to_json(ds));
    CHECK(back == ds);
    CHECK(back.has_trials());
    CHECK(back.has_scaling());
  }
}

TEST_CASE("schema from json") {
  json j = json::parse(R"({
    "response": "y",
    "id": "subject",
    "time": "age",
    "trials": "n",
    "columns": {
      "subject": {"kind": "categorical"},
      "age": {"kind": "continuous"},
      "onsetAge": {"kind": "continuous", "maskable": true},
      "arm": {"kind": "categorical", "levels": ["treated", "placebo"]}
    }
  })");
  lgp::DataSchema s = lgp::schema_from_json(j);
  CHECK(s.response == "y");
  CHECK(s.id == "subject");
  CHECK(s.time == "age");
  CHECK(s.trials == "n");
  CHECK(s.scaling.empty());
  CHECK(s.columns.at("age").kind == lgp::CovariateKind::Continuous);
  CHECK(s.columns.at("onsetAge").maskable);
  CHECK_FALSE(s.columns.at("age").maskable);
  CHECK(s.columns.at("arm").levels == std::vector<std::string>{"treated", "placebo"});

  CHECK(lgp::schema_from_json(json::parse(R"({"response":"y","columns":{}})")).id == "id");
  CHECK_THROWS_AS(lgp::schema_from_json(json::parse(R"({"response":"y"})")), lgp::Error);
  CHECK_THROWS_AS(lgp::schema_from_json(json::parse(
                      R"({"response":"y","columns":{"x":{"kind":"wavy"}}})")),
                  lgp::Error);
}

TEST_CASE("priors json") {
  lgp::PriorSpec p;
  p.alpha = {lgp::PriorFamily::Exponential, 2.0, 0.0};
  p.lengthscale = {lgp::PriorFamily::LogNormal, 0.4, 0.9};
  p.vm_h = 0.03;
  p.beta_b1 = 0.5;
  p.effect_time_mode = lgp::EffectTimeMode::Direct;
  p.effect_time = {lgp::PriorFamily::Uniform, 0.0, 10.0};

  json j = lgp::priors_to_json(p);
  lgp::PriorSpec q = lgp::priors_from_json(j);
  CHECK(q.alpha.family == p.alpha.family);
  CHECK(q.alpha.a == p.alpha.a);
  CHECK(q.lengthscale.b == 0.9);
  CHECK(q.vm_h == 0.03);
  CHECK(q.beta_b1 == 0.5);
  CHECK(q.effect_time_mode == lgp::EffectTimeMode::Direct);
  CHECK(q.effect_time.family == lgp::PriorFamily::Uniform);

  SECTION("partial override keeps the base") {
    lgp::PriorSpec base;
    json only = json::parse(R"({"lengthscale": {"family": "lognormal", "a": 0.3, "b": 0.7}})");
    lgp::PriorSpec merged = lgp::priors_from_json(only, base);
    CHECK(merged.lengthscale.a == 0.3);
    CHECK(merged.alpha.family == base.alpha.family);
    CHECK(merged.sigma.a == base.sigma.a);
    CHECK(merged.vm_h == base.vm_h);
  }
  SECTION("bad values are rejected") {
    CHECK_THROWS_AS(lgp::priors_from_json(json::parse(R"({"effect_time_mode": "sideways"})")),
                    lgp::Error);
    CHECK_THROWS_AS(lgp::priors_from_json(json::parse(R"({"vm_h": 0.7})")), lgp::Error);
  }
}

TEST_CASE("sampler config json round-trip") {
  lgp::SamplerConfig c;
  c.chains = 3;
  c.iters = 77;
  c.warmup = 55;
  c.seed = 12345;
  c.threads = 2;
  c.max_treedepth = 8;
  c.target_accept = 0.9;
  c.prior_only = true;
  c.force_latent = true;
  c.rhat_max = 1.02;
  c.ess_min_per_chain = 250.0;
  c.max_divergence_frac = 0.05;
  lgp::SamplerConfig back = lgp::sampler_config_from_json(lgp::sampler_config_to_json(c));
  CHECK(back.chains == 3);
  CHECK(back.iters == 77);
  CHECK(back.warmup == 55);
  CHECK(back.seed == 12345);
  CHECK(back.threads == 2);
  CHECK(back.max_treedepth == 8);
  CHECK(back.target_accept == 0.9);
  CHECK(back.prior_only);
  CHECK(back.force_latent);
  CHECK(back.rhat_max == 1.02);
  CHECK(back.ess_min_per_chain == 250.0);
  CHECK(back.max_divergence_frac == 0.05);
}

TEST_CASE("matrix json round-trip") {
  Eigen::MatrixXd m(2, 3);
  m << 1.5, -2.25, 1e-12, 3.0, 0.1, -7.75;
  CHECK(lgp::matrix_from_json(lgp::matrix_to_json(m)) == m);
  CHECK(lgp::matrix_from_json(json::array()).size() == 0);
  CHECK_THROWS_AS(lgp::matrix_from_json(json::parse("[[1,2],[3]]")), lgp::Error);
}

TEST_CASE("fit json round-trip") {
  lgp::LongitudinalDataset ds = testutil::tiny_dataset();
  lgp::ModelSpec spec = testutil::spec_for("y ~ gp(age) + zs(sex)*gp(age)", ds);
  lgp::BoundModel m(spec, ds, lgp::PriorSpec{});
  lgp::SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iters = 60;
  cfg.warmup = 150;
  cfg.seed = 31;

  auto check_round_trip = [&](const lgp::PosteriorFit& fit) {
    json j = lgp::fit_to_json(m, fit);
    CHECK(j.at("format") == "lgp-fit");
    CHECK(j.at("formula") == lgp::print_formula(spec));
    lgp::LoadedFit back = lgp::fit_from_json(j);
    CHECK(back.dataset == ds);
    CHECK(lgp::print_formula(back.spec) == lgp::print_formula(spec));
    CHECK(back.spec.likelihood == spec.likelihood);
    CHECK(back.fit.method == fit.method);
    CHECK(back.fit.param_names == fit.param_names);
    CHECK(back.fit.draws == fit.draws);
    CHECK(back.fit.latent == fit.latent);
    CHECK(back.fit.logp == fit.logp);
    CHECK(back.fit.divergent == fit.divergent);
    CHECK(back.fit.chains == fit.chains);
    CHECK(back.fit.iters == fit.iters);
    CHECK(back.fit.warmup == fit.warmup);
    CHECK(back.fit.seed == fit.seed);
    CHECK(back.fit.stepsizes == fit.stepsizes);
    CHECK(back.fit.diagnostics.converged == fit.diagnostics.converged);
    CHECK(back.fit.diagnostics.warnings == fit.diagnostics.warnings);
    CHECK(back.fit.diagnostics.params.size() == fit.diagnostics.params.size());
    CHECK(back.fit.config.seed == fit.config.seed);
    // the rebuilt model accepts the stored draws
    lgp::BoundModel m2(back.spec, back.dataset, back.priors);
    CHECK(m2.num_params() == back.fit.draws.cols());
  };

  lgp::PosteriorFit marg = lgp::sample_posterior(m, cfg);
  check_round_trip(marg);
  cfg.force_latent = true;
  lgp::PosteriorFit lat = lgp::sample_posterior(m, cfg);
  check_round_trip(lat);

  CHECK_THROWS_WITH(lgp::fit_from_json(json::parse(R"({"draws": []})")),
                    Catch::Matchers::ContainsSubstring("format"));
}

TEST_CASE("relevance json") {
  lgp::RelevanceReport rep;
  rep.component_terms = {"gp(age)", "zs(sex)"};
  rep.rel.resize(2);
  rep.rel << 0.6, 0.15;
  rep.p_noise = 0.25;
  rep.per_draw.resize(2, 3);
  rep.per_draw << 0.6, 0.15, 0.25, 0.6, 0.15, 0.25;
  rep.selected = {0};
  rep.threshold = 80.0;
  rep.covariates = {"age", "sex"};
  rep.covariate_rel.resize(2);
  rep.covariate_rel << 0.6, 0.15;
  rep.selected_covariates = {"age"};

  json j = lgp::relevance_to_json(rep);
  CHECK(j.at("format") == "lgp-relevance");
  CHECK(j.at("selected") == json::array({"gp(age)"}));
  CHECK(j.at("selected_indices") == json::array({0}));
  CHECK(j.at("relevance")[0] == 0.6);
  CHECK(j.at("p_noise") == 0.25);
  CHECK(j.at("threshold") == 80.0);
  CHECK(j.at("covariates") == json::array({"age", "sex"}));
  CHECK(j.at("per_draw").size() == 2);
}

TEST_CASE("sim config json") {
  SECTION("defaults from an empty object") {
    lgp::SimConfig c = lgp::sim_config_from_json(json::object());
    lgp::SimConfig d;
    CHECK(c.num_individuals == d.num_individuals);
    CHECK(c.t_max == d.t_max);
    CHECK(c.family == d.family);
    CHECK(c.shift_kind == lgp::ShiftKind::None);
  }
  SECTION("full object") {
    json j = json::parse(R"({
      "num_individuals": 10, "num_timepoints": 4, "t_max": 120,
      "case_fraction": 0.4, "disease_present": true, "disease_shape": "bump",
      "num_affected": 2, "family": "nb", "nb_intercept": 0.5, "seed": 42,
      "covariates": [
        {"name": "sex", "kind": "categorical", "categories": 2, "relevant": true,
         "interact_with_age": true},
        {"name": "w", "relevant": false}
      ],
      "shift": {"kind": "uniform", "lo": 3, "hi": 9}
    })");
    lgp::SimConfig c = lgp::sim_config_from_json(j);
    CHECK(c.num_individuals == 10);
    CHECK(c.t_max == 120.0);
    CHECK(c.disease_present);
    CHECK(c.disease_shape == lgp::DiseaseShape::Bump);
    CHECK(c.num_affected == 2);
    CHECK(c.family == lgp::LikelihoodFamily::NegBinomial);
    CHECK(c.nb_intercept == 0.5);
    CHECK(c.seed == 42);
    REQUIRE(c.covariates.size() == 2);
    CHECK(c.covariates[0].kind == lgp::CovariateKind::Categorical);
    CHECK(c.covariates[0].interact_with_age);
    CHECK(c.covariates[1].kind == lgp::CovariateKind::Continuous);
    CHECK(c.shift_kind == lgp::ShiftKind::Uniform);
    CHECK(c.shift_a == 3.0);
    CHECK(c.shift_b == 9.0);
  }
  SECTION("shift kinds") {
    lgp::SimConfig f =
        lgp::sim_config_from_json(json::parse(R"({"shift": {"kind": "fixed", "value": 7}})"));
    CHECK(f.shift_kind == lgp::ShiftKind::Fixed);
    CHECK(f.shift_a == 7.0);
    lgp::SimConfig e = lgp::sim_config_from_json(
        json::parse(R"({"shift": {"kind": "exponential", "mean": 12}})"));
    CHECK(e.shift_kind == lgp::ShiftKind::Exponential);
    CHECK(e.shift_a == 12.0);
    CHECK_THROWS_AS(
        lgp::sim_config_from_json(json::parse(R"({"shift": {"kind": "spiral"}})")),
        lgp::Error);
    CHECK_THROWS_AS(
        lgp::sim_config_from_json(json::parse(R"({"disease_shape": "cone"})")), lgp::Error);
  }
}

TEST_CASE("sim truth json") {
  lgp::SimConfig cfg;
  cfg.num_individuals = 4;
  cfg.num_timepoints = 3;
  cfg.disease_present = true;
  cfg.num_affected = 1;
  cfg.seed = 5;
  lgp::SimResult sim = lgp::simulate(cfg);
  json j = lgp::sim_truth_to_json(sim);
  CHECK(j.at("format") == "lgp-truth");
  CHECK(j.at("case_ids") == json(sim.case_ids));
  int nulls = 0;
  for (const auto& v : j.at("effect_times")) nulls += v.is_null() ? 1 : 0;
  CHECK(nulls == 1);
  CHECK(j.at("relevant").at("age") == true);
}

TEST_CASE("json files") {
  TempFile f("roundtrip.json");
  json j = {{"a", 1}, {"b", json::array({1.5, nullptr})}};
  lgp::write_json_file(f.path, j);
  CHECK(lgp::read_json_file(f.path) == j);
  CHECK_THROWS_AS(lgp::read_json_file("/tmp/lgp_ser_no_such_file.json"), lgp::Error);
  TempFile bad("bad.json", "{not json");
  CHECK_THROWS_AS(lgp::read_json_file(bad.path), lgp::Error);
}

TEST_CASE("run manifests") {
  TempFile abc("abc.bin", "abc");
  TempFile empty("empty.bin", "");
  CHECK(lgp::hex64(lgp::fnv1a64_file(abc.path)) == "e71fa2190541574b");
  CHECK(lgp::hex64(lgp::fnv1a64_file(empty.path)) == "cbf29ce484222325");
  CHECK_THROWS_AS(lgp::fnv1a64_file("/tmp/lgp_ser_missing.bin"), lgp::Error);

  lgp::RunManifest m;
  m.command = "fit";
  m.config = {{"chains", 2}};
  m.seed = 9;
  m.duration_seconds = 1.25;
  m.inputs = {abc.path};
  m.outputs = {empty.path};
  json j = lgp::manifest_to_json(m);
  CHECK(j.at("format") == "lgp-manifest");
  CHECK(j.at("command") == "fit");
  CHECK(j.at("inputs")[0].at("fnv1a64") == "e71fa2190541574b");
  CHECK(j.at("outputs")[0].at("path") == empty.path);
  CHECK(j.at("seed") == 9);
}
