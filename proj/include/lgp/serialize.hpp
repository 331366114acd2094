#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgp/inference.hpp"
#include "lgp/model.hpp"
#include "lgp/relevance.hpp"
#include "lgp/simulate.hpp"
#include "lgp/version.hpp"

namespace lgp {

using json = nlohmann::json;

// JSON has no NaN; missing values round-trip as null.
inline json num_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

inline double num_from(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw Error("failed writing '" + path + "'");
}

// ---- dataset ----

inline json dataset_to_json(const LongitudinalDataset& ds) {
  json cols = json::array();
  for (const auto& c : ds.columns()) {
    json jc;
    jc["name"] = c.name;
    jc["kind"] = c.kind == CovariateKind::Continuous ? "continuous" : "categorical";
    jc["maskable"] = c.maskable;
    if (c.kind == CovariateKind::Continuous) {
      json vals = json::array();
      for (int i = 0; i < c.values.size(); ++i) {
        vals.push_back(c.missing[i] ? json(nullptr) : json(c.values[i]));
      }
      jc["values"] = std::move(vals);
      jc["center"] = c.center;
      jc["scale"] = c.scale;
    } else {
      jc["codes"] = c.codes;
      jc["levels"] = c.levels;
    }
    cols.push_back(std::move(jc));
  }
  json j;
  j["columns"] = std::move(cols);
  j["response_name"] = ds.response_name();
  j["response"] = std::vector<double>(ds.response().data(), ds.response().data() + ds.num_rows());
  j["id"] = ds.id_column();
  j["time"] = ds.time_column();
  if (ds.has_trials()) {
    j["trials"] = std::vector<double>(ds.trials().data(), ds.trials().data() + ds.num_rows());
  }
  if (ds.has_scaling()) {
    j["scaling"] = std::vector<double>(ds.scaling().data(), ds.scaling().data() + ds.num_rows());
  }
  return j;
}

inline LongitudinalDataset dataset_from_json(const json& j) {
  std::vector<CovariateColumn> cols;
  for (const auto& jc : j.at("columns")) {
    CovariateColumn c;
    c.name = jc.at("name").get<std::string>();
    c.kind = jc.at("kind").get<std::string>() == "continuous" ? CovariateKind::Continuous
                                                              : CovariateKind::Categorical;
    c.maskable = jc.at("maskable").get<bool>();
    if (c.kind == CovariateKind::Continuous) {
      const json& vals = jc.at("values");
      c.values.resize(static_cast<int>(vals.size()));
      c.missing.assign(vals.size(), 0);
      for (std::size_t i = 0; i < vals.size(); ++i) {
        c.values[static_cast<int>(i)] = num_from(vals[i]);
        if (vals[i].is_null()) c.missing[i] = 1;
      }
      c.center = jc.at("center").get<double>();
      c.scale = jc.at("scale").get<double>();
    } else {
      c.codes = jc.at("codes").get<std::vector<int>>();
      c.levels = jc.at("levels").get<std::vector<std::string>>();
    }
    cols.push_back(std::move(c));
  }
  auto vec = [&](const char* key) {
    Eigen::VectorXd v;
    if (j.contains(key)) {
      std::vector<double> raw = j.at(key).get<std::vector<double>>();
      v = Eigen::Map<Eigen::VectorXd>(raw.data(), static_cast<int>(raw.size()));
    }
    return v;
  };
  Eigen::VectorXd y = vec("response");
  return LongitudinalDataset(std::move(cols), j.at("response_name").get<std::string>(), y,
                             j.at("id").get<std::string>(), vec("trials"), vec("scaling"),
                             j.value("time", std::string()));
}

// ---- CSV sidecar schema ----

inline DataSchema schema_from_json(const json& j) {
  DataSchema s;
  s.response = j.at("response").get<std::string>();
  s.id = j.value("id", std::string("id"));
  s.time = j.value("time", std::string());
  s.trials = j.value("trials", std::string());
  s.scaling = j.value("scaling", std::string());
  if (!j.contains("columns") || !j.at("columns").is_object()) {
    throw Error("schema: 'columns' object is required");
  }
  for (const auto& [name, jc] : j.at("columns").items()) {
    ColumnSchema cs;
    std::string kind = jc.at("kind").get<std::string>();
    if (kind == "continuous") {
      cs.kind = CovariateKind::Continuous;
    } else if (kind == "categorical") {
      cs.kind = CovariateKind::Categorical;
    } else {
      throw Error("schema: column '" + name + "' has unknown kind '" + kind + "'");
    }
    cs.maskable = jc.value("maskable", false);
    if (jc.contains("levels")) cs.levels = jc.at("levels").get<std::vector<std::string>>();
    s.columns[name] = std::move(cs);
  }
  return s;
}

// ---- priors ----

inline json prior_to_json(const PriorDensity& p) {
  json j;
  j["family"] = to_string(p.family);
  j["a"] = p.a;
  j["b"] = p.b;
  return j;
}

inline PriorDensity prior_from_json(const json& j) {
  PriorDensity p;
  p.family = prior_family_from_string(j.at("family").get<std::string>());
  p.a = j.at("a").get<double>();
  p.b = j.at("b").get<double>();
  return p;
}

inline json priors_to_json(const PriorSpec& p) {
  json j;
  j["alpha"] = prior_to_json(p.alpha);
  j["lengthscale"] = prior_to_json(p.lengthscale);
  j["warp"] = prior_to_json(p.warp);
  j["sigma"] = prior_to_json(p.sigma);
  j["dispersion"] = prior_to_json(p.dispersion);
  j["beta_b1"] = p.beta_b1;
  j["beta_b2"] = p.beta_b2;
  j["effect_time"] = prior_to_json(p.effect_time);
  j["effect_time_mode"] = p.effect_time_mode == EffectTimeMode::OnDelta ? "on_delta" : "direct";
  j["vm_h"] = p.vm_h;
  return j;
}

// Partial override: keys absent from the JSON keep the base value.
inline PriorSpec priors_from_json(const json& j, PriorSpec base = PriorSpec()) {
  if (j.contains("alpha")) base.alpha = prior_from_json(j.at("alpha"));
  if (j.contains("lengthscale")) base.lengthscale = prior_from_json(j.at("lengthscale"));
  if (j.contains("warp")) base.warp = prior_from_json(j.at("warp"));
  if (j.contains("sigma")) base.sigma = prior_from_json(j.at("sigma"));
  if (j.contains("dispersion")) base.dispersion = prior_from_json(j.at("dispersion"));
  if (j.contains("beta_b1")) base.beta_b1 = j.at("beta_b1").get<double>();
  if (j.contains("beta_b2")) base.beta_b2 = j.at("beta_b2").get<double>();
  if (j.contains("effect_time")) base.effect_time = prior_from_json(j.at("effect_time"));
  if (j.contains("effect_time_mode")) {
    std::string m = j.at("effect_time_mode").get<std::string>();
    if (m == "on_delta") {
      base.effect_time_mode = EffectTimeMode::OnDelta;
    } else if (m == "direct") {
      base.effect_time_mode = EffectTimeMode::Direct;
    } else {
      throw Error("priors: effect_time_mode must be 'on_delta' or 'direct'");
    }
  }
  if (j.contains("vm_h")) base.vm_h = j.at("vm_h").get<double>();
  base.validate();
  return base;
}

// ---- sampler config ----

inline json sampler_config_to_json(const SamplerConfig& c) {
  json j;
  j["chains"] = c.chains;
  j["iters"] = c.iters;
  j["warmup"] = c.warmup;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["max_treedepth"] = c.max_treedepth;
  j["target_accept"] = c.target_accept;
  j["prior_only"] = c.prior_only;
  j["force_latent"] = c.force_latent;
  j["rhat_max"] = c.rhat_max;
  j["ess_min_per_chain"] = c.ess_min_per_chain;
  j["max_divergence_frac"] = c.max_divergence_frac;
  return j;
}

inline SamplerConfig sampler_config_from_json(const json& j) {
  SamplerConfig c;
  c.chains = j.at("chains").get<int>();
  c.iters = j.at("iters").get<int>();
  c.warmup = j.at("warmup").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.at("threads").get<int>();
  c.max_treedepth = j.at("max_treedepth").get<int>();
  c.target_accept = j.at("target_accept").get<double>();
  c.prior_only = j.at("prior_only").get<bool>();
  c.force_latent = j.at("force_latent").get<bool>();
  c.rhat_max = j.at("rhat_max").get<double>();
  c.ess_min_per_chain = j.at("ess_min_per_chain").get<double>();
  c.max_divergence_frac = j.at("max_divergence_frac").get<double>();
  return c;
}

// ---- fits ----

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  int rows = static_cast<int>(j.size());
  int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j.at(i);
    if (static_cast<int>(row.size()) != cols) throw Error("matrix: ragged rows");
    for (int k = 0; k < cols; ++k) m(i, k) = row.at(k).get<double>();
  }
  return m;
}

inline json fit_to_json(const BoundModel& m, const PosteriorFit& fit) {
  json j;
  j["format"] = "lgp-fit";
  j["version"] = version_string;
  j["formula"] = print_formula(m.spec());
  j["likelihood"] = to_string(m.spec().likelihood);
  j["priors"] = priors_to_json(m.priors());
  j["config"] = sampler_config_to_json(fit.config);
  j["dataset"] = dataset_to_json(m.data());
  j["method"] = fit.method;
  j["params"] = fit.param_names;
  j["draws"] = matrix_to_json(fit.draws);
  if (fit.is_latent()) j["latent"] = matrix_to_json(fit.latent);
  j["logp"] = std::vector<double>(fit.logp.data(), fit.logp.data() + fit.logp.size());
  json div = json::array();
  for (char d : fit.divergent) div.push_back(static_cast<int>(d));
  j["divergent"] = std::move(div);
  j["chains"] = fit.chains;
  j["iters"] = fit.iters;
  j["warmup"] = fit.warmup;
  j["seed"] = fit.seed;
  j["stepsizes"] = fit.stepsizes;
  j["accept_means"] = fit.accept_means;
  json diag;
  json params = json::array();
  for (const auto& pd : fit.diagnostics.params) {
    json p;
    p["name"] = pd.name;
    p["rhat"] = num_or_null(pd.rhat);
    p["ess_bulk"] = num_or_null(pd.ess_bulk);
    p["ess_tail"] = num_or_null(pd.ess_tail);
    params.push_back(std::move(p));
  }
  diag["params"] = std::move(params);
  diag["divergences"] = fit.diagnostics.divergences;
  diag["divergence_rate"] = fit.diagnostics.divergence_rate;
  diag["converged"] = fit.diagnostics.converged;
  diag["warnings"] = fit.diagnostics.warnings;
  j["diagnostics"] = std::move(diag);
  return j;
}

// Everything needed to rebuild a model and its posterior from a fit file.
struct LoadedFit {
  LongitudinalDataset dataset;
  ModelSpec spec;
  PriorSpec priors;
  PosteriorFit fit;
};

inline LoadedFit fit_from_json(const json& j) {
  if (j.value("format", std::string()) != "lgp-fit") {
    throw Error("not a fit file (missing format marker)");
  }
  LongitudinalDataset ds = dataset_from_json(j.at("dataset"));
  ModelSpec spec = parse_formula(j.at("formula").get<std::string>());
  spec.likelihood = likelihood_from_string(j.at("likelihood").get<std::string>());
  PriorSpec priors = priors_from_json(j.at("priors"));

  PosteriorFit fit;
  fit.method = j.at("method").get<std::string>();
  fit.param_names = j.at("params").get<std::vector<std::string>>();
  fit.draws = matrix_from_json(j.at("draws"));
  if (j.contains("latent")) fit.latent = matrix_from_json(j.at("latent"));
  std::vector<double> logp = j.at("logp").get<std::vector<double>>();
  fit.logp = Eigen::Map<Eigen::VectorXd>(logp.data(), static_cast<int>(logp.size()));
  for (const auto& d : j.at("divergent")) fit.divergent.push_back(d.get<int>() != 0);
  fit.chains = j.at("chains").get<int>();
  fit.iters = j.at("iters").get<int>();
  fit.warmup = j.at("warmup").get<int>();
  fit.seed = j.at("seed").get<std::uint64_t>();
  fit.stepsizes = j.at("stepsizes").get<std::vector<double>>();
  fit.accept_means = j.at("accept_means").get<std::vector<double>>();
  fit.config = sampler_config_from_json(j.at("config"));
  const json& diag = j.at("diagnostics");
  for (const auto& p : diag.at("params")) {
    fit.diagnostics.params.push_back({p.at("name").get<std::string>(), num_from(p.at("rhat")),
                                      num_from(p.at("ess_bulk")), num_from(p.at("ess_tail"))});
  }
  fit.diagnostics.divergences = diag.at("divergences").get<int>();
  fit.diagnostics.divergence_rate = diag.at("divergence_rate").get<double>();
  fit.diagnostics.converged = diag.at("converged").get<bool>();
  fit.diagnostics.warnings = diag.at("warnings").get<std::vector<std::string>>();
  return LoadedFit{std::move(ds), std::move(spec), std::move(priors), std::move(fit)};
}

// ---- relevance reports ----

inline json relevance_to_json(const RelevanceReport& rep) {
  json j;
  j["format"] = "lgp-relevance";
  j["version"] = version_string;
  j["components"] = rep.component_terms;
  j["relevance"] = std::vector<double>(rep.rel.data(), rep.rel.data() + rep.rel.size());
  j["p_noise"] = rep.p_noise;
  j["threshold"] = rep.threshold;
  json sel = json::array();
  for (int s : rep.selected) sel.push_back(rep.component_terms[s]);
  j["selected"] = std::move(sel);
  j["selected_indices"] = rep.selected;
  j["covariates"] = rep.covariates;
  j["covariate_relevance"] = std::vector<double>(
      rep.covariate_rel.data(), rep.covariate_rel.data() + rep.covariate_rel.size());
  j["selected_covariates"] = rep.selected_covariates;
  j["per_draw"] = matrix_to_json(rep.per_draw);
  return j;
}

// ---- simulation ----

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  c.num_individuals = j.value("num_individuals", c.num_individuals);
  c.num_timepoints = j.value("num_timepoints", c.num_timepoints);
  c.t_max = j.value("t_max", c.t_max);
  c.time_jitter = j.value("time_jitter", c.time_jitter);
  c.case_fraction = j.value("case_fraction", c.case_fraction);
  c.age_magnitude = j.value("age_magnitude", c.age_magnitude);
  c.age_lengthscale = j.value("age_lengthscale", c.age_lengthscale);
  c.id_magnitude = j.value("id_magnitude", c.id_magnitude);
  c.id_lengthscale = j.value("id_lengthscale", c.id_lengthscale);
  c.id_relevant = j.value("id_relevant", c.id_relevant);
  c.age_relevant = j.value("age_relevant", c.age_relevant);
  if (j.contains("covariates")) {
    for (const auto& jc : j.at("covariates")) {
      SimCovariateSpec s;
      s.name = jc.at("name").get<std::string>();
      std::string kind = jc.value("kind", std::string("continuous"));
      if (kind == "continuous") {
        s.kind = CovariateKind::Continuous;
      } else if (kind == "categorical") {
        s.kind = CovariateKind::Categorical;
      } else {
        throw Error("sim config: unknown covariate kind '" + kind + "'");
      }
      s.categories = jc.value("categories", s.categories);
      s.relevant = jc.value("relevant", s.relevant);
      s.magnitude = jc.value("magnitude", s.magnitude);
      s.interact_with_age = jc.value("interact_with_age", s.interact_with_age);
      s.lengthscale = jc.value("lengthscale", s.lengthscale);
      c.covariates.push_back(std::move(s));
    }
  }
  c.disease_present = j.value("disease_present", c.disease_present);
  c.disease_relevant = j.value("disease_relevant", c.disease_relevant);
  c.disease_magnitude = j.value("disease_magnitude", c.disease_magnitude);
  if (j.contains("disease_shape")) {
    std::string s = j.at("disease_shape").get<std::string>();
    if (s == "warped_gp") {
      c.disease_shape = DiseaseShape::WarpedGP;
    } else if (s == "bump") {
      c.disease_shape = DiseaseShape::Bump;
    } else {
      throw Error("sim config: disease_shape must be 'warped_gp' or 'bump'");
    }
  }
  c.disease_lengthscale = j.value("disease_lengthscale", c.disease_lengthscale);
  c.warp_steepness = j.value("warp_steepness", c.warp_steepness);
  c.bump_width = j.value("bump_width", c.bump_width);
  c.vm_h = j.value("vm_h", c.vm_h);
  c.num_affected = j.value("num_affected", c.num_affected);
  if (j.contains("shift")) {
    const json& js = j.at("shift");
    std::string kind = js.at("kind").get<std::string>();
    if (kind == "none") {
      c.shift_kind = ShiftKind::None;
    } else if (kind == "fixed") {
      c.shift_kind = ShiftKind::Fixed;
      c.shift_a = js.at("value").get<double>();
    } else if (kind == "exponential") {
      c.shift_kind = ShiftKind::Exponential;
      c.shift_a = js.at("mean").get<double>();
    } else if (kind == "uniform") {
      c.shift_kind = ShiftKind::Uniform;
      c.shift_a = js.at("lo").get<double>();
      c.shift_b = js.at("hi").get<double>();
    } else {
      throw Error("sim config: shift kind must be none|fixed|exponential|uniform");
    }
  }
  if (j.contains("family")) c.family = likelihood_from_string(j.at("family").get<std::string>());
  c.target_p_noise = j.value("target_p_noise", c.target_p_noise);
  c.nb_dispersion = j.value("nb_dispersion", c.nb_dispersion);
  c.nb_intercept = j.value("nb_intercept", c.nb_intercept);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline json sim_truth_to_json(const SimResult& r) {
  json j;
  j["format"] = "lgp-truth";
  json rel;
  for (const auto& [name, flag] : r.relevant) rel[name] = flag;
  j["relevant"] = std::move(rel);
  j["case_ids"] = r.case_ids;
  json aff = json::array();
  for (char a : r.affected) aff.push_back(a != 0);
  j["affected"] = std::move(aff);
  json et = json::array();
  for (double t : r.effect_times) et.push_back(num_or_null(t));
  j["effect_times"] = std::move(et);
  j["observed_times"] = r.observed_times;
  j["sigma"] = r.sigma;
  j["components"] = r.component_names;
  return j;
}

// ---- run manifests ----

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot hash '" + path + "'");
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

struct RunManifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  double duration_seconds = 0.0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

inline json manifest_to_json(const RunManifest& m) {
  json j;
  j["format"] = "lgp-manifest";
  j["version"] = version_string;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["duration_seconds"] = m.duration_seconds;
  json in = json::array(), out = json::array();
  for (const auto& p : m.inputs) {
    in.push_back(json{{"path", p}, {"fnv1a64", hex64(fnv1a64_file(p))}});
  }
  for (const auto& p : m.outputs) {
    out.push_back(json{{"path", p}, {"fnv1a64", hex64(fnv1a64_file(p))}});
  }
  j["inputs"] = std::move(in);
  j["outputs"] = std::move(out);
  return j;
}

}  // namespace lgp
