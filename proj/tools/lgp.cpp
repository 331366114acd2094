#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <lgp/lgp.hpp>

namespace {

int log_level() {
  const char* env = std::getenv("LGP_LOG");
  if (env == nullptr) return 0;
  std::string v(env);
  if (v == "debug") return 2;
  if (v == "info") return 1;
  return 0;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[lgp] " << msg << std::endl;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void write_manifest(const std::string& command, lgp::json config, std::uint64_t seed, double secs,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  lgp::RunManifest m;
  m.command = command;
  m.config = std::move(config);
  m.seed = seed;
  m.duration_seconds = secs;
  m.inputs = inputs;
  m.outputs = outputs;
  if (outputs.empty()) return;
  lgp::write_json_file(outputs.front() + ".manifest.json", lgp::manifest_to_json(m));
}

lgp::LongitudinalDataset load_data(const std::string& data_path, const std::string& schema_path) {
  lgp::DataSchema schema = lgp::schema_from_json(lgp::read_json_file(schema_path));
  lgp::LongitudinalDataset ds = lgp::LongitudinalDataset::load_csv(data_path, schema);
  info("loaded " + std::to_string(ds.num_rows()) + " rows, " +
       std::to_string(ds.num_covariates()) + " covariates from " + data_path);
  return ds;
}

// Sidecar schema describing a dataset we just wrote, so it can be fed back
// into `lgp fit` without hand-writing one.
lgp::json dataset_schema_json(const lgp::LongitudinalDataset& ds) {
  lgp::json cols;
  for (const auto& c : ds.columns()) {
    lgp::json jc;
    jc["kind"] = c.kind == lgp::CovariateKind::Continuous ? "continuous" : "categorical";
    if (c.maskable) jc["maskable"] = true;
    if (c.kind == lgp::CovariateKind::Categorical) jc["levels"] = c.levels;
    cols[c.name] = std::move(jc);
  }
  lgp::json j;
  j["columns"] = std::move(cols);
  j["response"] = ds.response_name();
  j["id"] = ds.id_column();
  if (!ds.time_column().empty()) j["time"] = ds.time_column();
  if (ds.has_trials()) j["trials"] = "trials";
  if (ds.has_scaling()) j["scaling"] = "scaling";
  return j;
}

void print_fit_summary(const lgp::PosteriorFit& fit) {
  std::cout << "method: " << fit.method << "  chains: " << fit.chains << "  iters: " << fit.iters
            << "  warmup: " << fit.warmup << "  seed: " << fit.seed << "\n";
  std::cout << std::left << std::setw(18) << "param" << std::right << std::setw(12) << "mean"
            << std::setw(12) << "sd" << std::setw(9) << "rhat" << std::setw(10) << "ess_bulk"
            << std::setw(10) << "ess_tail" << "\n";
  int P = static_cast<int>(fit.param_names.size());
  for (int i = 0; i < P; ++i) {
    double mean = fit.draws.col(i).mean();
    double sd = std::sqrt((fit.draws.col(i).array() - mean).square().sum() /
                          std::max(1, fit.total_draws() - 1));
    const auto& d = fit.diagnostics.params[i];
    std::cout << std::left << std::setw(18) << fit.param_names[i] << std::right << std::fixed
              << std::setprecision(4) << std::setw(12) << mean << std::setw(12) << sd
              << std::setprecision(3) << std::setw(9) << d.rhat << std::setprecision(1)
              << std::setw(10) << d.ess_bulk << std::setw(10) << d.ess_tail << "\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
  }
  std::cout << "divergences: " << fit.diagnostics.divergences << " ("
            << 100.0 * fit.diagnostics.divergence_rate << "%)  converged: "
            << (fit.diagnostics.converged ? "yes" : "no") << "\n";
  for (const auto& w : fit.diagnostics.warnings) std::cout << "warning: " << w << "\n";
}

struct FitArgs {
  std::string data, schema, formula, priors, out = "fit.json";
  std::string likelihood = "gaussian";
  lgp::SamplerConfig cfg;
  bool no_normalize = false;
};

int run_fit(const FitArgs& a) {
  Timer timer;
  lgp::LongitudinalDataset raw = load_data(a.data, a.schema);
  lgp::ModelSpec spec = lgp::parse_formula(a.formula);
  spec.likelihood = lgp::likelihood_from_string(a.likelihood);
  if (spec.response != raw.response_name()) {
    throw lgp::Error("formula response '" + spec.response + "' does not match schema response '" +
                     raw.response_name() + "'");
  }
  lgp::LongitudinalDataset ds = a.no_normalize ? raw : lgp::normalize_for_model(raw, spec);
  lgp::PriorSpec priors = lgp::default_priors(ds, spec);
  if (!a.priors.empty()) {
    priors = lgp::priors_from_json(lgp::read_json_file(a.priors), priors);
  }
  lgp::BoundModel model(spec, ds, priors);
  info("sampling " + std::to_string(a.cfg.chains) + " chains x " + std::to_string(a.cfg.iters) +
       " iterations");
  lgp::PosteriorFit fit = lgp::sample_posterior(model, a.cfg);
  lgp::write_json_file(a.out, lgp::fit_to_json(model, fit));
  print_fit_summary(fit);

  lgp::json config;
  config["formula"] = a.formula;
  config["likelihood"] = a.likelihood;
  config["normalize"] = !a.no_normalize;
  config["priors"] = lgp::priors_to_json(priors);
  config["sampler"] = lgp::sampler_config_to_json(a.cfg);
  std::vector<std::string> inputs{a.data, a.schema};
  if (!a.priors.empty()) inputs.push_back(a.priors);
  write_manifest("fit", config, a.cfg.seed, timer.seconds(), inputs, {a.out});
  info("wrote " + a.out);
  return fit.diagnostics.converged ? 0 : 2;
}

struct RelevanceArgs {
  std::string fit, out;
  double threshold = 95.0;
  bool allow_unconverged = false;
  int max_draws = 0;
};

int run_relevance(const RelevanceArgs& a, bool select_only) {
  Timer timer;
  lgp::LoadedFit lf = lgp::fit_from_json(lgp::read_json_file(a.fit));
  lgp::BoundModel model(lf.spec, lf.dataset, lf.priors);
  if (!lf.fit.diagnostics.converged && !a.allow_unconverged) {
    std::cerr << "error: fit has not converged";
    for (const auto& w : lf.fit.diagnostics.warnings) std::cerr << "\n  " << w;
    std::cerr << "\nrerun with more iterations or pass --allow-unconverged\n";
    return 2;
  }
  lgp::RelevanceReport rep =
      lgp::component_relevances(model, lf.fit, a.threshold, true, a.max_draws);
  lgp::write_json_file(a.out, lgp::relevance_to_json(rep));

  if (select_only) {
    for (const auto& cov : rep.selected_covariates) std::cout << cov << "\n";
    if (rep.selected.empty()) {
      std::cout << "(no components selected; noise proportion "
                << std::setprecision(4) << rep.p_noise << " alone reaches the threshold)\n";
    }
  } else {
    std::cout << std::left << std::setw(28) << "component" << std::right << std::setw(12)
              << "relevance" << std::setw(10) << "selected" << "\n";
    for (std::size_t j = 0; j < rep.component_terms.size(); ++j) {
      bool sel = std::find(rep.selected.begin(), rep.selected.end(), static_cast<int>(j)) !=
                 rep.selected.end();
      std::cout << std::left << std::setw(28) << rep.component_terms[j] << std::right
                << std::fixed << std::setprecision(4) << std::setw(12) << rep.rel[j]
                << std::setw(10) << (sel ? "yes" : "no") << "\n";
      std::cout.unsetf(std::ios::fixed);
    }
    std::cout << "p_noise: " << std::setprecision(4) << rep.p_noise << "\n";
  }

  lgp::json config;
  config["threshold"] = a.threshold;
  config["max_draws"] = a.max_draws;
  write_manifest(select_only ? "select" : "relevance", config, lf.fit.seed, timer.seconds(),
                 {a.fit}, {a.out});
  return 0;
}

struct SimulateArgs {
  std::string config, out = "data.csv", truth, out_schema;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_simulate(const SimulateArgs& a) {
  Timer timer;
  lgp::SimConfig sc = lgp::sim_config_from_json(lgp::read_json_file(a.config));
  if (a.seed_given) sc.seed = a.seed;
  lgp::SimResult r = lgp::simulate(sc);
  r.dataset.write_csv(a.out);
  std::vector<std::string> outputs{a.out};
  if (!a.truth.empty()) {
    lgp::write_json_file(a.truth, lgp::sim_truth_to_json(r));
    outputs.push_back(a.truth);
  }
  if (!a.out_schema.empty()) {
    lgp::write_json_file(a.out_schema, dataset_schema_json(r.dataset));
    outputs.push_back(a.out_schema);
  }
  std::cout << "wrote " << r.dataset.num_rows() << " rows to " << a.out << "\n";
  write_manifest("simulate", lgp::read_json_file(a.config), sc.seed, timer.seconds(), {a.config},
                 outputs);
  return 0;
}

struct PriorPredictArgs {
  std::string data, schema, formula, priors, out = "prior_predict.csv";
  std::string likelihood = "gaussian";
  int draws = 100;
  std::uint64_t seed = 1;
  bool no_normalize = false;
};

int run_prior_predict(const PriorPredictArgs& a) {
  Timer timer;
  lgp::LongitudinalDataset raw = load_data(a.data, a.schema);
  lgp::ModelSpec spec = lgp::parse_formula(a.formula);
  spec.likelihood = lgp::likelihood_from_string(a.likelihood);
  lgp::LongitudinalDataset ds = a.no_normalize ? raw : lgp::normalize_for_model(raw, spec);
  lgp::PriorSpec priors = lgp::default_priors(ds, spec);
  if (!a.priors.empty()) {
    priors = lgp::priors_from_json(lgp::read_json_file(a.priors), priors);
  }
  lgp::BoundModel model(spec, ds, priors);
  Eigen::MatrixXd draws = lgp::sample_prior_predictive(model, a.draws, a.seed);
  std::ofstream out(a.out);
  if (!out) throw lgp::Error("cannot write '" + a.out + "'");
  out << "draw,row,y\n";
  for (int s = 0; s < draws.rows(); ++s) {
    for (int i = 0; i < draws.cols(); ++i) {
      out << s << "," << i << "," << lgp::detail::format_double(draws(s, i)) << "\n";
    }
  }
  out.close();
  lgp::json config;
  config["formula"] = a.formula;
  config["likelihood"] = a.likelihood;
  config["draws"] = a.draws;
  std::vector<std::string> inputs{a.data, a.schema};
  if (!a.priors.empty()) inputs.push_back(a.priors);
  write_manifest("prior-predict", config, a.seed, timer.seconds(), inputs, {a.out});
  std::cout << "wrote " << a.draws << " prior predictive draws to " << a.out << "\n";
  return 0;
}

struct ReportArgs {
  std::string fit, out = "report.csv";
  int draws = 50;
};

// Tidy per-draw component curves for external plotting.
int run_report(const ReportArgs& a) {
  Timer timer;
  lgp::LoadedFit lf = lgp::fit_from_json(lgp::read_json_file(a.fit));
  lgp::BoundModel model(lf.spec, lf.dataset, lf.priors);
  int S = lf.fit.total_draws();
  int n = model.num_rows();
  int J = model.num_components();
  int take = a.draws > 0 ? std::min(a.draws, S) : S;

  const lgp::CovariateColumn* time_col = nullptr;
  if (!lf.dataset.time_column().empty()) time_col = &lf.dataset.column(lf.dataset.time_column());

  std::ofstream out(a.out);
  if (!out) throw lgp::Error("cannot write '" + a.out + "'");
  out << "draw,component,row,time,value\n";
  Eigen::VectorXd fj(n);
  for (int k = 0; k < take; ++k) {
    int s = k * S / take;
    lgp::ComponentPosterior cp;
    if (!lf.fit.is_latent()) {
      lgp::ParamVector pv = model.params_from_constrained(lf.fit.draws.row(s));
      cp = lgp::component_posterior_gaussian(model, pv, nullptr, false);
    }
    for (int j = 0; j < J; ++j) {
      if (lf.fit.is_latent()) {
        fj = lf.fit.latent.row(s).segment(j * n, n);
      } else {
        fj = cp.mean.row(j);
      }
      const std::string& term = lf.spec.components[j].term();
      for (int i = 0; i < n; ++i) {
        out << s << "," << term << "," << i << ",";
        if (time_col != nullptr && !time_col->missing[i]) {
          out << lgp::detail::format_double(time_col->center +
                                            time_col->scale * time_col->values[i]);
        }
        out << "," << lgp::detail::format_double(fj[i]) << "\n";
      }
    }
  }
  out.close();
  lgp::json config;
  config["draws"] = a.draws;
  write_manifest("report", config, lf.fit.seed, timer.seconds(), {a.fit}, {a.out});
  std::cout << "wrote component curves for " << take << " draws to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Additive Gaussian process regression for longitudinal data"};
  app.set_version_flag("--version", std::string(lgp::version_string));
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "Fit a model and write the posterior to JSON");
  fit->add_option("--data", fa.data, "CSV data file")->required();
  fit->add_option("--schema", fa.schema, "JSON schema describing the CSV columns")->required();
  fit->add_option("--formula", fa.formula, "model formula, e.g. \"y ~ gp(age) + zs(sex)*gp(age)\"")
      ->required();
  fit->add_option("--likelihood", fa.likelihood, "gaussian|poisson|nb|binomial|bb");
  fit->add_option("--chains", fa.cfg.chains, "number of MCMC chains");
  fit->add_option("--iters", fa.cfg.iters, "post-warmup iterations per chain");
  fit->add_option("--warmup", fa.cfg.warmup, "warmup iterations per chain");
  fit->add_option("--seed", fa.cfg.seed, "random seed");
  fit->add_option("--threads", fa.cfg.threads, "worker threads for parallel chains");
  fit->add_option("--priors", fa.priors, "JSON file overriding default priors");
  fit->add_option("--max-depth", fa.cfg.max_treedepth, "maximum trajectory doublings");
  fit->add_option("--target-accept", fa.cfg.target_accept, "dual averaging target");
  fit->add_flag("--force-latent", fa.cfg.force_latent, "sample latent functions even for gaussian models");
  fit->add_flag("--prior-only", fa.cfg.prior_only, "sample from the prior (no likelihood)");
  fit->add_flag("--no-normalize", fa.no_normalize, "skip covariate normalization");
  fit->add_option("--out", fa.out, "output fit file");

  RelevanceArgs ra;
  CLI::App* rel = app.add_subcommand("relevance", "Variance decomposition of a fit");
  rel->add_option("--fit", ra.fit, "fit JSON produced by `lgp fit`")->required();
  rel->add_option("--threshold", ra.threshold, "selection threshold in percent");
  rel->add_option("--max-draws", ra.max_draws, "thin to at most this many draws (0 = all)");
  rel->add_flag("--allow-unconverged", ra.allow_unconverged, "proceed despite failed diagnostics");
  rel->add_option("--out", ra.out, "output report file");

  RelevanceArgs sa;
  CLI::App* sel = app.add_subcommand("select", "Select covariates by the threshold rule");
  sel->add_option("--fit", sa.fit, "fit JSON produced by `lgp fit`")->required();
  sel->add_option("--threshold", sa.threshold, "selection threshold in percent");
  sel->add_option("--max-draws", sa.max_draws, "thin to at most this many draws (0 = all)");
  sel->add_flag("--allow-unconverged", sa.allow_unconverged, "proceed despite failed diagnostics");
  sel->add_option("--out", sa.out, "output report file");

  SimulateArgs ma;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic longitudinal dataset");
  sim->add_option("--config", ma.config, "JSON simulation config")->required();
  sim->add_option("--out", ma.out, "output CSV");
  sim->add_option("--truth", ma.truth, "write ground truth JSON here");
  sim->add_option("--out-schema", ma.out_schema, "write a matching data schema here");
  CLI::Option* sim_seed = sim->add_option("--seed", ma.seed, "override the config seed");

  PriorPredictArgs pa;
  CLI::App* pp = app.add_subcommand("prior-predict", "Draw responses from the prior predictive");
  pp->add_option("--data", pa.data, "CSV data file")->required();
  pp->add_option("--schema", pa.schema, "JSON schema describing the CSV columns")->required();
  pp->add_option("--formula", pa.formula, "model formula")->required();
  pp->add_option("--likelihood", pa.likelihood, "gaussian|poisson|nb|binomial|bb");
  pp->add_option("--priors", pa.priors, "JSON file overriding default priors");
  pp->add_option("--draws", pa.draws, "number of draws");
  pp->add_option("--seed", pa.seed, "random seed");
  pp->add_flag("--no-normalize", pa.no_normalize, "skip covariate normalization");
  pp->add_option("--out", pa.out, "output CSV");

  ReportArgs ta;
  CLI::App* rep = app.add_subcommand("report", "Export per-draw component curves as tidy CSV");
  rep->add_option("--fit", ta.fit, "fit JSON produced by `lgp fit`")->required();
  rep->add_option("--draws", ta.draws, "number of draws to export (0 = all)");
  rep->add_option("--out", ta.out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*fit) return run_fit(fa);
    if (*rel) {
      if (ra.out.empty()) ra.out = "relevance.json";
      return run_relevance(ra, false);
    }
    if (*sel) {
      if (sa.out.empty()) sa.out = "select.json";
      return run_relevance(sa, true);
    }
    if (*sim) {
      ma.seed_given = sim_seed->count() > 0;
      return run_simulate(ma);
    }
    if (*pp) return run_prior_predict(pa);
    if (*rep) return run_report(ta);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
