// Command-line interface: fit, test, simulate, benchmark, gof.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "zipg/em.hpp"
#include "zipg/inference.hpp"
#include "zipg/io.hpp"
#include "zipg/model.hpp"
#include "zipg/parallel.hpp"
#include "zipg/simulation.hpp"
#include "zipg/special.hpp"

namespace {

using namespace zipg;

std::uint64_t name_key(const std::string& name) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : name) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct CommonOptions {
  std::string counts_path;
  std::string covariates_path;
  std::string mean_cols;
  std::string disp_cols;
  std::string zi_cols;
  std::string offset = "depth";
  std::string depth_column;
  std::string out_dir = ".";
  double min_pobs = 0.1;
  double max_pobs = 0.9;
  std::uint64_t seed = 1;
  int workers = 1;
  int t_max = 100;
  double eps_tol = 1e-8;
  double gtol = 1e-6;
  double poisson_floor = kDefaultThetaPoissonFloor;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--counts", opt.counts_path, "taxa x sample count table")->required();
  cmd->add_option("--covariates", opt.covariates_path,
                  "per-sample covariates with 'subject' and 'sample' columns")
      ->required();
  cmd->add_option("--mean-cols", opt.mean_cols, "comma-separated mean-model covariates");
  cmd->add_option("--disp-cols", opt.disp_cols, "comma-separated dispersion-model covariates");
  cmd->add_option("--zi-cols", opt.zi_cols,
                  "comma-separated zero-inflation covariates (selects the full variant)");
  cmd->add_option("--offset", opt.offset, "offset mode: depth, median-ratios, none");
  cmd->add_option("--depth-col", opt.depth_column,
                  "covariate column holding sequencing depth (default: column sums)");
  cmd->add_option("--min-pobs", opt.min_pobs, "lower zero-proportion filter bound");
  cmd->add_option("--max-pobs", opt.max_pobs, "upper zero-proportion filter bound");
  cmd->add_option("--seed", opt.seed, "root random seed");
  cmd->add_option("--workers", opt.workers, "worker threads");
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--t-max", opt.t_max, "maximum EM iterations");
  cmd->add_option("--eps-tol", opt.eps_tol, "EM relative tolerance");
  cmd->add_option("--gtol", opt.gtol, "M-step gradient tolerance");
  cmd->add_option("--poisson-floor", opt.poisson_floor,
                  "dispersion below which the Poisson limit is used");
}

RunConfig make_config(const CommonOptions& opt) {
  RunConfig config;
  config.mean_cols = split_csv(opt.mean_cols);
  config.disp_cols = split_csv(opt.disp_cols);
  config.zi_cols = split_csv(opt.zi_cols);
  config.offset_mode = offset_mode_from_string(opt.offset);
  config.depth_column = opt.depth_column;
  config.min_pobs = opt.min_pobs;
  config.max_pobs = opt.max_pobs;
  config.seed = opt.seed;
  config.workers = opt.workers;
  config.fit.t_max = opt.t_max;
  config.fit.eps_tol = opt.eps_tol;
  config.fit.m_step.gtol = opt.gtol;
  set_theta_poisson_floor(opt.poisson_floor);
  return config;
}

std::vector<std::string> coefficient_names(const RunConfig& config) {
  std::vector<std::string> names;
  names.push_back("beta0");
  for (const auto& c : config.mean_cols) names.push_back("beta[" + c + "]");
  names.push_back("beta_star0");
  for (const auto& c : config.disp_cols) names.push_back("beta_star[" + c + "]");
  names.push_back("gamma0");
  for (const auto& c : config.zi_cols) names.push_back("gamma[" + c + "]");
  return names;
}

FitResult fit_taxon(const LongitudinalDataset& data, const ModelSpec& spec,
                    const FitSettings& settings) {
  return spec.variant == Variant::ZipgFull ? fit_full(data, spec, settings)
                                           : fit(data, spec, settings);
}

void report_excluded(const FilterResult& filtered) {
  for (const auto& e : filtered.excluded) {
    std::cerr << "excluded taxon " << e.taxon << ": " << e.reason << "\n";
  }
}

int run_fit(const CommonOptions& opt) {
  const RunConfig config = make_config(opt);
  LoadedData loaded = load_dataset(opt.counts_path, opt.covariates_path, config);
  const FilterResult filtered = filter_taxa(loaded.table, config.min_pobs, config.max_pobs);
  report_excluded(filtered);
  loaded.table = filtered.kept;

  const int n_taxa = loaded.table.n_taxa();
  std::vector<FitRecord> records(n_taxa);
  const auto names = coefficient_names(config);
  parallel_for(n_taxa, config.workers, [&](int t) {
    const LongitudinalDataset data = loaded.dataset_for_taxon(t);
    const FitResult result = fit_taxon(data, loaded.spec, config.fit);
    FitRecord& r = records[t];
    r.taxon = loaded.table.taxa[t];
    r.coefficients = names;
    r.estimates.assign(result.omega_hat.values.begin(), result.omega_hat.values.end());
    r.loglik = result.loglik;
    r.bic = result.bic;
    r.aic = result.aic;
    r.n_em_iterations = result.n_em_iterations;
    r.converged = result.converged;
    r.p_obs = data.observed_zero_proportion();
    r.warnings = result.warnings;
  });
  std::filesystem::create_directories(opt.out_dir);
  write_fit_records(opt.out_dir + "/fits", records, config);
  std::cout << "wrote " << opt.out_dir << "/fits.tsv and fits.json (" << n_taxa
            << " taxa)\n";
  return 0;
}

struct TestOptions {
  int n_bootstrap = 200;
  std::string method = "bwald";
  std::string resample = "measurement";
  std::string ci = "normal";
  double ci_level = 0.95;
  double alpha = 0.05;
  double fdr_q = 0.05;
  bool joint_fdr = false;
};

int run_test(const CommonOptions& opt, const TestOptions& topt) {
  RunConfig config = make_config(opt);
  config.n_bootstrap = topt.n_bootstrap;
  config.test_method = test_method_from_string(topt.method);
  config.resample_unit = resample_unit_from_string(topt.resample);
  config.ci_method = ci_method_from_string(topt.ci);
  config.ci_level = topt.ci_level;
  config.alpha = topt.alpha;
  config.fdr_q = topt.fdr_q;
  config.joint_fdr_family = topt.joint_fdr;

  LoadedData loaded = load_dataset(opt.counts_path, opt.covariates_path, config);
  const FilterResult filtered = filter_taxa(loaded.table, config.min_pobs, config.max_pobs);
  report_excluded(filtered);
  loaded.table = filtered.kept;

  const ModelSpec& spec = loaded.spec;
  const int n_taxa = loaded.table.n_taxa();
  const int k = spec.n_params();
  ParamVector probe = ParamVector::zeros(spec);

  struct Target {
    int coordinate;
    std::string name;
    std::string family;
  };
  std::vector<Target> targets;
  for (int j = 0; j < spec.d1; ++j) {
    targets.push_back({probe.idx_beta(j), "beta[" + config.mean_cols[j] + "]", "mean"});
  }
  for (int j = 0; j < spec.d2; ++j) {
    targets.push_back(
        {probe.idx_beta_star(j), "beta_star[" + config.disp_cols[j] + "]", "dispersion"});
  }
  if (targets.empty()) {
    throw Error("test: no covariate coefficients to test (empty --mean-cols/--disp-cols)");
  }

  std::vector<std::vector<TestRecord>> per_taxon(n_taxa);
  parallel_for(n_taxa, config.workers, [&](int t) {
    const LongitudinalDataset data = loaded.dataset_for_taxon(t);
    InferenceSettings infer;
    infer.fit = config.fit;
    infer.workers = 1;
    const std::uint64_t taxon_seed = config.seed ^ name_key(loaded.table.taxa[t]);

    // One nonparametric bootstrap provides the covariance and draws
    // for every coefficient; pbWald/LRT p-values are computed per
    // coefficient on top of it.
    const TestReport boot = bootstrap_wald(
        data, spec, LinearHypothesis::single_coefficient(k, targets[0].coordinate),
        config.n_bootstrap, config.resample_unit, taxon_seed, infer);

    Eigen::MatrixXd jack;
    if (config.ci_method == CiMethod::Bca) {
      FitResult base;
      base.omega_hat = boot.omega_hat;
      jack = jackknife_estimates(data, spec, base, infer);
    }

    for (std::size_t w = 0; w < targets.size(); ++w) {
      const Target& target = targets[w];
      TestRecord rec;
      rec.taxon = loaded.table.taxa[t];
      rec.coefficient = target.name;
      rec.family = target.family;
      rec.estimate = boot.omega_hat.values[target.coordinate];
      rec.boot_se = std::sqrt(boot.covariance(target.coordinate, target.coordinate));
      rec.method = to_string(config.test_method);

      switch (config.test_method) {
        case TestMethod::BWald: {
          const double stat = (rec.estimate / rec.boot_se) * (rec.estimate / rec.boot_se);
          rec.p = chi2_sf(stat, 1);
          break;
        }
        case TestMethod::PbWald: {
          const auto hyp = LinearHypothesis::single_coefficient(k, target.coordinate);
          rec.p = parametric_bootstrap_wald(data, spec, hyp, config.n_bootstrap,
                                            taxon_seed ^ (w + 1), infer)
                      .p_value;
          break;
        }
        case TestMethod::Lrt: {
          const auto hyp = LinearHypothesis::single_coefficient(k, target.coordinate);
          rec.p = likelihood_ratio_test(data, spec, hyp, infer).p_value;
          break;
        }
        case TestMethod::Wald: {
          const auto hyp = LinearHypothesis::single_coefficient(k, target.coordinate);
          rec.p = wald_observed_information(data, spec, hyp, infer).p_value;
          break;
        }
      }

      Eigen::VectorXd jack_col;
      const Eigen::VectorXd* jack_ptr = nullptr;
      if (config.ci_method == CiMethod::Bca) {
        jack_col = jack.col(target.coordinate);
        jack_ptr = &jack_col;
      }
      const ConfidenceInterval ci =
          confidence_interval(rec.estimate, boot.draws, target.coordinate, config.ci_level,
                              config.ci_method, jack_ptr);
      rec.ci_lo = ci.lower;
      rec.ci_hi = ci.upper;
      per_taxon[t].push_back(std::move(rec));
    }
  });

  std::vector<TestRecord> records;
  for (auto& rows : per_taxon) {
    for (auto& r : rows) records.push_back(std::move(r));
  }

  // FDR control, by hypothesis family unless asked to pool.
  auto adjust = [&](const std::string& family) {
    std::vector<std::size_t> idx;
    std::vector<double> ps;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (family.empty() || records[i].family == family) {
        idx.push_back(i);
        ps.push_back(records[i].p);
      }
    }
    if (ps.empty()) return;
    const FdrResult fdr = bh_fdr(ps, config.fdr_q);
    for (std::size_t i = 0; i < idx.size(); ++i) records[idx[i]].q = fdr.q_values[i];
  };
  if (config.joint_fdr_family) {
    adjust("");
  } else {
    adjust("mean");
    adjust("dispersion");
  }

  std::filesystem::create_directories(opt.out_dir);
  write_test_records(opt.out_dir + "/tests", records, config);
  std::cout << "wrote " << opt.out_dir << "/tests.tsv and tests.json (" << records.size()
            << " hypotheses across " << n_taxa << " taxa)\n";
  return 0;
}

int run_gof(const CommonOptions& opt) {
  const RunConfig config = make_config(opt);
  LoadedData loaded = load_dataset(opt.counts_path, opt.covariates_path, config);
  const FilterResult filtered = filter_taxa(loaded.table, config.min_pobs, config.max_pobs);
  report_excluded(filtered);
  loaded.table = filtered.kept;

  const int n_taxa = loaded.table.n_taxa();
  std::vector<GofRecord> records(n_taxa);
  parallel_for(n_taxa, config.workers, [&](int t) {
    const LongitudinalDataset data = loaded.dataset_for_taxon(t);
    const FitResult result = fit_taxon(data, loaded.spec, config.fit);
    const std::uint64_t taxon_seed = config.seed ^ name_key(loaded.table.taxa[t]);
    const KsResult ks = ks_goodness_of_fit(data, loaded.spec, result, taxon_seed);

    GofRecord& r = records[t];
    r.taxon = loaded.table.taxa[t];
    r.ks_statistic = ks.statistic;
    r.ks_p = ks.p_value;

    // Quantile table of observed counts vs a model-simulated sample,
    // for external plotting.
    std::vector<double> observed(data.counts.begin(), data.counts.end());
    std::sort(observed.begin(), observed.end());
    Rng rng(taxon_seed + 1);
    std::vector<double> predicted;
    for (int rep = 0; rep < 10; ++rep) {
      Rng sub = rng.substream(rep);
      const LongitudinalDataset sim =
          simulate_counts_from_params(data, loaded.spec, result.omega_hat, sub);
      for (long w : sim.counts) predicted.push_back(static_cast<double>(w));
    }
    std::sort(predicted.begin(), predicted.end());
    auto quantile = [](const std::vector<double>& sorted, double q) {
      const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      if (lo + 1 >= sorted.size()) return sorted.back();
      return sorted[lo] + (h - std::floor(h)) * (sorted[lo + 1] - sorted[lo]);
    };
    for (int g = 0; g <= 20; ++g) {
      const double q = g / 20.0;
      r.quantile_grid.push_back(q);
      r.observed_quantiles.push_back(quantile(observed, q));
      r.predicted_quantiles.push_back(quantile(predicted, q));
    }
  });
  std::filesystem::create_directories(opt.out_dir);
  write_gof_records(opt.out_dir + "/gof", records, config);
  std::cout << "wrote " << opt.out_dir << "/gof.tsv and gof.json (" << n_taxa << " taxa)\n";
  return 0;
}

int run_simulate(const std::string& experiment_path, const std::string& out_dir, int workers,
                 std::uint64_t seed, int L, int B) {
  ExperimentConfig config = load_experiment_config(experiment_path);
  if (workers > 0) config.workers = workers;
  if (seed != 0) config.scenario.seed = seed;
  if (L > 0) config.n_replicates = L;
  if (B > 0) config.n_bootstrap = B;
  const MonteCarloSummary summary = run_experiment(config);
  std::filesystem::create_directories(out_dir);
  write_summary(out_dir + "/summary", summary, config);
  std::cout << "wrote " << out_dir << "/summary.tsv and summary.json (L="
            << summary.n_replicates << ", failed=" << summary.n_failed << ")\n";
  for (const auto& c : summary.coordinates) {
    std::cout << "  " << c.name << ": bias=" << c.avg_bias << " avg_se=" << c.avg_se
              << " rmse=" << c.rmse << " coverage=" << c.coverage << "\n";
  }
  for (const auto& t : summary.tests) {
    std::cout << "  " << to_string(t.test.method) << " on coordinate " << t.test.coordinate
              << ": rejection rate " << t.rejection_rate << "\n";
  }
  return 0;
}

int run_benchmark(int n_subjects, int m, int B, int workers, std::uint64_t seed) {
  ScenarioConfig scenario = baseline_scenario(0.0, 1.0, 0.5, m);
  scenario.n_subjects = n_subjects;
  scenario.seed = seed;
  Rng rng(seed);
  const LongitudinalDataset data = make_dataset(scenario, rng);
  const ModelSpec spec = fitting_spec(scenario);

  const auto t0 = std::chrono::steady_clock::now();
  const FitResult base = fit(data, spec);
  const auto t1 = std::chrono::steady_clock::now();

  InferenceSettings infer;
  infer.workers = workers;
  const TestReport report =
      bootstrap_wald(data, spec, LinearHypothesis::single_coefficient(spec.n_params(), 1), B,
                     ResampleUnit::Measurement, seed, infer);
  const auto t2 = std::chrono::steady_clock::now();

  const auto ms = [](auto a, auto b) {
    return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count() / 1000.0;
  };
  std::cout << "N=" << data.n_obs() << " subjects=" << n_subjects << " B=" << B
            << " workers=" << workers << "\n";
  std::cout << "cold fit: " << ms(t0, t1) << " ms (" << base.n_em_iterations
            << " EM iterations, loglik " << base.loglik << ")\n";
  std::cout << "bootstrap: " << ms(t1, t2) << " ms total, " << ms(t1, t2) / B
            << " ms per warm refit, failures " << report.n_bootstrap_failed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-inflated Poisson-Gamma regression for longitudinal count data"};
  app.require_subcommand(1);

  CommonOptions fit_opt, test_opt_common, gof_opt;
  TestOptions test_opt;

  auto* cmd_fit = app.add_subcommand("fit", "fit the model per taxon");
  add_common(cmd_fit, fit_opt);

  auto* cmd_test = app.add_subcommand("test", "hypothesis tests with FDR control per taxon");
  add_common(cmd_test, test_opt_common);
  cmd_test->add_option("--B", test_opt.n_bootstrap, "bootstrap replicates");
  cmd_test->add_option("--method", test_opt.method, "bwald, pbwald, lrt, or wald");
  cmd_test->add_option("--resample", test_opt.resample, "measurement or subject");
  cmd_test->add_option("--ci", test_opt.ci, "normal, quantile, or bca");
  cmd_test->add_option("--ci-level", test_opt.ci_level, "confidence level");
  cmd_test->add_option("--alpha", test_opt.alpha, "test level");
  cmd_test->add_option("--q", test_opt.fdr_q, "FDR level");
  cmd_test->add_flag("--joint-fdr", test_opt.joint_fdr,
                     "adjust mean and dispersion families together");

  std::string experiment_path, sim_out = ".";
  int sim_workers = 0, sim_L = 0, sim_B = 0;
  std::uint64_t sim_seed = 0;
  auto* cmd_sim = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  cmd_sim->add_option("--experiment", experiment_path, "experiment description JSON")
      ->required();
  cmd_sim->add_option("--out", sim_out, "output directory");
  cmd_sim->add_option("--workers", sim_workers, "worker threads (overrides file)");
  cmd_sim->add_option("--seed", sim_seed, "root seed (overrides file)");
  cmd_sim->add_option("--L", sim_L, "replicates (overrides file)");
  cmd_sim->add_option("--B", sim_B, "bootstrap replicates (overrides file)");

  int bench_n = 20, bench_m = 25, bench_B = 200, bench_workers = 1;
  std::uint64_t bench_seed = 1;
  auto* cmd_bench = app.add_subcommand("benchmark", "time fitting and bootstrap");
  cmd_bench->add_option("--subjects", bench_n, "number of subjects");
  cmd_bench->add_option("--m", bench_m, "measurements per subject");
  cmd_bench->add_option("--B", bench_B, "bootstrap replicates");
  cmd_bench->add_option("--workers", bench_workers, "worker threads");
  cmd_bench->add_option("--seed", bench_seed, "seed");

  auto* cmd_gof = app.add_subcommand("gof", "goodness-of-fit diagnostics per taxon");
  add_common(cmd_gof, gof_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fit->parsed()) return run_fit(fit_opt);
    if (cmd_test->parsed()) return run_test(test_opt_common, test_opt);
    if (cmd_sim->parsed())
      return run_simulate(experiment_path, sim_out, sim_workers, sim_seed, sim_L, sim_B);
    if (cmd_bench->parsed())
      return run_benchmark(bench_n, bench_m, bench_B, bench_workers, bench_seed);
    if (cmd_gof->parsed()) return run_gof(gof_opt);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
