#include "zipg/simulation.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "zipg/em.hpp"
#include "zipg/parallel.hpp"
#include "zipg/special.hpp"

namespace zipg {

int ScenarioConfig::measurements_of(int subject) const {
  if (measurements_per_subject.size() == 1) return measurements_per_subject[0];
  return measurements_per_subject[subject];
}

int ScenarioConfig::n_obs() const {
  int total = 0;
  for (int i = 0; i < n_subjects; ++i) total += measurements_of(i);
  return total;
}

void ScenarioConfig::validate() const {
  if (n_subjects < 1) throw Error("scenario: need at least one subject");
  if (measurements_per_subject.size() != 1 &&
      static_cast<int>(measurements_per_subject.size()) != n_subjects) {
    throw Error("scenario: measurements_per_subject must have length 1 or n_subjects");
  }
  for (std::size_t i = 0; i < measurements_per_subject.size(); ++i) {
    if (measurements_per_subject[i] < 1) {
      throw Error("scenario: every subject needs at least one measurement");
    }
  }
  const int d1 = include_x2 ? 2 : 1;
  if (beta.size() != d1) {
    throw Error("scenario: beta has length " + std::to_string(beta.size()) +
                ", design implies d1 = " + std::to_string(d1));
  }
  if (beta_star.size() != 1) {
    throw Error("scenario: beta_star must have length 1 (coefficient on X1)");
  }
  if (gamma.size() != 1 && gamma.size() != 2) {
    throw Error("scenario: gamma must have length 1 (constant p) or 2 (zipg-full truth)");
  }
  if (depth_model == DepthModel::EmpiricalFile && empirical_depths.empty()) {
    throw Error("scenario: empirical depth model needs a nonempty depth list");
  }
  if (depth_model == DepthModel::Constant && !(constant_depth >= 1.0)) {
    throw Error("scenario: constant depth must be at least 1");
  }
}

CovariateDraw generate_covariates(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  const int n = config.n_subjects;
  const int N = config.n_obs();
  const int d1 = config.include_x2 ? 2 : 1;
  const double noise_sd = std::sqrt(config.x2_noise_var);

  CovariateDraw out;
  out.x.resize(N, d1);
  out.x_star.resize(n, 1);
  out.subject_of.reserve(N);

  int at = 0;
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double x2_subject = config.include_x2 ? rng.normal() : 0.0;
    out.x_star(i, 0) = x1;
    for (int j = 0; j < config.measurements_of(i); ++j) {
      out.x(at, 0) = x1;
      if (config.include_x2) out.x(at, 1) = x2_subject + noise_sd * rng.normal();
      out.subject_of.push_back(i);
      ++at;
    }
  }
  return out;
}

std::vector<double> generate_depths(const ScenarioConfig& config, int n_obs, Rng& rng) {
  std::vector<double> depths(n_obs);
  switch (config.depth_model) {
    case DepthModel::LogNormal:
      for (int i = 0; i < n_obs; ++i) {
        depths[i] = std::max(
            1.0, std::round(std::exp(config.depth_log_mean + config.depth_log_sd * rng.normal())));
      }
      break;
    case DepthModel::Constant:
      for (int i = 0; i < n_obs; ++i) depths[i] = std::round(config.constant_depth);
      break;
    case DepthModel::EmpiricalFile:
      for (int i = 0; i < n_obs; ++i) {
        depths[i] = config.empirical_depths[rng.uniform_below(config.empirical_depths.size())];
      }
      break;
  }
  return depths;
}

namespace {

long sample_binomial(long trials, double prob, Rng& rng) {
  if (prob <= 0.0) return 0;
  if (prob >= 1.0) return trials;
  if (trials > 1000000) {
    // Normal approximation for absurd depths; keeps the stress
    // generator usable without a full BTPE implementation.
    const double mean = static_cast<double>(trials) * prob;
    const double sd = std::sqrt(mean * (1.0 - prob));
    const double draw = std::round(mean + sd * rng.normal());
    return std::clamp(static_cast<long>(draw), 0L, trials);
  }
  long hits = 0;
  for (long t = 0; t < trials; ++t) hits += rng.bernoulli(prob) ? 1 : 0;
  return hits;
}

}  // namespace

std::vector<long> generate_counts(const ScenarioConfig& config, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& x_star,
                                  const std::vector<int>& subject_of,
                                  const std::vector<double>& depths, Rng& rng) {
  const int N = static_cast<int>(subject_of.size());
  std::vector<long> counts(N);
  for (int i = 0; i < N; ++i) {
    const int s = subject_of[i];
    const double eta = config.beta0 + x.row(i).dot(config.beta) + std::log(depths[i]);
    const double lambda = std::exp(eta);
    const double theta =
        std::exp(config.beta_star0 + x_star.row(s).dot(config.beta_star));

    double zi_logit = config.gamma[0];
    if (config.gamma.size() == 2) zi_logit += config.gamma[1] * x_star(s, 0);
    const double p = logistic(zi_logit);

    switch (config.generator) {
      case GeneratorKind::Zipg: {
        if (rng.bernoulli(p)) {
          counts[i] = 0;
        } else {
          const double u = theta < theta_poisson_floor() ? 1.0 : rng.gamma(1.0 / theta, theta);
          counts[i] = rng.poisson(lambda * u);
        }
        break;
      }
      case GeneratorKind::Pg: {
        const double u = theta < theta_poisson_floor() ? 1.0 : rng.gamma(1.0 / theta, theta);
        counts[i] = rng.poisson(lambda * u);
        break;
      }
      case GeneratorKind::ZiBetaBinomial: {
        if (rng.bernoulli(p)) {
          counts[i] = 0;
          break;
        }
        const auto trials = static_cast<long>(depths[i]);
        const double m = std::clamp(lambda / depths[i], 1e-12, 1.0 - 1e-9);
        // Match the Poisson-Gamma variance lambda(1 + lambda*theta):
        // Var(Binom-Beta) = M m (1-m) (1 + (M-1) rho).
        double rho = 0.0;
        if (trials > 1) {
          rho = ((1.0 + lambda * theta) / (1.0 - m) - 1.0) / (static_cast<double>(trials) - 1.0);
          rho = std::clamp(rho, 1e-12, 1.0 - 1e-9);
        }
        const double conc = (1.0 - rho) / rho;
        const double g1 = rng.gamma(m * conc, 1.0);
        const double g2 = rng.gamma((1.0 - m) * conc, 1.0);
        const double pi = g1 + g2 > 0.0 ? g1 / (g1 + g2) : m;
        counts[i] = sample_binomial(trials, pi, rng);
        break;
      }
    }
  }
  return counts;
}

ModelSpec fitting_spec(const ScenarioConfig& config) {
  ModelSpec spec;
  spec.d1 = config.include_x2 ? 2 : 1;
  spec.d2 = 1;
  spec.offset_mode = OffsetMode::LogDepth;
  spec.variant = Variant::Zipg;
  return spec;
}

LongitudinalDataset make_dataset(const ScenarioConfig& config, Rng& rng) {
  CovariateDraw cov = generate_covariates(config, rng);
  std::vector<double> depths = generate_depths(config, config.n_obs(), rng);
  std::vector<long> counts =
      generate_counts(config, cov.x, cov.x_star, cov.subject_of, depths, rng);

  LongitudinalDataset data;
  data.counts = std::move(counts);
  data.depths = std::move(depths);
  data.mean_covariates = std::move(cov.x);
  data.disp_covariates = std::move(cov.x_star);
  data.subject_of = std::move(cov.subject_of);
  return data;
}

ScenarioConfig baseline_scenario(double beta1, double beta_star1, double p, int m) {
  ScenarioConfig config;
  config.n_subjects = 20;
  config.measurements_per_subject = {m};
  config.beta = Eigen::Vector2d(beta1, 0.45);
  config.beta_star = Eigen::VectorXd::Constant(1, beta_star1);
  config.gamma = Eigen::VectorXd::Constant(1, gamma_of_p(p));
  return config;
}

namespace {

std::vector<std::string> coordinate_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  names.push_back("beta0");
  for (int j = 1; j <= spec.d1; ++j) names.push_back("beta" + std::to_string(j));
  names.push_back("beta_star0");
  for (int j = 1; j <= spec.d2; ++j) names.push_back("beta_star" + std::to_string(j));
  for (int j = 0; j < spec.n_gamma(); ++j) {
    names.push_back(j == 0 ? "gamma" : "gamma" + std::to_string(j));
  }
  return names;
}

Eigen::VectorXd truth_vector(const ScenarioConfig& scenario, const ModelSpec& spec) {
  ParamVector truth = ParamVector::zeros(spec);
  truth.beta0() = scenario.beta0;
  truth.beta() = scenario.beta;
  truth.beta_star0() = scenario.beta_star0;
  truth.beta_star() = scenario.beta_star;
  truth.gamma()[0] = scenario.gamma[0];
  return truth.values;
}

struct ReplicateOutcome {
  Eigen::VectorXd estimate;
  Eigen::VectorXd boot_se;
  std::vector<bool> covered;
  std::vector<bool> rejected;
  double p_obs = 0.0;
  bool ok = false;
};

}  // namespace

MonteCarloSummary run_experiment(const ExperimentConfig& config) {
  config.scenario.validate();
  if (config.n_replicates < 1) throw Error("run_experiment: need at least one replicate");
  if (config.scenario.gamma.size() != 1) {
    throw Error("run_experiment: harness expects constant-p truth; use "
                "sensitivity_bic_experiment for zipg-full truth");
  }
  const ModelSpec spec = fitting_spec(config.scenario);
  const Eigen::VectorXd truth = truth_vector(config.scenario, spec);
  const int k = spec.n_params();
  const Rng root(config.scenario.seed);

  for (const ExperimentTest& t : config.tests) {
    if (t.coordinate < 0 || t.coordinate >= k) {
      throw Error("run_experiment: test coordinate out of range");
    }
  }

  bool need_bootstrap = config.compute_cis;
  for (const ExperimentTest& t : config.tests) {
    if (t.method == TestMethod::BWald) need_bootstrap = true;
  }

  std::vector<ReplicateOutcome> outcomes(config.n_replicates);
  parallel_for(config.n_replicates, config.workers, [&](int rep) {
    Rng rng = root.substream(static_cast<std::uint64_t>(rep));
    ReplicateOutcome& out = outcomes[rep];
    try {
      const LongitudinalDataset data = make_dataset(config.scenario, rng);
      out.p_obs = data.observed_zero_proportion();

      InferenceSettings infer;
      infer.workers = 1;  // parallelism lives at the replicate level

      // One nonparametric bootstrap per replicate provides the
      // covariance for every single-coefficient Wald test and CI.
      const std::uint64_t boot_seed = rng.next_u64();
      out.boot_se.resize(k);
      out.covered.assign(k, false);
      if (need_bootstrap) {
        const TestReport boot =
            bootstrap_wald(data, spec, LinearHypothesis::single_coefficient(k, 0),
                           config.n_bootstrap, config.resample_unit, boot_seed, infer);
        out.estimate = boot.omega_hat.values;
        for (int j = 0; j < k; ++j) {
          out.boot_se[j] = std::sqrt(boot.covariance(j, j));
          const ConfidenceInterval ci = confidence_interval(
              out.estimate[j], boot.draws, j, config.ci_level, config.ci_method);
          out.covered[j] = truth[j] >= ci.lower && truth[j] <= ci.upper;
        }
      } else {
        out.estimate = fit(data, spec, infer.fit).omega_hat.values;
        for (int j = 0; j < k; ++j) {
          out.boot_se[j] = std::numeric_limits<double>::quiet_NaN();
        }
      }

      out.rejected.resize(config.tests.size());
      for (std::size_t t = 0; t < config.tests.size(); ++t) {
        const ExperimentTest& test = config.tests[t];
        const LinearHypothesis hyp =
            LinearHypothesis::single_coefficient(k, test.coordinate);
        double p_value = 1.0;
        switch (test.method) {
          case TestMethod::BWald: {
            const double sd = out.boot_se[test.coordinate];
            const double stat = (out.estimate[test.coordinate] / sd) *
                                (out.estimate[test.coordinate] / sd);
            p_value = chi2_sf(stat, 1);
            break;
          }
          case TestMethod::PbWald: {
            const std::uint64_t s = rng.next_u64();
            p_value = parametric_bootstrap_wald(data, spec, hyp, config.n_bootstrap, s, infer)
                          .p_value;
            break;
          }
          case TestMethod::Lrt:
            p_value = likelihood_ratio_test(data, spec, hyp, infer).p_value;
            break;
          case TestMethod::Wald:
            p_value = wald_observed_information(data, spec, hyp, infer).p_value;
            break;
        }
        out.rejected[t] = p_value < config.alpha;
      }
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;
    }
  });

  int n_ok = 0;
  for (const auto& o : outcomes) n_ok += o.ok ? 1 : 0;
  const int n_failed = config.n_replicates - n_ok;
  if (n_failed > 0.05 * config.n_replicates) {
    throw Error("run_experiment: " + std::to_string(n_failed) + " of " +
                std::to_string(config.n_replicates) + " replicates failed");
  }

  MonteCarloSummary summary;
  summary.n_replicates = config.n_replicates;
  summary.n_failed = n_failed;

  const std::vector<std::string> names = coordinate_names(spec);
  summary.coordinates.resize(k);
  for (int j = 0; j < k; ++j) {
    CoordinateSummary& cs = summary.coordinates[j];
    cs.name = names[j];
    cs.truth = truth[j];
    double sum_err = 0.0, sum_sq = 0.0, sum_se = 0.0, sum_cov = 0.0;
    for (const auto& o : outcomes) {
      if (!o.ok) continue;
      const double err = o.estimate[j] - truth[j];
      sum_err += err;
      sum_sq += err * err;
      sum_se += o.boot_se[j];
      sum_cov += o.covered[j] ? 1.0 : 0.0;
    }
    cs.avg_bias = sum_err / n_ok;
    cs.avg_se = sum_se / n_ok;
    cs.rmse = std::sqrt(sum_sq / n_ok);
    cs.coverage = need_bootstrap ? sum_cov / n_ok : std::numeric_limits<double>::quiet_NaN();
    if (n_ok > 1) {
      double ss = 0.0;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const double err = o.estimate[j] - truth[j];
        ss += (err - cs.avg_bias) * (err - cs.avg_bias);
      }
      cs.bias_se = std::sqrt(ss / (n_ok - 1));
    } else {
      cs.bias_se = std::numeric_limits<double>::quiet_NaN();
    }
  }

  summary.tests.resize(config.tests.size());
  for (std::size_t t = 0; t < config.tests.size(); ++t) {
    summary.tests[t].test = config.tests[t];
    double sum = 0.0;
    for (const auto& o : outcomes) {
      if (o.ok && o.rejected[t]) sum += 1.0;
    }
    summary.tests[t].rejection_rate = sum / n_ok;
  }

  double sum_pobs = 0.0;
  for (const auto& o : outcomes) {
    if (o.ok) sum_pobs += o.p_obs;
  }
  summary.avg_observed_zero_proportion = sum_pobs / n_ok;
  return summary;
}

std::vector<double> sensitivity_bic_experiment(const std::vector<double>& gamma1_grid, int L,
                                               std::uint64_t seed, int workers, int n_subjects,
                                               int m) {
  for (double g : gamma1_grid) {
    if (g < 0.0) throw Error("sensitivity_bic_experiment: grid values must be >= 0");
  }
  if (L < 1) throw Error("sensitivity_bic_experiment: need at least one replicate");

  std::vector<double> proportions(gamma1_grid.size(), 0.0);
  for (std::size_t gi = 0; gi < gamma1_grid.size(); ++gi) {
    ScenarioConfig scenario;
    scenario.n_subjects = n_subjects;
    scenario.measurements_per_subject = {m};
    scenario.include_x2 = false;
    scenario.beta = Eigen::VectorXd::Constant(1, 1.0);
    scenario.beta_star = Eigen::VectorXd::Constant(1, 1.0);
    scenario.gamma = Eigen::Vector2d(-0.847, gamma1_grid[gi]);
    scenario.seed = seed + gi;

    ModelSpec zipg_spec = fitting_spec(scenario);
    ModelSpec full_spec = zipg_spec;
    full_spec.variant = Variant::ZipgFull;
    full_spec.d3 = 1;

    const Rng root(scenario.seed);
    std::vector<int> zipg_wins(L, 0);
    std::vector<int> valid(L, 0);
    parallel_for(L, workers, [&](int rep) {
      Rng rng = root.substream(static_cast<std::uint64_t>(rep));
      try {
        LongitudinalDataset data = make_dataset(scenario, rng);
        const FitResult plain = fit(data, zipg_spec);
        data.zi_covariates = data.mean_covariates;  // X1 only design
        const FitResult full = fit_full(data, full_spec);
        zipg_wins[rep] = plain.bic < full.bic ? 1 : 0;
        valid[rep] = 1;
      } catch (const Error&) {
        valid[rep] = 0;
      }
    });
    int ok = 0, wins = 0;
    for (int rep = 0; rep < L; ++rep) {
      ok += valid[rep];
      wins += zipg_wins[rep];
    }
    if (ok == 0) throw Error("sensitivity_bic_experiment: all replicates failed");
    proportions[gi] = static_cast<double>(wins) / static_cast<double>(ok);
  }
  return proportions;
}

}  // namespace zipg
