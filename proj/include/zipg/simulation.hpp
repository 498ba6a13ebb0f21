// Synthetic data generators and the Monte Carlo harness for type-I
// error, power, coverage, and model-sensitivity experiments.
#ifndef ZIPG_SIMULATION_HPP
#define ZIPG_SIMULATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "zipg/inference.hpp"
#include "zipg/model.hpp"
#include "zipg/rng.hpp"

namespace zipg {

enum class GeneratorKind { Zipg, Pg, ZiBetaBinomial };
enum class DepthModel { LogNormal, Constant, EmpiricalFile };

// True data-generating process for one experiment. Covariates follow
// the two-column design: X1 is a per-subject Bernoulli(1/2) group
// indicator (entering both the mean and dispersion models), X2 is a
// per-measurement longitudinal covariate X2_i + eps_ij with
// X2_i ~ N(0,1), eps_ij ~ N(0, x2_noise_var).
struct ScenarioConfig {
  int n_subjects = 20;
  std::vector<int> measurements_per_subject = {25};  // recycled if length 1

  bool include_x2 = true;  // drop to reproduce the group-only designs
  double x2_noise_var = 0.1;

  double beta0 = -4.23;
  Eigen::VectorXd beta;       // length d1 (2 with X2, else 1)
  double beta_star0 = 0.6;
  Eigen::VectorXd beta_star;  // length 1 (coefficient on X1)
  // Zero inflation: length 1 = constant logit(p); length 2 = zipg-full
  // truth logit(p_ij) = gamma[0] + gamma[1] * X1.
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(1);

  GeneratorKind generator = GeneratorKind::Zipg;
  DepthModel depth_model = DepthModel::LogNormal;
  double depth_log_mean = 9.0;
  double depth_log_sd = 0.5;
  double constant_depth = 10000.0;
  std::vector<double> empirical_depths;

  std::uint64_t seed = 1;

  int n_obs() const;
  int measurements_of(int subject) const;
  void validate() const;
};

struct CovariateDraw {
  Eigen::MatrixXd x;        // N x d1 mean-model covariates
  Eigen::MatrixXd x_star;   // n x 1 dispersion covariates (= X1)
  std::vector<int> subject_of;
};

CovariateDraw generate_covariates(const ScenarioConfig& config, Rng& rng);

std::vector<double> generate_depths(const ScenarioConfig& config, int n_obs, Rng& rng);

// Hierarchical count draws: Bernoulli zero mask, then
// Gamma(1/theta, theta) -> Poisson(lambda * U). The pg variant skips
// the mask; zi-beta-binomial draws the success probability from a
// Beta with mean lambda/M (variance matched to the Poisson-Gamma law)
// and then a Binomial(M), as a misspecification stress generator.
std::vector<long> generate_counts(const ScenarioConfig& config, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& x_star,
                                  const std::vector<int>& subject_of,
                                  const std::vector<double>& depths, Rng& rng);

// Full dataset + the fitting spec (zipg with log-depth offset).
LongitudinalDataset make_dataset(const ScenarioConfig& config, Rng& rng);
ModelSpec fitting_spec(const ScenarioConfig& config);

// The baseline longitudinal design: n = 20 subjects, m measurements,
// beta = (beta1, 0.45), beta_star = (beta_star1), constant zero
// inflation p.
ScenarioConfig baseline_scenario(double beta1, double beta_star1, double p, int m = 25);

struct ExperimentTest {
  TestMethod method = TestMethod::BWald;  // BWald, PbWald or Lrt
  int coordinate = 0;                     // H0: omega[coordinate] = 0
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  int n_replicates = 100;
  int n_bootstrap = 200;
  std::vector<ExperimentTest> tests;
  double alpha = 0.05;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::Normal;
  ResampleUnit resample_unit = ResampleUnit::Measurement;
  int workers = 1;
  // When false and no bWald test is requested, the nonparametric
  // bootstrap is skipped entirely (per-coordinate SE/CI/coverage come
  // out as NaN); saves B refits per replicate on pure rejection-rate
  // experiments.
  bool compute_cis = true;
};

struct CoordinateSummary {
  std::string name;
  double truth = 0.0;
  double avg_bias = 0.0;
  double bias_se = 0.0;   // SD of the estimates across replicates; NaN if L == 1
  double avg_se = 0.0;    // mean bootstrap standard error
  double rmse = 0.0;
  double coverage = 0.0;  // CI coverage fraction
};

struct TestRateSummary {
  ExperimentTest test;
  double rejection_rate = 0.0;
};

struct MonteCarloSummary {
  std::vector<CoordinateSummary> coordinates;
  std::vector<TestRateSummary> tests;
  double avg_observed_zero_proportion = 0.0;
  int n_replicates = 0;
  int n_failed = 0;
};

// L independent replicates of generate -> fit -> bootstrap -> test/CI,
// aggregated. Deterministic for a fixed scenario seed and any worker
// count. Throws if more than 5% of replicates fail.
MonteCarloSummary run_experiment(const ExperimentConfig& config);

// For each gamma1 in the grid, simulates zipg-full truth
// (logit p = -0.847 + gamma1 * X1), fits both variants, and returns
// the fraction of replicates where the constant-p model has the
// smaller BIC.
std::vector<double> sensitivity_bic_experiment(const std::vector<double>& gamma1_grid, int L,
                                               std::uint64_t seed, int workers = 1,
                                               int n_subjects = 20, int m = 25);

}  // namespace zipg

#endif
