// Hypothesis tests (bootstrap Wald, parametric bootstrap Wald,
// likelihood ratio), confidence intervals, multiple-testing control,
// and the Kolmogorov-Smirnov goodness-of-fit diagnostic.
#ifndef ZIPG_INFERENCE_HPP
#define ZIPG_INFERENCE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "zipg/em.hpp"
#include "zipg/model.hpp"
#include "zipg/rng.hpp"

namespace zipg {

enum class TestMethod { BWald, PbWald, Lrt, Wald };
enum class ResampleUnit { Measurement, Subject };
enum class CiMethod { Normal, Quantile, Bca };

// H0: A omega = b.
struct LinearHypothesis {
  Eigen::MatrixXd a;  // r x n_params, full row rank
  Eigen::VectorXd b;  // r

  int rank() const { return static_cast<int>(a.rows()); }

  // A selecting a single coordinate, b = value.
  static LinearHypothesis single_coefficient(int n_params, int coordinate,
                                             double value = 0.0);
};

struct TestReport {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  TestMethod method = TestMethod::BWald;
  Eigen::MatrixXd covariance;  // full bootstrap covariance of omega
  int n_bootstrap = 0;
  int n_bootstrap_failed = 0;
  bool flagged = false;  // unreliable: > 5% replicate failures, or a
                         // likelihood-ratio ordering violation
  Eigen::MatrixXd draws; // successful bootstrap estimates, one row each
  ParamVector omega_hat; // unrestricted estimate on the original data
  double loglik = 0.0;   // observed-data log-likelihood of that fit
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  CiMethod method = CiMethod::Normal;
  bool fell_back = false;  // bca degenerated to quantile
};

struct InferenceSettings {
  FitSettings fit;
  int workers = 1;
  // Replicate refits start from the base estimate rather than from
  // scratch; identical estimators, large constant-factor savings.
  bool warm_start_replicates = true;
  double max_failure_fraction = 0.05;
};

// Nonparametric bootstrap Wald test: refit on B resamples (per
// measurement by default, per subject optionally), estimate the
// covariance of omega from the refits, and compare
// (A omega - b)' (A V A')^{-1} (A omega - b) to chi-square_r.
TestReport bootstrap_wald(const LongitudinalDataset& data, const ModelSpec& spec,
                          const LinearHypothesis& hypothesis, int n_bootstrap,
                          ResampleUnit resample_unit, std::uint64_t seed,
                          const InferenceSettings& settings = {});

// Parametric bootstrap Wald: simulate B datasets from the
// null-restricted fit (reusing the observed covariates and depths),
// refit the unrestricted model on each, then form the same statistic.
TestReport parametric_bootstrap_wald(const LongitudinalDataset& data, const ModelSpec& spec,
                                     const LinearHypothesis& hypothesis, int n_bootstrap,
                                     std::uint64_t seed,
                                     const InferenceSettings& settings = {});

// 2 (loglik_full - loglik_null) against chi-square with one degree of
// freedom per restriction. An empty hypothesis is the trivial null.
TestReport likelihood_ratio_test(const LongitudinalDataset& data, const ModelSpec& spec,
                                 const LinearHypothesis& null_restriction,
                                 const InferenceSettings& settings = {});

// Wald test with covariance from the inverse observed information
// (numerical Hessian). Diagnostics only: this covariance tends to be
// too small, which is why the bootstrap tests above exist.
TestReport wald_observed_information(const LongitudinalDataset& data, const ModelSpec& spec,
                                     const LinearHypothesis& hypothesis,
                                     const InferenceSettings& settings = {});

// Interval for one coordinate from bootstrap draws. jackknife holds
// leave-one-measurement-out estimates of the same coordinate and is
// required for a non-degenerate BCa interval.
ConfidenceInterval confidence_interval(double estimate, const Eigen::MatrixXd& draws,
                                       int coordinate, double level, CiMethod method,
                                       const Eigen::VectorXd* jackknife = nullptr);

// Leave-one-measurement-out estimates of every coordinate (rows align
// with observations), warm-started from the full fit.
Eigen::MatrixXd jackknife_estimates(const LongitudinalDataset& data, const ModelSpec& spec,
                                    const FitResult& base,
                                    const InferenceSettings& settings = {});

struct FdrResult {
  std::vector<bool> rejected;
  std::vector<double> q_values;
};

// Benjamini-Hochberg step-up procedure at level q.
FdrResult bh_fdr(const std::vector<double>& p_values, double q);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov statistic between the observed counts
// and a sample simulated from the fitted model (10x the observed
// size). Discreteness makes the test conservative; it is meant as a
// goodness-of-fit diagnostic, not a calibrated test.
KsResult ks_goodness_of_fit(const LongitudinalDataset& data, const ModelSpec& spec,
                            const FitResult& fit, std::uint64_t seed);

// sup |F1 - F2| between the empirical CDFs of two samples.
double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b);

// Resampled copies of a dataset; exposed for tests.
LongitudinalDataset resample_measurements(const LongitudinalDataset& data, Rng& rng);
LongitudinalDataset resample_subjects(const LongitudinalDataset& data, Rng& rng);

// Counts redrawn from the model at the given parameters, everything
// else (covariates, depths, subject map) reused.
LongitudinalDataset simulate_counts_from_params(const LongitudinalDataset& data,
                                                const ModelSpec& spec,
                                                const ParamVector& omega, Rng& rng);

}  // namespace zipg

#endif
