// Core probability model: parameter and data types, link functions,
// the Poisson-Gamma log-pmf, and its moment identities.
//
// The count law for one observation is a two-part mixture: a point mass
// at zero with probability p = logistic(gamma), otherwise W | U ~
// Poisson(lambda * U) with U ~ Gamma(shape = 1/theta, scale = theta),
// so E(U) = 1 and Var(U) = theta. Marginally the non-inflated part has
// mean lambda and variance lambda * (1 + lambda * theta).
#ifndef ZIPG_MODEL_HPP
#define ZIPG_MODEL_HPP

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace zipg {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class OffsetMode { LogDepth, LogMedianOfRatios, None };
enum class Variant { Zipg, ZipgFull };

// Column counts for the three linear predictors plus the offset choice.
// d3 > 0 is only meaningful for the ZipgFull variant, where the
// zero-inflation probability gets its own logistic regression.
struct ModelSpec {
  int d1 = 0;
  int d2 = 0;
  int d3 = 0;
  OffsetMode offset_mode = OffsetMode::LogDepth;
  Variant variant = Variant::Zipg;

  int n_gamma() const { return variant == Variant::ZipgFull ? d3 + 1 : 1; }
  int n_params() const { return d1 + d2 + 2 + n_gamma(); }
  void validate() const;
};

// Unconstrained parameter set, laid out as
//   [beta0, beta (d1), beta_star0, beta_star (d2), gamma (1 or d3+1)].
struct ParamVector {
  int d1 = 0;
  int d2 = 0;
  int n_gamma = 1;
  Eigen::VectorXd values;

  static ParamVector zeros(const ModelSpec& spec);

  int size() const { return static_cast<int>(values.size()); }

  double beta0() const { return values[0]; }
  double beta_star0() const { return values[1 + d1]; }
  auto beta() const { return values.segment(1, d1); }
  auto beta_star() const { return values.segment(2 + d1, d2); }
  auto gamma() const { return values.segment(2 + d1 + d2, n_gamma); }

  double& beta0() { return values[0]; }
  double& beta_star0() { return values[1 + d1]; }
  auto beta() { return values.segment(1, d1); }
  auto beta_star() { return values.segment(2 + d1, d2); }
  auto gamma() { return values.segment(2 + d1 + d2, n_gamma); }

  int idx_beta0() const { return 0; }
  int idx_beta(int j) const { return 1 + j; }
  int idx_beta_star0() const { return 1 + d1; }
  int idx_beta_star(int j) const { return 2 + d1 + j; }
  int idx_gamma(int j = 0) const { return 2 + d1 + d2 + j; }

  bool all_finite() const { return values.allFinite(); }
};

// Counts and covariates for one taxon. Observations are flat-indexed;
// subject_of maps each observation to its (contiguous, 0-based) subject.
// Dispersion covariates are per subject, everything else per observation.
struct LongitudinalDataset {
  std::vector<long> counts;            // W_ij, one per observation
  std::vector<double> depths;          // M_ij, strictly positive
  Eigen::MatrixXd mean_covariates;     // N x d1
  Eigen::MatrixXd disp_covariates;     // n x d2
  std::vector<int> subject_of;         // observation -> subject
  std::optional<Eigen::MatrixXd> zi_covariates;  // N x d3, ZipgFull only
  std::optional<Eigen::VectorXd> size_factors;   // per observation, for
                                                 // the median-of-ratios offset

  int n_obs() const { return static_cast<int>(counts.size()); }
  int n_subjects() const { return static_cast<int>(disp_covariates.rows()); }

  // Checks shapes, subject contiguity, positive depths, nonnegative
  // counts. Throws Error naming the offending field.
  void validate(const ModelSpec& spec) const;

  double observed_zero_proportion() const;
};

// Per-observation mean, per-subject dispersion, zero-inflation mass
// (a single entry for Zipg, one per observation for ZipgFull).
struct LinkedParams {
  Eigen::VectorXd lambda;   // per observation
  Eigen::VectorXd theta;    // per subject
  Eigen::VectorXd p;        // size 1 or n_obs
  Eigen::VectorXd eta;      // log lambda
  Eigen::VectorXd eta_star; // log theta
};

// Per-observation offsets implied by the spec's offset mode.
Eigen::VectorXd compute_offsets(const LongitudinalDataset& data, const ModelSpec& spec);

// Applies the log/logit links: lambda = exp(beta0 + X beta + offset),
// theta = exp(beta_star0 + X* beta_star), p = logistic(gamma ...).
LinkedParams link_params(const ParamVector& omega, const LongitudinalDataset& data,
                         const ModelSpec& spec);

// logit(p); inverse of logistic.
double gamma_of_p(double p);

// Below this the Gamma mixing distribution is numerically degenerate
// and the pmf switches to the Poisson limit. Settable once at startup
// (CLI flag); reads are relaxed-atomic.
inline constexpr double kDefaultThetaPoissonFloor = 1e-8;
double theta_poisson_floor();
void set_theta_poisson_floor(double floor);

// log P_PG(w | lambda, theta), computed in log space.
double log_pg_pmf(long w, double lambda, double theta);

// Same pmf evaluated from the linear predictors eta = log lambda,
// eta_star = log theta; this is the form the likelihood code uses.
double log_pg_pmf_linked(long w, double eta, double eta_star);

// (mean, variance) of the Poisson-Gamma law.
std::pair<double, double> pg_moments(double lambda, double theta);

}  // namespace zipg

#endif
