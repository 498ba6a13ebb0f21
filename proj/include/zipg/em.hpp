// Model fitting: initialization, alternating E/M steps, convergence
// control, and fits under linear parameter restrictions (used by the
// likelihood-ratio and parametric-bootstrap tests).
#ifndef ZIPG_EM_HPP
#define ZIPG_EM_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "zipg/likelihood.hpp"
#include "zipg/model.hpp"
#include "zipg/optimizer.hpp"

namespace zipg {

struct FitSettings {
  double eps_tol = 1e-8;  // relative complete-data log-likelihood change
  int t_max = 100;        // maximum EM iterations
  OptimSettings m_step;   // inner BFGS
  // Generalized EM: each M-step runs at most this many BFGS iterations;
  // any improvement preserves the ascent property, and the cap bounds
  // the cost of a fit under bootstrap load.
  int m_step_cap = 10;
  int init_zip_iterations = 25;     // plain ZIP EM warm start
  double init_theta_floor = 1e-4;   // clamp for the moment estimate of theta
  std::optional<ParamVector> start; // warm start; skips initialization
};

struct FitResult {
  ParamVector omega_hat;
  double loglik = 0.0;                // observed-data log-likelihood
  std::vector<double> loglik_trace;   // observed log-likelihood per EM iteration
  Responsibilities responsibilities;
  int n_em_iterations = 0;
  bool converged = false;
  double bic = 0.0;
  double aic = 0.0;
  std::vector<std::string> warnings;
};

// Affine subspace {omega : A omega = b} in which a restricted fit
// lives; built once, reused by every M-step.
struct LinearRestriction {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd particular;  // least-norm solution of A omega = b
  Eigen::MatrixXd nullspace;   // orthonormal columns spanning ker(A)

  // Throws if A is not full row rank or shapes disagree.
  static LinearRestriction make(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

  Eigen::VectorXd project(const Eigen::VectorXd& omega) const {
    return particular + nullspace * (nullspace.transpose() * (omega - particular));
  }
  Eigen::VectorXd to_free(const Eigen::VectorXd& omega) const {
    return nullspace.transpose() * (omega - particular);
  }
  Eigen::VectorXd to_full(const Eigen::VectorXd& t) const {
    return particular + nullspace * t;
  }
};

// Warm start: ZIP fit with dispersion pinned at the Poisson floor,
// then gamma overwritten with the logit of the observed zero
// proportion and beta_star0 seeded from a method-of-moments
// overdispersion estimate. Throws Error("degenerate taxon ...") when
// every count is zero.
ParamVector initialize(const LongitudinalDataset& data, const ModelSpec& spec,
                       const FitSettings& settings = {});

// Algorithm: alternate the E-step with a BFGS M-step on the
// complete-data objective until the relative change falls below
// eps_tol or t_max is hit. The reported loglik is recomputed from the
// observed-data likelihood at the final parameters.
FitResult fit(const LongitudinalDataset& data, const ModelSpec& spec,
              const FitSettings& settings = {});

// Variant with covariate-linked zero inflation (requires
// spec.variant == ZipgFull and zi_covariates).
FitResult fit_full(const LongitudinalDataset& data, const ModelSpec& spec,
                   const FitSettings& settings = {});

// Same EM loop constrained to {A omega = b}.
FitResult fit_restricted(const LongitudinalDataset& data, const ModelSpec& spec,
                         const LinearRestriction& restriction,
                         const FitSettings& settings = {});

}  // namespace zipg

#endif
