// Observed-data and complete-data log-likelihoods, E-step
// responsibilities, the analytic gradient of the complete-data
// objective, and information criteria.
//
// Everything here is a pure function of its inputs; per-observation
// terms are independent and accumulated in a fixed order.
#ifndef ZIPG_LIKELIHOOD_HPP
#define ZIPG_LIKELIHOOD_HPP

#include <Eigen/Dense>
#include <optional>

#include "zipg/model.hpp"

namespace zipg {

// Posterior probability that each observation came from the
// zero-inflation component; exactly 0 wherever W > 0.
struct Responsibilities {
  Eigen::VectorXd z;
};

struct LikelihoodValue {
  double loglik = 0.0;
  std::optional<Eigen::VectorXd> per_observation;
};

struct InformationCriteria {
  double bic = 0.0;
  double aic = 0.0;
};

// Log-likelihood of the observed counts. The W = 0 branch is
// log(exp(gamma) + P_PG(0)) - log(exp(gamma) + 1), evaluated with
// log-sum-exp / softplus so large |gamma| stays finite.
LikelihoodValue observed_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                                const ModelSpec& spec, bool keep_per_observation = false);

// Complete-data log-likelihood: sum of z*log(p) + (1-z)*log((1-p)*P_PG).
double complete_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                       const Responsibilities& z, const ModelSpec& spec);

// Posterior mixture responsibilities given omega.
Responsibilities e_step(const ParamVector& omega, const LongitudinalDataset& data,
                        const ModelSpec& spec);

// Analytic gradient of complete_loglik with respect to every entry of
// omega in unconstrained space (link Jacobians folded in).
Eigen::VectorXd grad_complete_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                                     const Responsibilities& z, const ModelSpec& spec);

InformationCriteria information_criteria(double loglik, const ParamVector& omega, long n_obs);

namespace detail {

// Hot-path variants with offsets precomputed once per fit; the public
// functions above wrap these.
double observed_loglik_core(const ParamVector& omega, const LongitudinalDataset& data,
                            const ModelSpec& spec, const Eigen::VectorXd& offsets,
                            Eigen::VectorXd* per_observation);

void e_step_core(const ParamVector& omega, const LongitudinalDataset& data,
                 const ModelSpec& spec, const Eigen::VectorXd& offsets, Eigen::VectorXd& z);

// Returns the complete-data log-likelihood; if grad is non-null it is
// resized and filled with the analytic gradient. lgamma_w1 may hold
// precomputed lgamma(w+1) per observation (constant per dataset, so a
// fit computes it once); pass null to compute locally.
double complete_loglik_core(const ParamVector& omega, const LongitudinalDataset& data,
                            const Eigen::VectorXd& z, const ModelSpec& spec,
                            const Eigen::VectorXd& offsets, Eigen::VectorXd* grad,
                            const Eigen::VectorXd* lgamma_w1);

}  // namespace detail

}  // namespace zipg

#endif
