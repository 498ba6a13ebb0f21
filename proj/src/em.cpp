#include "zipg/em.hpp"

#include <cmath>
#include <string>

#include "zipg/special.hpp"

namespace zipg {

namespace {

double clamped_zero_proportion_logit(const LongitudinalDataset& data) {
  const double n = static_cast<double>(data.n_obs());
  const double lo = 1.0 / (2.0 * n);
  const double p_obs = std::clamp(data.observed_zero_proportion(), lo, 1.0 - lo);
  return logit(p_obs);
}

// Plain zero-inflated Poisson EM used only to warm-start the mean
// coefficients; theta is pinned at the Poisson floor throughout.
void zip_warm_start(const LongitudinalDataset& data, const ModelSpec& spec,
                    const Eigen::VectorXd& offsets, const FitSettings& settings,
                    double& beta0, Eigen::VectorXd& beta, Eigen::VectorXd& lambda,
                    Eigen::VectorXd& z) {
  const int N = data.n_obs();
  const int d1 = spec.d1;

  auto fill_lambda = [&](double b0, const Eigen::VectorXd& bv) {
    lambda = Eigen::VectorXd::Constant(N, b0) + offsets;
    if (d1 > 0) lambda += data.mean_covariates * bv;
    lambda = lambda.array().exp();
  };

  double gamma = clamped_zero_proportion_logit(data);
  fill_lambda(beta0, beta);
  z.resize(N);

  OptimSettings inner = settings.m_step;
  inner.max_iterations = 30;

  Eigen::VectorXd x(d1 + 1);
  for (int iter = 0; iter < settings.init_zip_iterations; ++iter) {
    // E-step under Poisson: P(W=0) = exp(-lambda).
    double z_sum = 0.0;
    for (int i = 0; i < N; ++i) {
      z[i] = data.counts[i] == 0 ? logistic(gamma + lambda[i]) : 0.0;
      z_sum += z[i];
    }
    const double lo = 1.0 / (2.0 * static_cast<double>(N));
    gamma = logit(std::clamp(z_sum / N, lo, 1.0 - lo));

    // Weighted Poisson regression for (beta0, beta).
    ObjectiveGradFn objective = [&](const Eigen::VectorXd& par, Eigen::VectorXd& grad) {
      grad.setZero(d1 + 1);
      double value = 0.0;
      for (int i = 0; i < N; ++i) {
        const double wpg = 1.0 - z[i];
        if (wpg == 0.0) continue;
        double eta = par[0] + offsets[i];
        for (int j = 0; j < d1; ++j) eta += data.mean_covariates(i, j) * par[1 + j];
        const double lam = std::exp(eta);
        const double w = static_cast<double>(data.counts[i]);
        value += wpg * (w * eta - lam);
        const double score = wpg * (w - lam);
        grad[0] += score;
        for (int j = 0; j < d1; ++j) grad[1 + j] += score * data.mean_covariates(i, j);
      }
      return value;
    };
    x[0] = beta0;
    x.tail(d1) = beta;
    const OptimResult opt = maximize(objective, x, inner);
    beta0 = opt.omega_hat[0];
    beta = opt.omega_hat.tail(d1);
    fill_lambda(beta0, beta);
  }

  // Final E-step so the moment estimate below sees current weights.
  for (int i = 0; i < N; ++i) {
    z[i] = data.counts[i] == 0 ? logistic(gamma + lambda[i]) : 0.0;
  }
}

}  // namespace

LinearRestriction LinearRestriction::make(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (a.rows() != b.size()) {
    throw Error("LinearRestriction: A and b disagree on the number of restrictions");
  }
  if (a.rows() == 0 || a.rows() >= a.cols()) {
    throw Error("LinearRestriction: need 0 < r < n_params restrictions");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV | Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double tol = 1e-12 * sv[0] * std::max(a.rows(), a.cols());
  if (!(sv[sv.size() - 1] > tol)) {
    throw Error("LinearRestriction: A is rank deficient");
  }
  LinearRestriction r;
  r.a = a;
  r.b = b;
  r.particular = svd.solve(b);
  r.nullspace = svd.matrixV().rightCols(a.cols() - a.rows());
  return r;
}

ParamVector initialize(const LongitudinalDataset& data, const ModelSpec& spec,
                       const FitSettings& settings) {
  spec.validate();
  data.validate(spec);
  const int N = data.n_obs();
  const Eigen::VectorXd offsets = compute_offsets(data, spec);

  double mean_count = 0.0;
  for (long w : data.counts) mean_count += static_cast<double>(w);
  mean_count /= N;
  if (mean_count == 0.0) {
    throw Error("degenerate taxon: all counts are zero");
  }
  const double mean_exposure = offsets.array().exp().mean();

  ParamVector omega = ParamVector::zeros(spec);
  omega.beta0() = std::log(mean_count / mean_exposure);

  // Stage 1: ZIP estimates for the mean model.
  double beta0 = omega.beta0();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(spec.d1);
  Eigen::VectorXd lambda, z;
  zip_warm_start(data, spec, offsets, settings, beta0, beta, lambda, z);
  omega.beta0() = beta0;
  omega.beta() = beta;

  // Stage 2: zero-inflation mass from the observed zero proportion.
  omega.gamma().setZero();
  omega.gamma()[0] = clamped_zero_proportion_logit(data);

  // Stage 3: method-of-moments overdispersion through the remaining
  // Poisson-Gamma variance lambda(1 + lambda*theta).
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < N; ++i) {
    const double wpg = 1.0 - z[i];
    const double resid = static_cast<double>(data.counts[i]) - lambda[i];
    num += wpg * (resid * resid - lambda[i]);
    den += wpg * lambda[i] * lambda[i];
  }
  const double theta_mom =
      std::clamp(den > 0.0 ? num / den : settings.init_theta_floor,
                 settings.init_theta_floor, 1e4);
  omega.beta_star0() = std::log(theta_mom);
  omega.beta_star().setZero();

  if (!omega.all_finite()) {
    throw Error("initialize: produced non-finite parameters");
  }
  return omega;
}

namespace {

FitResult fit_impl(const LongitudinalDataset& data, const ModelSpec& spec,
                   const FitSettings& settings, const LinearRestriction* restriction) {
  spec.validate();
  data.validate(spec);
  const Eigen::VectorXd offsets = compute_offsets(data, spec);

  FitResult result;

  // Constant dispersion covariates are collinear with the intercept;
  // freeze their coefficients at zero instead of letting the M-step
  // wander along the ridge.
  LongitudinalDataset local;
  const LongitudinalDataset* dptr = &data;
  std::vector<int> dropped;
  for (int j = 0; j < spec.d2; ++j) {
    const auto col = data.disp_covariates.col(j);
    if (data.n_subjects() > 0 && (col.maxCoeff() - col.minCoeff()) < 1e-12) {
      dropped.push_back(j);
    }
  }
  std::optional<LinearRestriction> combined;
  if (!dropped.empty()) {
    local = data;
    for (int j : dropped) {
      local.disp_covariates.col(j).setZero();
      result.warnings.push_back("dispersion covariate column " + std::to_string(j) +
                                " has zero variance across subjects; dropped from the fit");
    }
    dptr = &local;
    ParamVector probe = ParamVector::zeros(spec);
    Eigen::MatrixXd pin = Eigen::MatrixXd::Zero(static_cast<int>(dropped.size()), spec.n_params());
    for (int t = 0; t < static_cast<int>(dropped.size()); ++t) {
      pin(t, probe.idx_beta_star(dropped[t])) = 1.0;
    }
    Eigen::MatrixXd a_all = pin;
    Eigen::VectorXd b_all = Eigen::VectorXd::Zero(pin.rows());
    if (restriction) {
      // Keep all caller rows, then add each pin row only if it is
      // independent of what is already stacked.
      a_all = restriction->a;
      b_all = restriction->b;
      for (int t = 0; t < pin.rows(); ++t) {
        Eigen::MatrixXd candidate(a_all.rows() + 1, spec.n_params());
        candidate << a_all, pin.row(t);
        if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(candidate).rank() == candidate.rows()) {
          a_all = candidate;
          b_all.conservativeResize(b_all.size() + 1);
          b_all[b_all.size() - 1] = 0.0;
        }
      }
    }
    combined = LinearRestriction::make(a_all, b_all);
    restriction = &*combined;
  }
  const LongitudinalDataset& d = *dptr;

  ParamVector omega = settings.start.has_value() ? *settings.start : initialize(d, spec, settings);
  if (omega.size() != spec.n_params()) {
    throw Error("fit: start parameter vector has the wrong length");
  }
  if (restriction) omega.values = restriction->project(omega.values);

  const int k = spec.n_params();
  Eigen::VectorXd lgamma_w1(d.n_obs());
  for (int i = 0; i < d.n_obs(); ++i) {
    lgamma_w1[i] = lgamma_pos(static_cast<double>(d.counts[i]) + 1.0);
  }

  Eigen::VectorXd z;
  detail::e_step_core(omega, d, spec, offsets, z);
  double l_prev =
      detail::complete_loglik_core(omega, d, z, spec, offsets, nullptr, &lgamma_w1);
  if (!std::isfinite(l_prev)) {
    throw Error("fit: non-finite complete-data log-likelihood at initialization");
  }
  result.loglik_trace.push_back(detail::observed_loglik_core(omega, d, spec, offsets, nullptr));

  OptimSettings m_step = settings.m_step;
  m_step.max_iterations = std::min(m_step.max_iterations, settings.m_step_cap);

  ParamVector trial = omega;
  Eigen::VectorXd grad_full(k);
  for (int t = 1; t <= settings.t_max; ++t) {
    // M-step: improve the complete-data objective given z.
    OptimResult opt;
    if (restriction) {
      ObjectiveGradFn objective = [&](const Eigen::VectorXd& tfree, Eigen::VectorXd& grad) {
        trial.values = restriction->to_full(tfree);
        const double value =
            detail::complete_loglik_core(trial, d, z, spec, offsets, &grad_full, &lgamma_w1);
        grad = restriction->nullspace.transpose() * grad_full;
        return value;
      };
      opt = maximize(objective, restriction->to_free(omega.values), m_step);
      omega.values = restriction->to_full(opt.omega_hat);
    } else {
      ObjectiveGradFn objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
        trial.values = x;
        return detail::complete_loglik_core(trial, d, z, spec, offsets, &grad, &lgamma_w1);
      };
      opt = maximize(objective, omega.values, m_step);
      omega.values = opt.omega_hat;
    }
    const double l_now = opt.objective;
    if (!std::isfinite(l_now)) {
      throw Error("fit: non-finite complete-data log-likelihood at iteration " +
                  std::to_string(t));
    }

    // E-step with the updated parameters.
    detail::e_step_core(omega, d, spec, offsets, z);
    result.loglik_trace.push_back(detail::observed_loglik_core(omega, d, spec, offsets, nullptr));
    result.n_em_iterations = t;

    const double rel = std::fabs(l_now - l_prev) / (std::fabs(l_prev) + 1e-10);
    l_prev = l_now;
    if (rel < settings.eps_tol) {
      result.converged = true;
      break;
    }
  }

  result.omega_hat = omega;
  result.responsibilities.z = z;
  result.loglik = detail::observed_loglik_core(omega, d, spec, offsets, nullptr);
  if (!std::isfinite(result.loglik)) {
    throw Error("fit: non-finite observed-data log-likelihood at the final parameters");
  }
  const InformationCriteria ic = information_criteria(result.loglik, omega, d.n_obs());
  result.bic = ic.bic;
  result.aic = ic.aic;
  return result;
}

}  // namespace

FitResult fit(const LongitudinalDataset& data, const ModelSpec& spec,
              const FitSettings& settings) {
  if (spec.variant != Variant::Zipg) {
    throw Error("fit: spec.variant must be zipg (use fit_full for zipg-full)");
  }
  return fit_impl(data, spec, settings, nullptr);
}

FitResult fit_full(const LongitudinalDataset& data, const ModelSpec& spec,
                   const FitSettings& settings) {
  if (spec.variant != Variant::ZipgFull) {
    throw Error("fit_full: spec.variant must be zipg-full");
  }
  if (!data.zi_covariates.has_value()) {
    throw Error("fit_full: dataset has no zero-inflation covariates");
  }
  return fit_impl(data, spec, settings, nullptr);
}

FitResult fit_restricted(const LongitudinalDataset& data, const ModelSpec& spec,
                         const LinearRestriction& restriction, const FitSettings& settings) {
  return fit_impl(data, spec, settings, &restriction);
}

}  // namespace zipg
