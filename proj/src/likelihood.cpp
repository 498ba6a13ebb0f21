#include "zipg/likelihood.hpp"

#include <cmath>
#include <string>

#include "zipg/special.hpp"

namespace zipg {

namespace {

// Per-subject quantities reused across observations in one pass.
struct SubjectCache {
  Eigen::VectorXd eta_star;   // log theta
  Eigen::VectorXd inv_theta;  // exp(-eta_star)
  Eigen::VectorXd lgamma_inv_theta;
  Eigen::VectorXd digamma_inv_theta;
  bool any_poisson = false;
  std::vector<char> poisson_branch;  // theta below the floor

  void fill(const ParamVector& omega, const LongitudinalDataset& data, const ModelSpec& spec,
            bool need_digamma) {
    const int n = data.n_subjects();
    eta_star = Eigen::VectorXd::Constant(n, omega.beta_star0());
    if (spec.d2 > 0) eta_star += data.disp_covariates * omega.beta_star();
    inv_theta = (-eta_star.array()).exp();
    poisson_branch.assign(n, 0);
    lgamma_inv_theta.resize(n);
    if (need_digamma) digamma_inv_theta.resize(n);
    const double floor_log = std::log(theta_poisson_floor());
    for (int s = 0; s < n; ++s) {
      if (eta_star[s] < floor_log) {
        poisson_branch[s] = 1;
        any_poisson = true;
        lgamma_inv_theta[s] = 0.0;
        if (need_digamma) digamma_inv_theta[s] = 0.0;
      } else {
        lgamma_inv_theta[s] = lgamma_pos(inv_theta[s]);
        if (need_digamma) digamma_inv_theta[s] = digamma(inv_theta[s]);
      }
    }
  }
};

// softplus(x) together with logistic(x), sharing one exp.
inline void softplus_logistic(double x, double& sp, double& sig) {
  if (x > 0.0) {
    const double e = std::exp(-x);
    sp = x + std::log1p(e);
    sig = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(x);
    sp = std::log1p(e);
    sig = e / (1.0 + e);
  }
}

// Linear predictor of the zero-inflation logit for observation i.
inline double gamma_lin(const ParamVector& omega, const LongitudinalDataset& data,
                        const ModelSpec& spec, int i) {
  double g = omega.gamma()[0];
  if (spec.variant == Variant::ZipgFull && spec.d3 > 0) {
    g += data.zi_covariates->row(i).dot(omega.gamma().tail(spec.d3));
  }
  return g;
}

inline Eigen::VectorXd mean_linear_predictor(const ParamVector& omega,
                                             const LongitudinalDataset& data,
                                             const ModelSpec& spec,
                                             const Eigen::VectorXd& offsets) {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(data.n_obs(), omega.beta0()) + offsets;
  if (spec.d1 > 0) eta += data.mean_covariates * omega.beta();
  return eta;
}

Eigen::VectorXd make_lgamma_w1(const LongitudinalDataset& data) {
  Eigen::VectorXd v(data.n_obs());
  for (int i = 0; i < data.n_obs(); ++i) {
    v[i] = lgamma_pos(static_cast<double>(data.counts[i]) + 1.0);
  }
  return v;
}

}  // namespace

namespace detail {

double observed_loglik_core(const ParamVector& omega, const LongitudinalDataset& data,
                            const ModelSpec& spec, const Eigen::VectorXd& offsets,
                            Eigen::VectorXd* per_observation) {
  const int N = data.n_obs();
  const Eigen::VectorXd eta = mean_linear_predictor(omega, data, spec, offsets);
  SubjectCache subj;
  subj.fill(omega, data, spec, /*need_digamma=*/false);

  const bool full = spec.variant == Variant::ZipgFull;
  const double g_scalar = omega.gamma()[0];
  const double sp_scalar = softplus(g_scalar);

  if (per_observation) per_observation->resize(N);
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const int s = data.subject_of[i];
    const long w = data.counts[i];
    const double wd = static_cast<double>(w);
    double lp;
    if (subj.poisson_branch[s]) {
      lp = wd * eta[i] - std::exp(eta[i]) -
           (w == 0 ? 0.0 : lgamma_pos(wd + 1.0));
    } else {
      const double r = subj.inv_theta[s];
      const double x = eta[i] + subj.eta_star[s];
      double log1p_lt, a;
      softplus_logistic(x, log1p_lt, a);
      if (w == 0) {
        lp = -r * log1p_lt;
      } else {
        lp = lgamma_pos(wd + r) - lgamma_pos(wd + 1.0) - subj.lgamma_inv_theta[s] +
             wd * x - (r + wd) * log1p_lt;
      }
    }
    const double g = full ? gamma_lin(omega, data, spec, i) : g_scalar;
    const double sp = full ? softplus(g) : sp_scalar;
    const double term = (w == 0 ? log_add_exp(g, lp) : lp) - sp;
    if (!std::isfinite(term)) {
      throw Error("observed_loglik: non-finite contribution at observation " +
                  std::to_string(i));
    }
    if (per_observation) (*per_observation)[i] = term;
    total += term;
  }
  return total;
}

void e_step_core(const ParamVector& omega, const LongitudinalDataset& data,
                 const ModelSpec& spec, const Eigen::VectorXd& offsets, Eigen::VectorXd& z) {
  const int N = data.n_obs();
  const Eigen::VectorXd eta = mean_linear_predictor(omega, data, spec, offsets);
  SubjectCache subj;
  subj.fill(omega, data, spec, /*need_digamma=*/false);
  const bool full = spec.variant == Variant::ZipgFull;
  const double g_scalar = omega.gamma()[0];

  z.resize(N);
  for (int i = 0; i < N; ++i) {
    if (data.counts[i] > 0) {
      z[i] = 0.0;
      continue;
    }
    const int s = data.subject_of[i];
    double lp0;
    if (subj.poisson_branch[s]) {
      lp0 = -std::exp(eta[i]);
    } else {
      lp0 = -subj.inv_theta[s] * softplus(eta[i] + subj.eta_star[s]);
    }
    const double g = full ? gamma_lin(omega, data, spec, i) : g_scalar;
    // z = p / (p + (1-p) P_PG(0)) = logistic(gamma - log P_PG(0)).
    z[i] = logistic(g - lp0);
  }
}

double complete_loglik_core(const ParamVector& omega, const LongitudinalDataset& data,
                            const Eigen::VectorXd& z, const ModelSpec& spec,
                            const Eigen::VectorXd& offsets, Eigen::VectorXd* grad,
                            const Eigen::VectorXd* lgamma_w1) {
  const int N = data.n_obs();
  const Eigen::VectorXd eta = mean_linear_predictor(omega, data, spec, offsets);
  SubjectCache subj;
  subj.fill(omega, data, spec, /*need_digamma=*/grad != nullptr);

  Eigen::VectorXd local_lgamma_w1;
  if (!lgamma_w1) {
    local_lgamma_w1 = make_lgamma_w1(data);
    lgamma_w1 = &local_lgamma_w1;
  }

  const bool full = spec.variant == Variant::ZipgFull;
  const double g_scalar = omega.gamma()[0];
  double sp_scalar, p_scalar;
  softplus_logistic(g_scalar, sp_scalar, p_scalar);

  if (grad) {
    grad->resize(omega.size());
    grad->setZero();
  }

  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const int s = data.subject_of[i];
    const long w = data.counts[i];
    const double wd = static_cast<double>(w);
    const double zi = z[i];
    const double wpg = 1.0 - zi;

    double g = g_scalar, sp = sp_scalar, p = p_scalar;
    if (full) {
      g = gamma_lin(omega, data, spec, i);
      softplus_logistic(g, sp, p);
    }

    // PG log-pmf and its score in the two linear predictors.
    double lp, d_eta, d_eta_star;
    if (subj.poisson_branch[s]) {
      const double lambda = std::exp(eta[i]);
      lp = wd * eta[i] - lambda - (*lgamma_w1)[i];
      d_eta = wd - lambda;
      d_eta_star = 0.0;
    } else {
      const double r = subj.inv_theta[s];
      const double x = eta[i] + subj.eta_star[s];
      double log1p_lt, a;
      softplus_logistic(x, log1p_lt, a);
      if (w == 0) {
        lp = -r * log1p_lt;
        d_eta = -r * a;
        d_eta_star = r * (log1p_lt - a);
      } else {
        lp = lgamma_pos(wd + r) - (*lgamma_w1)[i] - subj.lgamma_inv_theta[s] + wd * x -
             (r + wd) * log1p_lt;
        d_eta = wd - (r + wd) * a;
        if (grad) {
          d_eta_star = -r * (digamma(wd + r) - subj.digamma_inv_theta[s]) + wd +
                       r * log1p_lt - (r + wd) * a;
        } else {
          d_eta_star = 0.0;
        }
      }
    }
    total += zi * g - sp + wpg * lp;

    if (!grad) continue;

    (*grad)[omega.idx_beta0()] += wpg * d_eta;
    for (int j = 0; j < spec.d1; ++j) {
      (*grad)[omega.idx_beta(j)] += wpg * d_eta * data.mean_covariates(i, j);
    }
    (*grad)[omega.idx_beta_star0()] += wpg * d_eta_star;
    for (int j = 0; j < spec.d2; ++j) {
      (*grad)[omega.idx_beta_star(j)] += wpg * d_eta_star * data.disp_covariates(s, j);
    }
    const double d_gamma = zi - p;
    (*grad)[omega.idx_gamma(0)] += d_gamma;
    if (full) {
      for (int j = 0; j < spec.d3; ++j) {
        (*grad)[omega.idx_gamma(1 + j)] += d_gamma * (*data.zi_covariates)(i, j);
      }
    }
  }
  return total;
}

}  // namespace detail

LikelihoodValue observed_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                                const ModelSpec& spec, bool keep_per_observation) {
  data.validate(spec);
  const Eigen::VectorXd offsets = compute_offsets(data, spec);
  LikelihoodValue out;
  Eigen::VectorXd per_obs;
  out.loglik = detail::observed_loglik_core(omega, data, spec, offsets,
                                            keep_per_observation ? &per_obs : nullptr);
  if (keep_per_observation) out.per_observation = std::move(per_obs);
  return out;
}

double complete_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                       const Responsibilities& z, const ModelSpec& spec) {
  data.validate(spec);
  if (z.z.size() != data.n_obs()) {
    throw Error("complete_loglik: responsibilities length does not match observations");
  }
  const Eigen::VectorXd offsets = compute_offsets(data, spec);
  const double value =
      detail::complete_loglik_core(omega, data, z.z, spec, offsets, nullptr, nullptr);
  if (!std::isfinite(value)) {
    throw Error("complete_loglik: non-finite value");
  }
  return value;
}

Responsibilities e_step(const ParamVector& omega, const LongitudinalDataset& data,
                        const ModelSpec& spec) {
  data.validate(spec);
  const Eigen::VectorXd offsets = compute_offsets(data, spec);
  Responsibilities r;
  detail::e_step_core(omega, data, spec, offsets, r.z);
  return r;
}

Eigen::VectorXd grad_complete_loglik(const ParamVector& omega, const LongitudinalDataset& data,
                                     const Responsibilities& z, const ModelSpec& spec) {
  data.validate(spec);
  const Eigen::VectorXd offsets = compute_offsets(data, spec);
  Eigen::VectorXd grad;
  detail::complete_loglik_core(omega, data, z.z, spec, offsets, &grad, nullptr);
  return grad;
}

InformationCriteria information_criteria(double loglik, const ParamVector& omega, long n_obs) {
  if (n_obs < 1) throw Error("information_criteria: n_obs must be at least 1");
  const double k = static_cast<double>(omega.size());
  InformationCriteria ic;
  ic.bic = -2.0 * loglik + k * std::log(static_cast<double>(n_obs));
  ic.aic = -2.0 * loglik + 2.0 * k;
  return ic;
}

}  // namespace zipg
