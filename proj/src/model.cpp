#include "zipg/model.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "zipg/special.hpp"

namespace zipg {

namespace {
std::atomic<double> g_theta_floor{kDefaultThetaPoissonFloor};
}

double theta_poisson_floor() { return g_theta_floor.load(std::memory_order_relaxed); }

void set_theta_poisson_floor(double floor) {
  if (!(floor > 0.0)) throw Error("theta Poisson floor must be positive");
  g_theta_floor.store(floor, std::memory_order_relaxed);
}

void ModelSpec::validate() const {
  if (d1 < 0 || d2 < 0 || d3 < 0) {
    throw Error("ModelSpec: covariate column counts must be nonnegative");
  }
  if (d3 > 0 && variant != Variant::ZipgFull) {
    throw Error("ModelSpec: zero-inflation covariates (d3 > 0) require the zipg-full variant");
  }
}

ParamVector ParamVector::zeros(const ModelSpec& spec) {
  ParamVector omega;
  omega.d1 = spec.d1;
  omega.d2 = spec.d2;
  omega.n_gamma = spec.n_gamma();
  omega.values = Eigen::VectorXd::Zero(spec.n_params());
  return omega;
}

void LongitudinalDataset::validate(const ModelSpec& spec) const {
  const int N = n_obs();
  const int n = n_subjects();
  auto fail = [](const std::string& msg) { throw Error("dataset: " + msg); };

  if (N == 0) fail("no observations");
  if (static_cast<int>(depths.size()) != N) fail("depths length does not match counts");
  if (static_cast<int>(subject_of.size()) != N) fail("subject_of length does not match counts");
  if (mean_covariates.rows() != N) {
    fail("mean_covariates has " + std::to_string(mean_covariates.rows()) +
         " rows, expected one per observation (" + std::to_string(N) + ")");
  }
  if (mean_covariates.cols() != spec.d1) {
    fail("mean_covariates has " + std::to_string(mean_covariates.cols()) +
         " columns, spec declares d1 = " + std::to_string(spec.d1));
  }
  if (disp_covariates.cols() != spec.d2) {
    fail("disp_covariates has " + std::to_string(disp_covariates.cols()) +
         " columns, spec declares d2 = " + std::to_string(spec.d2));
  }
  for (int i = 0; i < N; ++i) {
    if (counts[i] < 0) {
      fail("negative count at observation " + std::to_string(i));
    }
    if (!(depths[i] > 0.0)) {
      fail("non-positive depth at observation " + std::to_string(i));
    }
    if (subject_of[i] < 0 || subject_of[i] >= n) {
      fail("observation " + std::to_string(i) + " maps to subject " +
           std::to_string(subject_of[i]) + ", outside 0.." + std::to_string(n - 1));
    }
  }
  if (spec.variant == Variant::ZipgFull) {
    if (!zi_covariates.has_value()) fail("zipg-full requires zi_covariates");
    if (zi_covariates->rows() != N || zi_covariates->cols() != spec.d3) {
      fail("zi_covariates has shape " + std::to_string(zi_covariates->rows()) + "x" +
           std::to_string(zi_covariates->cols()) + ", expected " + std::to_string(N) +
           "x" + std::to_string(spec.d3));
    }
  }
}

double LongitudinalDataset::observed_zero_proportion() const {
  long zeros = 0;
  for (long w : counts) {
    if (w == 0) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(counts.size());
}

Eigen::VectorXd compute_offsets(const LongitudinalDataset& data, const ModelSpec& spec) {
  const int N = data.n_obs();
  Eigen::VectorXd off(N);
  switch (spec.offset_mode) {
    case OffsetMode::LogDepth:
      for (int i = 0; i < N; ++i) off[i] = std::log(data.depths[i]);
      break;
    case OffsetMode::LogMedianOfRatios:
      if (!data.size_factors.has_value()) {
        throw Error("offset mode log-median-of-ratios requires size factors "
                    "computed from the full taxa table");
      }
      for (int i = 0; i < N; ++i) {
        const double s = (*data.size_factors)[i];
        if (!(s > 0.0)) {
          throw Error("non-positive size factor at observation " + std::to_string(i));
        }
        off[i] = std::log(s);
      }
      break;
    case OffsetMode::None:
      off.setZero();
      break;
  }
  return off;
}

LinkedParams link_params(const ParamVector& omega, const LongitudinalDataset& data,
                         const ModelSpec& spec) {
  spec.validate();
  data.validate(spec);
  if (omega.size() != spec.n_params()) {
    throw Error("parameter vector has length " + std::to_string(omega.size()) +
                ", spec requires " + std::to_string(spec.n_params()));
  }
  const int N = data.n_obs();
  const int n = data.n_subjects();
  const Eigen::VectorXd offsets = compute_offsets(data, spec);

  LinkedParams out;
  out.eta = Eigen::VectorXd::Constant(N, omega.beta0()) + offsets;
  if (spec.d1 > 0) out.eta += data.mean_covariates * omega.beta();
  out.lambda = out.eta.array().exp();

  out.eta_star = Eigen::VectorXd::Constant(n, omega.beta_star0());
  if (spec.d2 > 0) out.eta_star += data.disp_covariates * omega.beta_star();
  out.theta = out.eta_star.array().exp();

  if (spec.variant == Variant::ZipgFull) {
    Eigen::VectorXd zi_lin = Eigen::VectorXd::Constant(N, omega.gamma()[0]);
    if (spec.d3 > 0) zi_lin += *data.zi_covariates * omega.gamma().tail(spec.d3);
    out.p.resize(N);
    for (int i = 0; i < N; ++i) out.p[i] = logistic(zi_lin[i]);
  } else {
    out.p.resize(1);
    out.p[0] = logistic(omega.gamma()[0]);
  }
  return out;
}

double gamma_of_p(double p) { return logit(p); }

double log_pg_pmf_linked(long w, double eta, double eta_star) {
  const double wd = static_cast<double>(w);
  if (eta_star < std::log(theta_poisson_floor())) {
    // Poisson limit; Gamma(1/theta) would overflow.
    return wd * eta - std::exp(eta) - lgamma_pos(wd + 1.0);
  }
  const double inv_theta = std::exp(-eta_star);
  const double log1p_lt = softplus(eta + eta_star);  // log(1 + lambda*theta)
  return lgamma_pos(wd + inv_theta) - lgamma_pos(wd + 1.0) - lgamma_pos(inv_theta) +
         wd * (eta + eta_star) - (inv_theta + wd) * log1p_lt;
}

double log_pg_pmf(long w, double lambda, double theta) {
  if (w < 0) throw Error("log_pg_pmf: negative count");
  if (!(lambda > 0.0) || !(theta > 0.0)) {
    throw Error("log_pg_pmf: lambda and theta must be positive");
  }
  return log_pg_pmf_linked(w, std::log(lambda), std::log(theta));
}

std::pair<double, double> pg_moments(double lambda, double theta) {
  return {lambda, lambda * (1.0 + lambda * theta)};
}

}  // namespace zipg
