#include "zipg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zipg/parallel.hpp"
#include "zipg/special.hpp"

namespace zipg {

namespace {

FitResult fit_any(const LongitudinalDataset& data, const ModelSpec& spec,
                  const FitSettings& settings) {
  return spec.variant == Variant::ZipgFull ? fit_full(data, spec, settings)
                                           : fit(data, spec, settings);
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& draws) {
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(draws.rows() - 1);
}

double wald_statistic(const LinearHypothesis& hyp, const Eigen::VectorXd& omega,
                      const Eigen::MatrixXd& v) {
  const Eigen::VectorXd delta = hyp.a * omega - hyp.b;
  const Eigen::MatrixXd ava = hyp.a * v * hyp.a.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ava);
  if (!lu.isInvertible()) {
    throw Error("Wald test: A V A' is singular; increase the number of "
                "bootstrap replicates");
  }
  return delta.dot(lu.solve(delta));
}

// Runs B replicate refits; make_data(b, rng) produces replicate b's
// dataset. Failed refits are dropped and counted.
struct ReplicateDraws {
  Eigen::MatrixXd draws;
  int n_failed = 0;
};

template <typename MakeData>
ReplicateDraws run_replicates(const ModelSpec& spec, int n_bootstrap, std::uint64_t seed,
                              const InferenceSettings& settings,
                              const ParamVector& warm_start, const MakeData& make_data) {
  const int k = warm_start.size();
  FitSettings refit_settings = settings.fit;
  if (settings.warm_start_replicates) refit_settings.start = warm_start;

  std::vector<std::optional<Eigen::VectorXd>> rows(n_bootstrap);
  const Rng root(seed);
  parallel_for(n_bootstrap, settings.workers, [&](int b) {
    Rng rng = root.substream(static_cast<std::uint64_t>(b));
    try {
      const LongitudinalDataset replicate = make_data(b, rng);
      const FitResult refit = fit_any(replicate, spec, refit_settings);
      rows[b] = refit.omega_hat.values;
    } catch (const Error&) {
      rows[b] = std::nullopt;
    }
  });

  ReplicateDraws out;
  int ok = 0;
  for (const auto& row : rows) ok += row.has_value() ? 1 : 0;
  out.n_failed = n_bootstrap - ok;
  if (ok < 2) {
    throw Error("bootstrap: fewer than two replicate fits succeeded");
  }
  out.draws.resize(ok, k);
  int at = 0;
  for (const auto& row : rows) {
    if (row.has_value()) out.draws.row(at++) = *row;
  }
  return out;
}

void check_hypothesis(const LinearHypothesis& hyp, int n_params) {
  if (hyp.a.cols() != n_params) {
    throw Error("hypothesis: A has " + std::to_string(hyp.a.cols()) +
                " columns, model has " + std::to_string(n_params) + " parameters");
  }
  if (hyp.a.rows() != hyp.b.size()) {
    throw Error("hypothesis: A and b disagree on the number of restrictions");
  }
}

double quantile_type7(std::vector<double> sorted, double q) {
  const auto n = sorted.size();
  const double h = (static_cast<double>(n) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + (h - std::floor(h)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

LinearHypothesis LinearHypothesis::single_coefficient(int n_params, int coordinate,
                                                      double value) {
  LinearHypothesis hyp;
  hyp.a = Eigen::MatrixXd::Zero(1, n_params);
  hyp.a(0, coordinate) = 1.0;
  hyp.b = Eigen::VectorXd::Constant(1, value);
  return hyp;
}

LongitudinalDataset resample_measurements(const LongitudinalDataset& data, Rng& rng) {
  const int N = data.n_obs();
  LongitudinalDataset out = data;
  for (int i = 0; i < N; ++i) {
    const int pick = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(N)));
    out.counts[i] = data.counts[pick];
    out.depths[i] = data.depths[pick];
    out.subject_of[i] = data.subject_of[pick];
    out.mean_covariates.row(i) = data.mean_covariates.row(pick);
    if (data.zi_covariates) out.zi_covariates->row(i) = data.zi_covariates->row(pick);
    if (data.size_factors) (*out.size_factors)[i] = (*data.size_factors)[pick];
  }
  return out;
}

LongitudinalDataset resample_subjects(const LongitudinalDataset& data, Rng& rng) {
  const int n = data.n_subjects();
  std::vector<std::vector<int>> obs_of(n);
  for (int i = 0; i < data.n_obs(); ++i) obs_of[data.subject_of[i]].push_back(i);

  LongitudinalDataset out;
  out.disp_covariates.resize(n, data.disp_covariates.cols());
  std::vector<int> picks(n);
  int total = 0;
  for (int t = 0; t < n; ++t) {
    picks[t] = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    out.disp_covariates.row(t) = data.disp_covariates.row(picks[t]);
    total += static_cast<int>(obs_of[picks[t]].size());
  }
  out.counts.reserve(total);
  out.depths.reserve(total);
  out.subject_of.reserve(total);
  out.mean_covariates.resize(total, data.mean_covariates.cols());
  if (data.zi_covariates) {
    out.zi_covariates.emplace(total, data.zi_covariates->cols());
  }
  if (data.size_factors) out.size_factors.emplace(total);
  int at = 0;
  for (int t = 0; t < n; ++t) {
    for (int i : obs_of[picks[t]]) {
      out.counts.push_back(data.counts[i]);
      out.depths.push_back(data.depths[i]);
      out.subject_of.push_back(t);
      out.mean_covariates.row(at) = data.mean_covariates.row(i);
      if (data.zi_covariates) out.zi_covariates->row(at) = data.zi_covariates->row(i);
      if (data.size_factors) (*out.size_factors)[at] = (*data.size_factors)[i];
      ++at;
    }
  }
  return out;
}

LongitudinalDataset simulate_counts_from_params(const LongitudinalDataset& data,
                                                const ModelSpec& spec,
                                                const ParamVector& omega, Rng& rng) {
  const LinkedParams linked = link_params(omega, data, spec);
  LongitudinalDataset out = data;
  const bool full = spec.variant == Variant::ZipgFull;
  for (int i = 0; i < data.n_obs(); ++i) {
    const double p = full ? linked.p[i] : linked.p[0];
    if (rng.bernoulli(p)) {
      out.counts[i] = 0;
      continue;
    }
    const double theta = linked.theta[data.subject_of[i]];
    const double u = theta < theta_poisson_floor() ? 1.0 : rng.gamma(1.0 / theta, theta);
    out.counts[i] = rng.poisson(linked.lambda[i] * u);
  }
  return out;
}

TestReport bootstrap_wald(const LongitudinalDataset& data, const ModelSpec& spec,
                          const LinearHypothesis& hypothesis, int n_bootstrap,
                          ResampleUnit resample_unit, std::uint64_t seed,
                          const InferenceSettings& settings) {
  if (n_bootstrap < 50) throw Error("bootstrap_wald: need B >= 50");
  check_hypothesis(hypothesis, spec.n_params());

  const FitResult base = fit_any(data, spec, settings.fit);
  const auto make_data = [&](int, Rng& rng) {
    return resample_unit == ResampleUnit::Measurement ? resample_measurements(data, rng)
                                                      : resample_subjects(data, rng);
  };
  const ReplicateDraws rep =
      run_replicates(spec, n_bootstrap, seed, settings, base.omega_hat, make_data);

  TestReport report;
  report.method = TestMethod::BWald;
  report.omega_hat = base.omega_hat;
  report.loglik = base.loglik;
  report.covariance = sample_covariance(rep.draws);
  report.draws = rep.draws;
  report.n_bootstrap = n_bootstrap;
  report.n_bootstrap_failed = rep.n_failed;
  report.flagged = rep.n_failed >
                   settings.max_failure_fraction * static_cast<double>(n_bootstrap);
  report.df = hypothesis.rank();
  report.statistic = wald_statistic(hypothesis, base.omega_hat.values, report.covariance);
  report.p_value = chi2_sf(report.statistic, report.df);
  return report;
}

TestReport parametric_bootstrap_wald(const LongitudinalDataset& data, const ModelSpec& spec,
                                     const LinearHypothesis& hypothesis, int n_bootstrap,
                                     std::uint64_t seed, const InferenceSettings& settings) {
  if (n_bootstrap < 50) throw Error("parametric_bootstrap_wald: need B >= 50");
  check_hypothesis(hypothesis, spec.n_params());

  const FitResult base = fit_any(data, spec, settings.fit);
  const LinearRestriction restriction = LinearRestriction::make(hypothesis.a, hypothesis.b);
  const FitResult null_fit = fit_restricted(data, spec, restriction, settings.fit);

  const auto make_data = [&](int, Rng& rng) {
    return simulate_counts_from_params(data, spec, null_fit.omega_hat, rng);
  };
  const ReplicateDraws rep =
      run_replicates(spec, n_bootstrap, seed, settings, base.omega_hat, make_data);

  TestReport report;
  report.method = TestMethod::PbWald;
  report.omega_hat = base.omega_hat;
  report.loglik = base.loglik;
  report.covariance = sample_covariance(rep.draws);
  report.draws = rep.draws;
  report.n_bootstrap = n_bootstrap;
  report.n_bootstrap_failed = rep.n_failed;
  report.flagged = rep.n_failed >
                   settings.max_failure_fraction * static_cast<double>(n_bootstrap);
  report.df = hypothesis.rank();
  report.statistic = wald_statistic(hypothesis, base.omega_hat.values, report.covariance);
  report.p_value = chi2_sf(report.statistic, report.df);
  return report;
}

TestReport likelihood_ratio_test(const LongitudinalDataset& data, const ModelSpec& spec,
                                 const LinearHypothesis& null_restriction,
                                 const InferenceSettings& settings) {
  FitResult full_fit = fit_any(data, spec, settings.fit);

  TestReport report;
  report.method = TestMethod::Lrt;
  report.omega_hat = full_fit.omega_hat;
  report.loglik = full_fit.loglik;
  if (null_restriction.rank() == 0) {
    // Trivially true null: nothing is restricted.
    report.statistic = 0.0;
    report.df = 0;
    report.p_value = 1.0;
    return report;
  }
  check_hypothesis(null_restriction, spec.n_params());

  const LinearRestriction restriction =
      LinearRestriction::make(null_restriction.a, null_restriction.b);
  const FitResult null_fit = fit_restricted(data, spec, restriction, settings.fit);

  double stat = 2.0 * (full_fit.loglik - null_fit.loglik);
  if (stat < 0.0) {
    // The unrestricted optimum cannot be below the restricted one;
    // restart the full fit from the null solution, which EM can only
    // improve on.
    FitSettings retry = settings.fit;
    retry.start = null_fit.omega_hat;
    const FitResult full_retry = fit_any(data, spec, retry);
    if (full_retry.loglik > full_fit.loglik) {
      full_fit = full_retry;
      report.omega_hat = full_fit.omega_hat;
      report.loglik = full_fit.loglik;
    }
    stat = 2.0 * (full_fit.loglik - null_fit.loglik);
    if (stat < -1e-6 * (1.0 + std::fabs(full_fit.loglik))) report.flagged = true;
    stat = std::max(stat, 0.0);
  }
  report.statistic = stat;
  report.df = null_restriction.rank();
  report.p_value = chi2_sf(report.statistic, report.df);
  return report;
}

TestReport wald_observed_information(const LongitudinalDataset& data, const ModelSpec& spec,
                                     const LinearHypothesis& hypothesis,
                                     const InferenceSettings& settings) {
  check_hypothesis(hypothesis, spec.n_params());
  const FitResult base = fit_any(data, spec, settings.fit);
  const Eigen::VectorXd offsets = compute_offsets(data, spec);
  const int k = spec.n_params();

  ParamVector probe = base.omega_hat;
  const auto f = [&](const Eigen::VectorXd& x) {
    probe.values = x;
    return detail::observed_loglik_core(probe, data, spec, offsets, nullptr);
  };
  const Eigen::VectorXd x0 = base.omega_hat.values;
  Eigen::VectorXd h(k);
  for (int j = 0; j < k; ++j) h[j] = 1e-5 * (1.0 + std::fabs(x0[j]));

  Eigen::MatrixXd hess(k, k);
  const double f0 = f(x0);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp[j] += h[j];
    xm[j] -= h[j];
    hess(j, j) = (f(xp) - 2.0 * f0 + f(xm)) / (h[j] * h[j]);
  }
  for (int j = 0; j < k; ++j) {
    for (int l = j + 1; l < k; ++l) {
      Eigen::VectorXd xpp = x0, xpm = x0, xmp = x0, xmm = x0;
      xpp[j] += h[j]; xpp[l] += h[l];
      xpm[j] += h[j]; xpm[l] -= h[l];
      xmp[j] -= h[j]; xmp[l] += h[l];
      xmm[j] -= h[j]; xmm[l] -= h[l];
      hess(j, l) = hess(l, j) =
          (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h[j] * h[l]);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(-hess);
  if (!lu.isInvertible()) {
    throw Error("wald_observed_information: observed information is singular");
  }

  TestReport report;
  report.method = TestMethod::Wald;
  report.omega_hat = base.omega_hat;
  report.loglik = base.loglik;
  report.covariance = lu.inverse();
  report.df = hypothesis.rank();
  report.statistic = wald_statistic(hypothesis, base.omega_hat.values, report.covariance);
  report.p_value = chi2_sf(report.statistic, report.df);
  return report;
}

ConfidenceInterval confidence_interval(double estimate, const Eigen::MatrixXd& draws,
                                       int coordinate, double level, CiMethod method,
                                       const Eigen::VectorXd* jackknife) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error("confidence_interval: level must lie in (0,1)");
  }
  const int B = static_cast<int>(draws.rows());
  if (B < 50) throw Error("confidence_interval: need at least 50 bootstrap draws");
  if (coordinate < 0 || coordinate >= draws.cols()) {
    throw Error("confidence_interval: coordinate out of range");
  }
  const double alpha = 1.0 - level;

  ConfidenceInterval ci;
  ci.level = level;
  ci.method = method;

  std::vector<double> values(B);
  for (int b = 0; b < B; ++b) values[b] = draws(b, coordinate);

  if (method == CiMethod::Normal) {
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / B;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (B - 1));
    const double z = norm_quantile(1.0 - 0.5 * alpha);
    ci.lower = estimate - z * sd;
    ci.upper = estimate + z * sd;
    return ci;
  }

  std::sort(values.begin(), values.end());
  if (method == CiMethod::Quantile) {
    ci.lower = quantile_type7(values, 0.5 * alpha);
    ci.upper = quantile_type7(values, 1.0 - 0.5 * alpha);
    return ci;
  }

  // BCa: bias correction from the fraction of draws below the point
  // estimate, acceleration from the jackknife skewness.
  const auto below = static_cast<int>(
      std::lower_bound(values.begin(), values.end(), estimate) - values.begin());
  bool degenerate = below == 0 || below == B || jackknife == nullptr;
  double accel = 0.0;
  if (!degenerate) {
    const double ubar = jackknife->mean();
    double s2 = 0.0, s3 = 0.0;
    for (int i = 0; i < jackknife->size(); ++i) {
      const double d = ubar - (*jackknife)[i];
      s2 += d * d;
      s3 += d * d * d;
    }
    if (s2 <= 0.0) {
      degenerate = true;
    } else {
      accel = s3 / (6.0 * std::pow(s2, 1.5));
    }
  }
  if (degenerate) {
    ci.method = CiMethod::Quantile;
    ci.fell_back = true;
    ci.lower = quantile_type7(values, 0.5 * alpha);
    ci.upper = quantile_type7(values, 1.0 - 0.5 * alpha);
    return ci;
  }
  const double z0 = norm_quantile(static_cast<double>(below) / B);
  const auto adjusted = [&](double q) {
    const double zq = norm_quantile(q);
    return norm_cdf(z0 + (z0 + zq) / (1.0 - accel * (z0 + zq)));
  };
  ci.lower = quantile_type7(values, adjusted(0.5 * alpha));
  ci.upper = quantile_type7(values, adjusted(1.0 - 0.5 * alpha));
  return ci;
}

Eigen::MatrixXd jackknife_estimates(const LongitudinalDataset& data, const ModelSpec& spec,
                                    const FitResult& base, const InferenceSettings& settings) {
  const int N = data.n_obs();
  Eigen::MatrixXd out(N, base.omega_hat.size());
  FitSettings refit_settings = settings.fit;
  refit_settings.start = base.omega_hat;
  parallel_for(N, settings.workers, [&](int drop) {
    LongitudinalDataset loo;
    loo.disp_covariates = data.disp_covariates;
    loo.counts.reserve(N - 1);
    loo.depths.reserve(N - 1);
    loo.subject_of.reserve(N - 1);
    loo.mean_covariates.resize(N - 1, data.mean_covariates.cols());
    if (data.zi_covariates) loo.zi_covariates.emplace(N - 1, data.zi_covariates->cols());
    if (data.size_factors) loo.size_factors.emplace(N - 1);
    int at = 0;
    for (int i = 0; i < N; ++i) {
      if (i == drop) continue;
      loo.counts.push_back(data.counts[i]);
      loo.depths.push_back(data.depths[i]);
      loo.subject_of.push_back(data.subject_of[i]);
      loo.mean_covariates.row(at) = data.mean_covariates.row(i);
      if (data.zi_covariates) loo.zi_covariates->row(at) = data.zi_covariates->row(i);
      if (data.size_factors) (*loo.size_factors)[at] = (*data.size_factors)[i];
      ++at;
    }
    try {
      out.row(drop) = fit_any(loo, spec, refit_settings).omega_hat.values;
    } catch (const Error&) {
      out.row(drop) = base.omega_hat.values;
    }
  });
  return out;
}

FdrResult bh_fdr(const std::vector<double>& p_values, double q) {
  const auto m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error("bh_fdr: p-values must lie in [0,1]");
    }
  }
  FdrResult out;
  out.q_values.resize(m);
  out.rejected.assign(m, false);
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  std::vector<double> q_sorted(m);
  for (std::size_t i = 0; i < m; ++i) {
    q_sorted[i] = p_values[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
  }
  for (std::size_t i = m - 1; i-- > 0;) {
    q_sorted[i] = std::min(q_sorted[i], q_sorted[i + 1]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double qv = std::min(1.0, q_sorted[i]);
    out.q_values[order[i]] = qv;
    out.rejected[order[i]] = qv <= q;
  }
  return out;
}

double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("ks_two_sample_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  double d_max = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d_max = std::max(d_max,
                     std::fabs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  return d_max;
}

KsResult ks_goodness_of_fit(const LongitudinalDataset& data, const ModelSpec& spec,
                            const FitResult& fit, std::uint64_t seed) {
  const int N = data.n_obs();
  Rng rng(seed);
  std::vector<double> observed(N);
  for (int i = 0; i < N; ++i) observed[i] = static_cast<double>(data.counts[i]);

  std::vector<double> simulated;
  simulated.reserve(10 * static_cast<std::size_t>(N));
  for (int rep = 0; rep < 10; ++rep) {
    Rng sub = rng.substream(static_cast<std::uint64_t>(rep));
    const LongitudinalDataset draw =
        simulate_counts_from_params(data, spec, fit.omega_hat, sub);
    for (long w : draw.counts) simulated.push_back(static_cast<double>(w));
  }

  KsResult out;
  out.statistic = ks_two_sample_statistic(std::move(observed), std::move(simulated));
  const double n1 = static_cast<double>(N);
  const double n2 = 10.0 * n1;
  const double ne = std::sqrt(n1 * n2 / (n1 + n2));
  out.p_value = kolmogorov_sf((ne + 0.12 + 0.11 / ne) * out.statistic);
  return out;
}

}  // namespace zipg
