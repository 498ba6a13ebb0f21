#include "zipg/optimizer.hpp"

#include <cmath>
#include <limits>

#include "zipg/model.hpp"

namespace zipg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// State for one line search along direction d from x0; works on the
// minimization form F = -f.
struct LineSearch {
  const ObjectiveGradFn& f;
  const Eigen::VectorXd& x0;
  const Eigen::VectorXd& d;
  double phi0;        // F(x0)
  double dphi0;       // grad F . d at x0 (must be negative)
  double c1, c2;

  Eigen::VectorXd x_trial;
  Eigen::VectorXd g_trial;  // gradient of f (not F) at x_trial
  double phi_trial = 0.0;
  double dphi_trial = 0.0;

  // Evaluates F and F' along the ray; non-finite objective is mapped
  // to +inf so the bracket shrinks away from it.
  void eval(double alpha) {
    x_trial = x0 + alpha * d;
    const double value = f(x_trial, g_trial);
    if (std::isfinite(value)) {
      phi_trial = -value;
      dphi_trial = -g_trial.dot(d);
    } else {
      phi_trial = kInf;
      dphi_trial = kInf;
    }
  }

  bool armijo(double alpha) const { return phi_trial <= phi0 + c1 * alpha * dphi0; }
  bool curvature() const {
    return std::isfinite(dphi_trial) && std::fabs(dphi_trial) <= -c2 * dphi0;
  }
};

// Interpolating zoom (Nocedal & Wright alg. 3.6). lo always satisfies
// Armijo; returns the accepted alpha or a negative value on failure.
double zoom(LineSearch& ls, double alpha_lo, double phi_lo, double dphi_lo, double alpha_hi,
            double phi_hi) {
  for (int iter = 0; iter < 40; ++iter) {
    double alpha;
    if (std::isfinite(phi_hi)) {
      // Quadratic through phi(lo), phi'(lo), phi(hi); exact minimizer
      // for quadratic objectives.
      const double dh = alpha_hi - alpha_lo;
      const double denom = phi_hi - phi_lo - dphi_lo * dh;
      alpha = denom > 0.0 ? alpha_lo - 0.5 * dphi_lo * dh * dh / denom : 0.0;
      const double lo = std::min(alpha_lo, alpha_hi);
      const double hi = std::max(alpha_lo, alpha_hi);
      const double margin = 0.1 * (hi - lo);
      if (!(alpha > lo + margin && alpha < hi - margin)) {
        alpha = 0.5 * (alpha_lo + alpha_hi);
      }
    } else {
      alpha = alpha_lo + 0.25 * (alpha_hi - alpha_lo);
    }
    ls.eval(alpha);
    if (!ls.armijo(alpha) || ls.phi_trial >= phi_lo) {
      alpha_hi = alpha;
      phi_hi = ls.phi_trial;
    } else {
      if (ls.curvature()) return alpha;
      if (ls.dphi_trial * (alpha_hi - alpha_lo) >= 0.0) {
        alpha_hi = alpha_lo;
        phi_hi = phi_lo;
      }
      alpha_lo = alpha;
      phi_lo = ls.phi_trial;
      dphi_lo = ls.dphi_trial;
    }
    if (std::fabs(alpha_hi - alpha_lo) < 1e-16 * std::max(1.0, std::fabs(alpha_lo))) break;
  }
  return -1.0;
}

// Strong-Wolfe line search; returns accepted alpha or negative on
// failure. On success ls.x_trial / g_trial / phi_trial hold the state
// at the accepted point.
double line_search(LineSearch& ls) {
  double alpha_prev = 0.0;
  double phi_prev = ls.phi0;
  double dphi_prev = ls.dphi0;
  double alpha = 1.0;
  for (int iter = 0; iter < 20; ++iter) {
    ls.eval(alpha);
    if (!ls.armijo(alpha) || (iter > 0 && ls.phi_trial >= phi_prev)) {
      // zoom leaves ls evaluated at the accepted alpha.
      return zoom(ls, alpha_prev, phi_prev, dphi_prev, alpha, ls.phi_trial);
    }
    if (ls.curvature()) {
      // Wolfe holds; one secant refinement on phi' sharpens the step
      // (exact for quadratics) when the slope is still appreciable.
      if (std::fabs(ls.dphi_trial) > 0.25 * std::fabs(ls.dphi0) &&
          ls.dphi_trial != dphi_prev) {
        const double refined =
            alpha - ls.dphi_trial * (alpha - alpha_prev) / (ls.dphi_trial - dphi_prev);
        if (std::isfinite(refined) && refined > 0.0) {
          const double phi_at_alpha = ls.phi_trial;
          const double alpha_old = alpha;
          ls.eval(refined);
          if (ls.armijo(refined) && ls.curvature() && ls.phi_trial <= phi_at_alpha) {
            return refined;
          }
          ls.eval(alpha_old);
        }
      }
      return alpha;
    }
    if (ls.dphi_trial >= 0.0) {
      return zoom(ls, alpha, ls.phi_trial, ls.dphi_trial, alpha_prev, phi_prev);
    }
    alpha_prev = alpha;
    phi_prev = ls.phi_trial;
    dphi_prev = ls.dphi_trial;
    alpha = std::min(2.0 * alpha, 1e10);
  }
  return -1.0;
}

}  // namespace

OptimResult maximize(const ObjectiveGradFn& f, const Eigen::VectorXd& start,
                     const OptimSettings& settings) {
  const int n = static_cast<int>(start.size());
  Eigen::VectorXd x = start;
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  if (!std::isfinite(fx)) {
    throw Error("maximize: objective is not finite at the start point");
  }

  // Inverse Hessian of the minimization problem; gradient of F is -g.
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) / (1.0 + g.norm());

  OptimResult result;
  result.omega_hat = x;
  result.objective = fx;
  result.gradient_norm = g.lpNorm<Eigen::Infinity>();
  result.status = OptimStatus::MaxIterations;

  Eigen::VectorXd d(n), s(n), y(n);
  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < settings.gtol) {
      result.status = OptimStatus::GradientConverged;
      break;
    }
    d = h * g;  // ascent direction (h applied to gradient of f)
    double slope = g.dot(d);
    if (!(slope > 0.0)) {
      h = Eigen::MatrixXd::Identity(n, n) / (1.0 + g.norm());
      d = h * g;
      slope = g.dot(d);
    }

    LineSearch ls{f, x, d, -fx, -slope, settings.wolfe_c1, settings.wolfe_c2,
                  Eigen::VectorXd(), Eigen::VectorXd(), 0.0, 0.0};
    const double alpha = line_search(ls);
    if (alpha <= 0.0) {
      result.status = OptimStatus::LineSearchFailed;
      break;
    }

    const double fx_new = -ls.phi_trial;
    s = ls.x_trial - x;
    y = ls.g_trial - g;
    x = ls.x_trial;
    g = ls.g_trial;

    result.n_iterations = iter + 1;
    result.omega_hat = x;
    result.objective = fx_new;
    result.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (settings.on_iterate) settings.on_iterate(x, fx_new);

    const double rel_change = std::fabs(fx_new - fx) / std::max(1.0, std::fabs(fx));
    fx = fx_new;
    if (rel_change < settings.ftol_rel) {
      result.status = g.lpNorm<Eigen::Infinity>() < settings.gtol
                          ? OptimStatus::GradientConverged
                          : OptimStatus::SmallObjectiveChange;
      break;
    }

    // BFGS update on the minimization form: with F = -f, s^T yF uses
    // yF = -(g_new - g), so the curvature condition is s.dot(y) < 0 in
    // terms of f's gradients. Flip signs once and update normally.
    const double sy = -s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const Eigen::VectorXd yf = -y;
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * yf;
      const double yhy = yf.dot(hy);
      h.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
      h.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  if (g.lpNorm<Eigen::Infinity>() < settings.gtol &&
      result.status != OptimStatus::LineSearchFailed) {
    result.status = OptimStatus::GradientConverged;
  }
  result.converged = result.gradient_norm < settings.gtol;
  return result;
}

OptimResult maximize(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                     const Eigen::VectorXd& start, const OptimSettings& settings) {
  ObjectiveGradFn combined = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = gradient(x);
    return objective(x);
  };
  return maximize(combined, start, settings);
}

}  // namespace zipg
