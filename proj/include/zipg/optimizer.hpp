// Dense BFGS maximizer used inside each M-step.
//
// The problem dimension here is small (d1 + d2 + 3, typically under
// 15), so a plain dense inverse-Hessian update with a strong-Wolfe
// line search is the right tool; it is called on the order of 1e5-1e6
// times across bootstrap x Monte Carlo runs.
#ifndef ZIPG_OPTIMIZER_HPP
#define ZIPG_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <functional>

namespace zipg {

struct OptimSettings {
  double gtol = 1e-6;       // infinity norm of the gradient
  double ftol_rel = 1e-10;  // relative objective change
  int max_iterations = 200;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  // Called with each accepted iterate and its objective value.
  std::function<void(const Eigen::VectorXd&, double)> on_iterate;
};

enum class OptimStatus {
  GradientConverged,
  SmallObjectiveChange,
  MaxIterations,
  LineSearchFailed,
};

struct OptimResult {
  Eigen::VectorXd omega_hat;
  double objective = 0.0;  // maximized value
  int n_iterations = 0;
  double gradient_norm = 0.0;  // infinity norm at omega_hat
  bool converged = false;      // true iff gradient_norm < gtol at exit
  OptimStatus status = OptimStatus::MaxIterations;
};

// f(x, grad_out) returns the objective value and fills the gradient.
using ObjectiveGradFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Maximizes f from start. Line-search failures are not fatal: the best
// iterate found is returned with converged = false and a reason code.
// A non-finite objective at the start point throws.
OptimResult maximize(const ObjectiveGradFn& f, const Eigen::VectorXd& start,
                     const OptimSettings& settings = {});

// Convenience overload taking separate value and gradient callables.
OptimResult maximize(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                     const Eigen::VectorXd& start, const OptimSettings& settings = {});

}  // namespace zipg

#endif
