#pragma once

// Thin wrapper over Eigen's MINPACK-derived Levenberg-Marquardt solver.
// Records the cost after every accepted iteration and returns a covariance
// estimate s^2 (J^T J)^-1 at the solution.

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "nvlev/error.hpp"

namespace nvlev::numeric {

/// residual(params, out) fills out (size m) with model - data (or weighted).
using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LMOptions {
  int max_evaluations = 4000;
  double ftol = 1e-12;
  double xtol = 1e-12;
};

struct LMResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;      // s^2 (J^T J)^-1, s^2 = cost / (m - n)
  std::vector<double> cost_history;  // sum of squared residuals, accepted steps
  double cost = 0.0;
  int iterations = 0;
  int status = 0;
};

namespace detail {

struct FunctorAdapter {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  FunctorAdapter() = default;
  FunctorAdapter(ResidualFn f, Eigen::Index n, Eigen::Index m) : fn(std::move(f)), n_in(n), m_out(m) {}

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    fn(x, fvec);
    return 0;
  }
  Eigen::Index inputs() const { return n_in; }
  Eigen::Index values() const { return m_out; }

  ResidualFn fn;
  Eigen::Index n_in = 0, m_out = 0;
};

}  // namespace detail

/// Minimizes sum_i r_i(p)^2. Throws ConvergenceFailure when the evaluation
/// budget runs out before a tolerance criterion is met.
inline LMResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd p0, Eigen::Index m,
                                    const LMOptions& opt = {}) {
  const Eigen::Index n = p0.size();
  require(n > 0 && m >= n, Errc::InvalidArgument, "levenberg_marquardt: need m >= n > 0");
  using Diff = Eigen::NumericalDiff<detail::FunctorAdapter, Eigen::Central>;
  Diff functor(detail::FunctorAdapter(residual, n, m));
  Eigen::LevenbergMarquardt<Diff> lm(functor);
  lm.parameters.maxfev = opt.max_evaluations;
  lm.parameters.ftol = opt.ftol;
  lm.parameters.xtol = opt.xtol;

  LMResult out;
  namespace S = Eigen::LevenbergMarquardtSpace;
  S::Status status = lm.minimizeInit(p0);
  if (status == S::ImproperInputParameters)
    throw Error(Errc::InvalidArgument, "levenberg_marquardt: improper input parameters");
  out.cost_history.push_back(lm.fnorm * lm.fnorm);
  do {
    status = lm.minimizeOneStep(p0);
    out.cost_history.push_back(lm.fnorm * lm.fnorm);
    ++out.iterations;
  } while (status == S::Running);
  out.status = static_cast<int>(status);
  if (status == S::TooManyFunctionEvaluation)
    throw Error(Errc::ConvergenceFailure, "levenberg_marquardt: evaluation budget exhausted");

  Eigen::VectorXd r(m);
  residual(p0, r);
  out.cost = r.squaredNorm();
  Eigen::MatrixXd jac(m, n);
  functor.df(p0, jac);
  const double s2 = m > n ? out.cost / double(m - n) : 0.0;
  out.covariance = s2 * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
  out.params = std::move(p0);
  return out;
}

}  // namespace nvlev::numeric
