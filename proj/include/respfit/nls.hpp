#pragma once

/**
 * @file nls.hpp
 * @brief Levenberg-Marquardt minimizer for small sum-of-squares problems.
 *
 * Sized for the 2-3 parameter grey-box fits this library performs: dense
 * normal equations, forward-difference Jacobians over the full residual
 * vector, box constraints by projection.
 */

#include <functional>
#include <vector>

namespace respfit {

struct LmOptions {
  double lambda0 = 1e-3;   // initial damping
  double lambda_up = 10.0; // on rejected step
  double lambda_down = 10.0;
  int max_iters = 100;
  double ftol = 1e-8; // stop when an accepted step's cost decrease falls
                      // below ftol * initial cost
  double xtol = 1e-8; // relative step size
  double fd_rel_step = 1e-6;
  // Per-parameter boxes; empty means unbounded.
  std::vector<double> lower;
  std::vector<double> upper;
  // Characteristic magnitudes for finite-difference steps; defaults to the
  // initial guess. Needed because a2 (~1e-5) and C (~50) differ by orders.
  std::vector<double> theta_scale;
};

enum class LmStatus {
  ConvergedFtol,
  ConvergedXtol,
  MaxIters,
  Singular,
  DivergedResidual, // residual function diverged at the starting point
};

struct LmReport {
  std::vector<double> theta;
  double cost = 0.0; // final sum of squared residuals
  int iters = 0;
  LmStatus status = LmStatus::MaxIters;
  std::vector<double> cost_trace; // initial cost plus each accepted step
};

const char *to_string(LmStatus s);

/// Residual callback: fills `r` and returns false to signal divergence
/// (treated as infinite cost, so the trial step is rejected).
using ResidualFn =
    std::function<bool(const std::vector<double> &theta, std::vector<double> &r)>;

/// Damped Gauss-Newton: solves (J'J + lambda*diag(J'J)) d = -J'r, accepts a
/// step only when the cost strictly decreases, projecting trial points onto
/// the bounds. Throws std::invalid_argument when theta0 violates the bounds.
LmReport lm_minimize(const ResidualFn &residual_fn,
                     std::vector<double> theta0, const LmOptions &opts = {});

struct LsqResult {
  std::vector<double> x;
  bool degenerate = false; // ridge fallback was needed
};

/// Minimizes ||design*x - target||^2 by normal equations (Cholesky), with a
/// tiny ridge fallback (1e-12 * trace/p) when the factorization fails.
/// design is row-major n x p with n >= p.
LsqResult linear_lsq(const std::vector<std::vector<double>> &design,
                     const std::vector<double> &target);

} // namespace respfit
