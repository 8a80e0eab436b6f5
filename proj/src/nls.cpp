#include "respfit/nls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace respfit {

const char *to_string(LmStatus s) {
  switch (s) {
  case LmStatus::ConvergedFtol:
    return "converged_ftol";
  case LmStatus::ConvergedXtol:
    return "converged_xtol";
  case LmStatus::MaxIters:
    return "max_iters";
  case LmStatus::Singular:
    return "singular";
  case LmStatus::DivergedResidual:
    return "diverged_residual";
  }
  return "unknown";
}

namespace {

constexpr double kLambdaCeiling = 1e10;

// Cholesky solve of a small SPD system; returns false when not SPD.
bool cholesky_solve(std::vector<std::vector<double>> a, std::vector<double> b,
                    std::vector<double> &x) {
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k)
      d -= a[j][k] * a[j][k];
    if (!(d > 0.0) || !std::isfinite(d))
      return false;
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k)
        s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  // forward then backward substitution
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k)
      s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  x.assign(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k)
      s -= a[k][ii] * x[k];
    x[ii] = s / a[ii][ii];
  }
  return true;
}

double dot(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double> &a) { return std::sqrt(dot(a, a)); }

void project_bounds(std::vector<double> &theta, const LmOptions &opts) {
  if (!opts.lower.empty())
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] = std::max(theta[i], opts.lower[i]);
  if (!opts.upper.empty())
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] = std::min(theta[i], opts.upper[i]);
}

} // namespace

LmReport lm_minimize(const ResidualFn &residual_fn, std::vector<double> theta0,
                     const LmOptions &opts) {
  const std::size_t p = theta0.size();
  if (p == 0)
    throw std::invalid_argument("lm_minimize: empty parameter vector");
  if (!opts.lower.empty() && opts.lower.size() != p)
    throw std::invalid_argument("lm_minimize: bounds size mismatch");
  if (!opts.upper.empty() && opts.upper.size() != p)
    throw std::invalid_argument("lm_minimize: bounds size mismatch");
  for (std::size_t i = 0; i < p; ++i) {
    if (!opts.lower.empty() && theta0[i] < opts.lower[i])
      throw std::invalid_argument("lm_minimize: theta0 below lower bound");
    if (!opts.upper.empty() && theta0[i] > opts.upper[i])
      throw std::invalid_argument("lm_minimize: theta0 above upper bound");
  }

  std::vector<double> scale = opts.theta_scale;
  if (scale.empty()) {
    // Unit fallback keeps the finite-difference step alive when a
    // parameter starts at zero.
    scale.resize(p);
    for (std::size_t i = 0; i < p; ++i)
      scale[i] = std::max(std::abs(theta0[i]), 1.0);
  }

  LmReport rep;
  rep.theta = theta0;

  std::vector<double> r;
  if (!residual_fn(rep.theta, r)) {
    rep.status = LmStatus::DivergedResidual;
    rep.cost = std::numeric_limits<double>::infinity();
    return rep;
  }
  double cost = dot(r, r);
  rep.cost = cost;
  rep.cost_trace.push_back(cost);

  const std::size_t n = r.size();
  std::vector<std::vector<double>> jac(n, std::vector<double>(p));
  std::vector<double> r_trial, theta_trial(p), grad(p), step(p);
  double lambda = opts.lambda0;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    rep.iters = iter;

    // Forward-difference Jacobian; flip to backward at the upper bound.
    bool jac_ok = true;
    for (std::size_t j = 0; j < p; ++j) {
      double h = opts.fd_rel_step * std::max(std::abs(rep.theta[j]), scale[j]);
      theta_trial = rep.theta;
      if (!opts.upper.empty() && theta_trial[j] + h > opts.upper[j])
        h = -h;
      theta_trial[j] += h;
      if (!residual_fn(theta_trial, r_trial) || r_trial.size() != n) {
        // Probe point diverged; try the other side once.
        h = -h;
        theta_trial = rep.theta;
        theta_trial[j] += h;
        if (!residual_fn(theta_trial, r_trial) || r_trial.size() != n) {
          jac_ok = false;
          break;
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        jac[i][j] = (r_trial[i] - r[i]) / h;
    }
    if (!jac_ok) {
      // Cannot linearize here; treat like a failed factorization.
      rep.status = LmStatus::Singular;
      return rep;
    }

    // Normal equations pieces.
    std::vector<std::vector<double>> jtj(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a; b < p; ++b)
          jtj[a][b] += jac[i][a] * jac[i][b];
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < a; ++b)
        jtj[a][b] = jtj[b][a];
    for (std::size_t a = 0; a < p; ++a) {
      grad[a] = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        grad[a] += jac[i][a] * r[i];
    }

    // Inner damping loop: escalate lambda until a step is accepted.
    while (true) {
      std::vector<std::vector<double>> damped = jtj;
      for (std::size_t a = 0; a < p; ++a)
        damped[a][a] += lambda * std::max(jtj[a][a], 1e-300);
      std::vector<double> rhs(p);
      for (std::size_t a = 0; a < p; ++a)
        rhs[a] = -grad[a];

      bool solved = cholesky_solve(damped, rhs, step);
      if (!solved) {
        if (lambda > kLambdaCeiling) {
          rep.status = LmStatus::Singular;
          return rep;
        }
        lambda *= opts.lambda_up;
        continue;
      }

      theta_trial = rep.theta;
      for (std::size_t a = 0; a < p; ++a)
        theta_trial[a] += step[a];
      project_bounds(theta_trial, opts);

      double trial_cost = std::numeric_limits<double>::infinity();
      if (residual_fn(theta_trial, r_trial) && r_trial.size() == n)
        trial_cost = dot(r_trial, r_trial);

      if (trial_cost < cost) {
        // Accepted: relax damping and move.
        std::vector<double> delta(p);
        for (std::size_t a = 0; a < p; ++a)
          delta[a] = theta_trial[a] - rep.theta[a];
        rep.theta = theta_trial;
        r = r_trial;
        double prev = cost;
        cost = trial_cost;
        rep.cost = cost;
        rep.cost_trace.push_back(cost);
        lambda = std::max(lambda / opts.lambda_down, 1e-300);

        // ftol is referenced to the starting cost: once accepted steps stop
        // buying a meaningful fraction of it, the fit has flattened out.
        double cost_scale = std::max(rep.cost_trace.front(), 1e-300);
        if (prev - cost <= opts.ftol * cost_scale) {
          rep.status = LmStatus::ConvergedFtol;
          return rep;
        }
        if (norm2(delta) <= opts.xtol * (norm2(rep.theta) + opts.xtol)) {
          rep.status = LmStatus::ConvergedXtol;
          return rep;
        }
        break;
      }

      if (lambda > kLambdaCeiling) {
        // No decrease possible even with near-gradient steps: the step has
        // collapsed, report stationarity.
        rep.status = LmStatus::ConvergedXtol;
        return rep;
      }
      lambda *= opts.lambda_up;
    }
  }
  rep.status = LmStatus::MaxIters;
  return rep;
}

LsqResult linear_lsq(const std::vector<std::vector<double>> &design,
                     const std::vector<double> &target) {
  const std::size_t n = design.size();
  if (n == 0 || n != target.size())
    throw std::invalid_argument("linear_lsq: design/target size mismatch");
  const std::size_t p = design[0].size();
  if (p == 0 || n < p)
    throw std::invalid_argument("linear_lsq: need n >= p >= 1");

  std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
  std::vector<double> atb(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (design[i].size() != p)
      throw std::invalid_argument("linear_lsq: ragged design matrix");
    for (std::size_t a = 0; a < p; ++a) {
      atb[a] += design[i][a] * target[i];
      for (std::size_t b = a; b < p; ++b)
        ata[a][b] += design[i][a] * design[i][b];
    }
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < a; ++b)
      ata[a][b] = ata[b][a];

  LsqResult res;
  if (cholesky_solve(ata, atb, res.x))
    return res;

  double trace = 0.0;
  for (std::size_t a = 0; a < p; ++a)
    trace += ata[a][a];
  double ridge = trace > 0.0 ? 1e-12 * trace / static_cast<double>(p) : 1e-12;
  for (std::size_t a = 0; a < p; ++a)
    ata[a][a] += ridge;
  res.degenerate = true;
  if (!cholesky_solve(ata, atb, res.x)) {
    // Pathological even with ridge; escalate until it factors.
    for (int attempt = 0; attempt < 60; ++attempt) {
      ridge *= 1e3;
      for (std::size_t a = 0; a < p; ++a)
        ata[a][a] += ridge;
      if (cholesky_solve(ata, atb, res.x))
        return res;
    }
    throw std::runtime_error("linear_lsq: normal equations unsolvable");
  }
  return res;
}

} // namespace respfit
