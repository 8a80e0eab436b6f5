#pragma once

namespace respfit::detail {

/// One classical 4th-order step of v' = f(v, p(t)) where the forcing p is
/// supplied at the step start, midpoint and end. Callers with tabulated
/// forcing pass the linear midpoint interpolant; callers with an analytic
/// waveform evaluate it exactly.
template <typename Rate>
double rk4_forced_step(Rate &&f, double v, double p0, double p_half, double p1,
                       double dt) {
  double k1 = f(v, p0);
  double k2 = f(v + 0.5 * dt * k1, p_half);
  double k3 = f(v + 0.5 * dt * k2, p_half);
  double k4 = f(v + dt * k3, p1);
  return v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

} // namespace respfit::detail
