#include "respfit/models.hpp"

#include "respfit/detail/rk4.hpp"

#include <cmath>

namespace respfit {

double pc_of_v(const LinearLungModel &m, double v_ml) {
  return v_ml / m.c_ml_per_cmH2O;
}

double pc_of_v(const QuadraticLungModel &m, double v_ml) {
  return v_ml * (m.a1_cmH2O_per_ml + m.a2_cmH2O_per_ml2 * v_ml);
}

namespace {

template <typename Model>
VolumePrediction simulate_impl(const Model &m, const std::vector<double> &pv,
                               double dt) {
  VolumePrediction out;
  if (pv.empty())
    return out;
  out.volume.reserve(pv.size());
  out.volume.push_back(0.0);

  const double inv_raw = 1.0 / m.raw_cmH2O_s_per_ml;
  auto rate = [&](double vol, double p) { return (p - pc_of_v(m, vol)) * inv_raw; };
  double v = 0.0;
  for (std::size_t k = 0; k + 1 < pv.size(); ++k) {
    const double p0 = pv[k];
    const double p1 = pv[k + 1];
    v = detail::rk4_forced_step(rate, v, p0, 0.5 * (p0 + p1), p1, dt);
    if (!std::isfinite(v) || std::abs(v) > kVolumeDivergenceGuardMl) {
      out.diverged = true;
      return out;
    }
    out.volume.push_back(v);
  }
  return out;
}

template <typename Model>
ResidualEval residuals_impl(const Model &m, const BreathCycle &cycle) {
  ResidualEval ev;
  VolumePrediction pred = simulate_volume(m, cycle.pv, cycle.dt());
  if (pred.diverged) {
    ev.diverged = true;
    ev.r = std::move(pred.volume); // partial, callers ignore on divergence
    return ev;
  }
  ev.r.resize(cycle.volume.size());
  for (std::size_t k = 0; k < ev.r.size(); ++k)
    ev.r[k] = pred.volume[k] - cycle.volume[k];
  return ev;
}

} // namespace

VolumePrediction simulate_volume(const LinearLungModel &m,
                                 const std::vector<double> &pv, double dt) {
  return simulate_impl(m, pv, dt);
}

VolumePrediction simulate_volume(const QuadraticLungModel &m,
                                 const std::vector<double> &pv, double dt) {
  return simulate_impl(m, pv, dt);
}

ResidualEval residuals(const LinearLungModel &m, const BreathCycle &cycle) {
  return residuals_impl(m, cycle);
}

ResidualEval residuals(const QuadraticLungModel &m, const BreathCycle &cycle) {
  return residuals_impl(m, cycle);
}

} // namespace respfit
