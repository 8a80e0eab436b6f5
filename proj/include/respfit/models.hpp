#pragma once

/**
 * @file models.hpp
 * @brief Linear and quadratic respiratory-mechanics models and their
 *        forward volume simulation.
 *
 * Both models share the single-compartment pressure balance
 *   Pv = F * Raw + Pc(V)
 * with the elastic term Pc(V) = V/C (linear) or a1*V + a2*V^2 (quadratic).
 * The forward simulation integrates the resulting scalar ODE
 *   dV/dt = (Pv - Pc(V)) / Raw
 * from V(0) = 0 with classical fixed-step 4th-order integration, one step
 * per sample, interpolating Pv linearly at half steps.
 */

#include "respfit/signal.hpp"

#include <vector>

namespace respfit {

struct LinearLungModel {
  double c_ml_per_cmH2O = 50.0;      // compliance C
  double raw_cmH2O_s_per_ml = 0.01;  // airway resistance Raw

  double elastance() const { return 1.0 / c_ml_per_cmH2O; }
};

struct QuadraticLungModel {
  double a1_cmH2O_per_ml = 0.02;
  double a2_cmH2O_per_ml2 = 0.0;     // may be negative
  double raw_cmH2O_s_per_ml = 0.01;
};

/// Elastic pressure at a given volume.
double pc_of_v(const LinearLungModel &m, double v_ml);
double pc_of_v(const QuadraticLungModel &m, double v_ml);

struct VolumePrediction {
  std::vector<double> volume; // ml, aligned to the input samples
  bool diverged = false;      // |V| exceeded the guard or went non-finite
};

// Trial parameters can blow the quadratic ODE up; the guard keeps the
// optimizer loop total by reporting divergence in-band.
inline constexpr double kVolumeDivergenceGuardMl = 1e5;

/// Integrates the model ODE over a variable-pressure input sampled at dt.
/// On divergence the output is truncated at the offending sample and
/// `diverged` is set.
VolumePrediction simulate_volume(const LinearLungModel &m,
                                 const std::vector<double> &pv, double dt);
VolumePrediction simulate_volume(const QuadraticLungModel &m,
                                 const std::vector<double> &pv, double dt);

struct ResidualEval {
  std::vector<double> r; // predicted minus measured volume, ml
  bool diverged = false; // callers treat the cost as +infinity
};

/// r[k] = Vhat[k] - V[k] using simulate_volume on the cycle's pv.
ResidualEval residuals(const LinearLungModel &m, const BreathCycle &cycle);
ResidualEval residuals(const QuadraticLungModel &m, const BreathCycle &cycle);

} // namespace respfit
