#pragma once

/**
 * @file patient.hpp
 * @brief Simulated patients: sigmoidal and hysteretic pressure-volume
 *        characteristics driven by parametric PCV/VCV ventilator programs,
 *        with PEEP schedules and uniform measurement noise.
 *
 * The simulator integrates the same pressure balance the identification
 * side fits, so every clean sample satisfies P = F*Raw + Pc(V) exactly.
 * Each PEEP step opens with a short equilibrium hold at the volume where
 * the elastic pressure equals the PEEP.
 */

#include "respfit/models.hpp"
#include "respfit/signal.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace respfit {

/// Four-constant sigmoidal P-V characteristic,
/// V(P) = a + b / (1 + exp(-(P - c)/d)), valid volume range (a, a+b).
struct SigmoidPV {
  double a_ml = 0.0;
  double b_ml = 4000.0;
  double c_cmH2O = 15.0;
  double d_cmH2O = 4.0;
};

/// Analytic inverse of the sigmoid: alveolar pressure at volume v.
/// Throws EnvelopeError when v is outside the open interval (a, a+b).
double sigmoid_pc(const SigmoidPV &curve, double v_ml);

/// Forward sigmoid: volume at alveolar pressure p (always interior).
double sigmoid_volume(const SigmoidPV &curve, double p_cmH2O);

enum class BreathPhase { Inspiration, Expiration };

/// Local hysteresis loop around a sigmoid backbone. The two limbs are the
/// base curve shifted by +/- w(v) with
///   w(v) = (loop_width/2) * sin(pi * (v - v_min)/(v_max - v_min)),
/// so they coincide at both turning points and the inspiration limb lies
/// above the expiration limb everywhere inside the span.
struct HysteresisPV {
  SigmoidPV base;
  double loop_width_cmH2O = 3.0;
  double v_min_ml = 0.0; // loop span for the operating cycle
  double v_max_ml = 0.0;
};

/// Limb pressure at volume v. Throws SimulationStateError when v lies
/// materially outside the configured loop span.
double hysteresis_pc(const HysteresisPV &curve, double v_ml, BreathPhase phase);

enum class VentMode { PCV, VCV };

const char *to_string(VentMode m);

struct PeepStep {
  double peep_cmH2O = 5.0;
  int n_cycles = 10;
};

struct VentilatorProgram {
  VentMode mode = VentMode::PCV;
  std::vector<PeepStep> peep_schedule{{5.0, 10}};
  double breath_rate_per_min = 12.0;
  double insp_fraction = 1.0 / 3.0;
  // PCV: driving pressure above PEEP (cmH2O); VCV: tidal volume (ml).
  double amplitude = 10.0;
  double rise_time_s = 0.08;    // PCV pressure ramp (also used for the fall)
  double insp_flow_ml_s = 0.0;  // VCV constant flow; 0 derives it from the
                                // tidal volume with a 20% inspiratory pause
  double noise_pct_p = 0.0;     // % of clean peak-to-peak, uniform, pressure
  double noise_pct_f = 0.0;     // same for flow

  void validate() const; // throws std::invalid_argument
};

/// Symmetric PEEP staircase: min..max..min, each level held
/// cycles_per_step cycles. Other program fields keep their defaults.
VentilatorProgram titration_program(double peep_min_cmH2O,
                                    double peep_max_cmH2O, double step_cmH2O,
                                    int cycles_per_step);

using PvCurve = std::variant<SigmoidPV, HysteresisPV, QuadraticLungModel>;

struct PatientSpec {
  PvCurve pv_curve = SigmoidPV{};
  double raw_cmH2O_s_per_ml = 0.01;
  VentilatorProgram program;
  std::uint64_t seed = 1;
};

/// Per-cycle ground truth recorded while generating.
struct CycleTruth {
  int index = 0;
  std::size_t start_idx = 0;  // inspiration onset sample
  std::size_t end_idx = 0;    // exclusive
  double peep_cmH2O = 0.0;
  double v_eq_ml = 0.0;       // absolute equilibrium volume of the PEEP step
  double vt_actual_ml = 0.0;  // max volume excursion within the cycle
  int curvature_sign = 0;     // sign of d2P/dV2 at the excursion center
  // Generator parameters, present for quadratic-curve patients.
  std::optional<double> true_a1, true_a2, true_raw;
};

struct SimulatedRecording {
  TimeSeries ts;                     // as emitted (noise applied)
  TimeSeries clean;                  // noiseless twin
  std::vector<double> volume_abs_ml; // simulator volume state per sample
  std::vector<double> pc_used_cmH2O; // elastic pressure used per sample
  std::vector<CycleTruth> cycles;
  double sample_rate_hz = 256.0;
};

/// Generates the recording for a patient spec. Deterministic for a fixed
/// seed. Throws EnvelopeError (naming the PEEP step) when the program would
/// drive the volume outside the curve envelope.
SimulatedRecording simulate_recording(const PatientSpec &spec);

/// PatientSpec JSON document (schema documented in the README).
std::string patient_spec_to_json_text(const PatientSpec &spec);
PatientSpec patient_spec_from_json_text(const std::string &text);
PatientSpec load_patient_spec(const std::string &path);

/// Ground-truth sidecar for oracle tests; never read by the identify path.
std::string ground_truth_to_json_text(const PatientSpec &spec,
                                      const SimulatedRecording &rec);

} // namespace respfit
