#pragma once

/**
 * @file signal.hpp
 * @brief Pressure/flow recordings, breath-cycle segmentation and landmarks.
 *
 * Units are fixed throughout the library: pressure in cmH2O, volume in ml,
 * flow in ml/s, time in seconds. Positive flow is inspiration.
 */

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace respfit {

/// Uniformly sampled mouth pressure / flow recording.
struct TimeSeries {
  double sample_rate_hz = 256.0;
  double t0_s = 0.0;
  std::vector<double> pressure; // total mouth pressure P, cmH2O
  std::vector<double> flow;     // F, ml/s, positive = inspiration

  std::size_t size() const { return pressure.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }

  /// Throws FormatError if lengths differ, fewer than 2 samples,
  /// non-positive sample rate, or non-finite values.
  void validate() const;
};

/// One segmented respiratory cycle with derived volume and landmarks.
///
/// Index fields refer to the parent TimeSeries; start_idx is the first
/// sample of inspiration and end_idx is exclusive (the next cycle's start).
struct BreathCycle {
  std::size_t start_idx = 0;
  std::size_t insp_end_idx = 0; // inspiration -> expiration transition
  std::size_t end_idx = 0;      // exclusive

  double sample_rate_hz = 256.0;
  std::vector<double> pv;     // P - PEEP over the cycle, cmH2O
  std::vector<double> flow;   // ml/s
  std::vector<double> volume; // ml, trapezoidal integral, volume[0] = 0

  double peep_cmH2O = 0.0;    // mean pressure over last 50 ms before start
  double pip_cmH2O = 0.0;     // max pressure in cycle
  double plateau_cmH2O = 0.0; // pressure at the flow zero crossing
  double pif_ml_s = 0.0;      // max flow in cycle
  double vt_insp_ml = 0.0;    // max of volume

  // Real data may produce pip < plateau or plateau < peep; flagged, not fatal.
  bool landmark_order_violated = false;

  std::size_t size() const { return pv.size(); }
  double dt() const { return 1.0 / sample_rate_hz; }
};

/// Landmark record handed to the model initializers.
struct CycleLandmarks {
  double pip_cmH2O = 0.0;
  double plateau_cmH2O = 0.0;
  double pif_ml_s = 0.0;
  double peep_cmH2O = 0.0;
  double vt_insp_ml = 0.0;
  // Set when plateau == peep: the compliance initializer would divide by
  // zero, the cycle must be discarded upstream.
  bool plateau_equals_peep = false;
};

/// Breath detection knobs. The defaults implement a debounced zero-crossing
/// detector: a crossing is kept only if flow stays on the new side for
/// debounce_ms. The deadband widens "the new side" so that uniform sensor
/// noise cannot fake a crossing; when unset it is estimated from the signal
/// (median absolute successive difference of flow).
struct SegmentationOptions {
  double debounce_ms = 30.0;
  std::optional<double> flow_deadband_ml_s; // auto-estimated when empty
  double peep_window_ms = 50.0;
};

/// Cumulative trapezoidal integration, V[0] = 0.
/// dt must be positive and flow must hold at least 2 samples.
std::vector<double> integrate_flow(const std::vector<double> &flow, double dt);

/// Splits a recording into complete breath cycles.
///
/// A cycle starts at a debounced negative-to-positive flow crossing (or at
/// the first inspiration after an initial quiet period), inspiration ends at
/// the subsequent positive-to-negative crossing, and the cycle ends at the
/// next start. A trailing cycle whose expiration is cut by the end of the
/// recording is kept if its inspiration completed; other fragments are
/// dropped. Returns an empty vector when no complete cycle exists.
std::vector<BreathCycle> segment_cycles(const TimeSeries &ts,
                                        const SegmentationOptions &opts = {});

/// Pure accessor with validation: throws DegenerateCycleError when
/// vt_insp <= 0, flags plateau == peep.
CycleLandmarks cycle_landmarks(const BreathCycle &cycle);

/// Reads the canonical CSV interchange format (see write_recording).
/// Accepts header `t_s,pressure_cmH2O,flow_ml_s`, the `flow_l_min` variant
/// (converted to ml/s), or the bare `t,P,F` shorthand. Rejects timestamps
/// that are non-monotone or deviate from uniform spacing by more than 1%.
TimeSeries load_recording(const std::string &path);

/// Writes the canonical CSV: header `t_s,pressure_cmH2O,flow_ml_s`, one
/// sample per row. Values are printed with 17 significant digits so a
/// save/load round trip is bit-exact.
void write_recording(const TimeSeries &ts, const std::string &path);

} // namespace respfit
