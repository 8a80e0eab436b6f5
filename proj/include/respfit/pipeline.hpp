#pragma once

/**
 * @file pipeline.hpp
 * @brief Per-cycle hierarchical identification: ventilator-style linear
 *        initialization, linear refinement, least-squares quadratic seeding,
 *        quadratic refinement, and an NRMSE acceptance gate with a single
 *        re-initialized retry per cycle.
 */

#include "respfit/models.hpp"
#include "respfit/nls.hpp"
#include "respfit/signal.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace respfit {

enum class FitStatus {
  Accepted,
  AcceptedAfterRetry,
  Discarded,
  DiscardedFirstCycle,
};

const char *to_string(FitStatus s);

struct FitResult {
  int cycle_index = 0;
  FitStatus status = FitStatus::Discarded;
  bool aux_used = false; // the one-shot retry ran

  std::optional<LinearLungModel> linear;
  std::optional<QuadraticLungModel> quadratic;
  double nrmse_linear_pct = 0.0;
  double nrmse_quadratic_pct = 0.0;
  double threshold_pct = 0.0;

  std::optional<LmReport> linear_report;
  std::optional<LmReport> quadratic_report; // final attempt
  std::vector<double> attempt_nrmse_pct;    // NRMSE of each quadratic attempt
  std::string note; // discard reason or landmark warnings
};

enum class ThresholdMode {
  VentilatorLinear, // per-cycle NRMSE of the raw landmark-initialized model
  Fixed,
};

struct PipelineConfig {
  ThresholdMode threshold_mode = ThresholdMode::VentilatorLinear;
  double fixed_threshold_pct = 90.0; // used when threshold_mode == Fixed
  LmOptions lm_options_linear;
  LmOptions lm_options_quadratic;
  bool warm_start = true;

  PipelineConfig();
};

/// Solver boxes generous enough to cover physiological values while keeping
/// the ODE away from blow-up corners.
LmOptions default_linear_lm_options();    // theta = [C, Raw]
LmOptions default_quadratic_lm_options(); // theta = [a1, a2, Raw]

struct LinearInitResult {
  LinearLungModel model;
  bool clamped_c = false;
  bool clamped_raw = false;
};

/// Landmark initializers: C = VTinsp / (Pplat - PEEP), Raw = (PIP - Pplat) / PIF,
/// clamped into the solver bounds. Throws DegenerateCycleError when
/// plateau == peep or pif <= 0.
LinearInitResult linear_init(const BreathCycle &cycle);

/// Refines the linear model by minimizing the squared volume error.
std::pair<LinearLungModel, LmReport>
identify_linear(const BreathCycle &cycle, const LinearLungModel &init,
                const LmOptions &opts = default_linear_lm_options());

/// Seeds the quadratic model: Raw carried over, (a1, a2) from the linear
/// least-squares fit of pv - flow*Raw against (V, V^2). Throws
/// DegenerateCycleError when the design is degenerate (V ~ 0 throughout).
QuadraticLungModel quadratic_init(const BreathCycle &cycle,
                                  const LinearLungModel &lin);

std::pair<QuadraticLungModel, LmReport>
identify_quadratic(const BreathCycle &cycle, const QuadraticLungModel &init,
                   const LmOptions &opts = default_quadratic_lm_options());

/// Fit score in percent: 100 * (1 - ||v - v_hat|| / ||v - mean(v)||).
/// May be negative for terrible fits. Throws std::domain_error when v is
/// constant and std::invalid_argument on length mismatch.
double nrmse_pct(const std::vector<double> &v,
                 const std::vector<double> &v_hat);

/// Raised when every cycle was discarded; carries the per-cycle diagnostics.
class PipelineError : public std::runtime_error {
public:
  PipelineError(const std::string &msg, std::vector<FitResult> results)
      : std::runtime_error(msg), results(std::move(results)) {}
  std::vector<FitResult> results;
};

/// Runs the full per-cycle algorithm over a segmented recording.
///
/// Cycle 1 seeds the quadratic stage from the identified linear model;
/// later cycles warm-start from the last accepted quadratic model. A cycle
/// whose quadratic NRMSE falls below the threshold is retried once from a
/// re-initialized seed (inflated linear elastance, zero curvature); the
/// first cycle is discarded outright on failure. Discarded cycles never
/// update the warm start.
std::vector<FitResult> run_pipeline(const std::vector<BreathCycle> &cycles,
                                    const PipelineConfig &cfg = {});

/// JSON-lines serialization of fit results (one object per cycle).
std::string fit_results_to_jsonl(const std::vector<FitResult> &results);
std::vector<FitResult> fit_results_from_jsonl(const std::string &text);

} // namespace respfit
