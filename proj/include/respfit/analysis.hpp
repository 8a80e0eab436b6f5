#pragma once

/**
 * @file analysis.hpp
 * @brief Clinical interpretation of fit sequences: ventilation-region
 *        classification from curvature, PEEP-titration trends, LM-vs-NLM
 *        fit comparison, and plot-ready exports.
 */

#include "respfit/patient.hpp"
#include "respfit/pipeline.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace respfit {

enum class Region { Atelectasis, Linear, Overdistension };

const char *to_string(Region r);

struct RegionCall {
  Region region = Region::Linear;
  double curvature_ratio = 0.0; // |a2| VT^2 / (a1 VT), dimensionless
  int a2_sign = 0;
};

/// Region from the fitted curvature: linear when the quadratic pressure
/// term is negligible against the linear one (ratio < eps_lin), otherwise
/// the sign of a2 decides. Throws std::domain_error when a1 <= 0
/// (unphysiological fit) or vt <= 0.
RegionCall classify_region(double a1, double a2, double vt_ml,
                           double eps_lin = 0.1);
RegionCall classify_region(const FitResult &fit, double vt_ml,
                           double eps_lin = 0.1);

enum class TitrationLeg { Ascending, Descending };

const char *to_string(TitrationLeg l);

struct TitrationLevel {
  double peep_cmH2O = 0.0;
  TitrationLeg leg = TitrationLeg::Ascending;
  int n_cycles = 0;
  int n_accepted = 0;
  double mean_a1 = 0.0;
  double mean_a2 = 0.0;
  double mean_c_linear = 0.0;
  double mean_nrmse_lm = 0.0;
  double mean_nrmse_nlm = 0.0;
  double mean_vt_ml = 0.0;
  std::optional<RegionCall> region; // absent when no cycle was accepted
};

struct TitrationSummary {
  std::vector<TitrationLevel> levels; // ordered as encountered
  std::optional<double> best_peep_linear;
  std::vector<std::string> notes; // non-linear level flags and the like
};

/// Groups accepted cycles into PEEP levels (declared by the program when
/// given, otherwise inferred by clustering per-cycle PEEP with 1 cmH2O
/// tolerance), splits ascending/descending legs at the maximum level, and
/// picks the descending-leg level with the highest mean compliance (1/a1).
/// Throws std::runtime_error when no level has an accepted cycle.
TitrationSummary
summarize_titration(const std::vector<FitResult> &fits,
                    const std::vector<BreathCycle> &cycles,
                    const std::optional<VentilatorProgram> &program = {});

struct FitComparisonRow {
  int cycle_index = 0;
  double nrmse_lm_pct = 0.0;
  double nrmse_nlm_pct = 0.0;
  double delta_pct = 0.0;
  FitStatus status = FitStatus::Discarded;
};

/// Per-cycle LM vs NLM fit scores; discarded cycles kept with their status.
std::vector<FitComparisonRow> fit_comparison(const std::vector<FitResult> &fits);

struct PvCurvePoint {
  double v_ml = 0.0;
  double p_cmH2O = 0.0;
};

struct PvCurveExport {
  int cycle_index = 0;
  std::vector<PvCurvePoint> linear_curve;    // sampled over [0, vt]
  std::vector<PvCurvePoint> quadratic_curve; // sampled over [0, vt]
  std::vector<PvCurvePoint> measured;        // (pv - F*Raw_nlm, V) scatter
};

/// Elastic P-V curves of both fitted models plus the de-resisted measured
/// scatter, for every accepted fit.
std::vector<PvCurveExport>
export_pv_curves(const std::vector<FitResult> &fits,
                 const std::vector<BreathCycle> &cycles);

// ---- plain-text / CSV renditions used by the CLI ----

std::string fit_comparison_csv(const std::vector<FitComparisonRow> &rows);
std::string titration_summary_json(const TitrationSummary &summary);
std::string a1_a2_vs_peep_csv(const TitrationSummary &summary);
/// Table of a1, a2 and their pressure contributions a1*VT, a2*VT^2.
std::string report_table(const std::vector<FitResult> &fits,
                         const std::vector<BreathCycle> &cycles);
/// One CSV per titration leg under out_dir (pv_curves_<leg>.csv).
void write_pv_curve_files(const std::vector<PvCurveExport> &exports,
                          const std::map<int, TitrationLeg> &cycle_legs,
                          const std::string &out_dir);

} // namespace respfit
