#pragma once

/**
 * @file validation.hpp
 * @brief Built-in validation battery: simulated-patient scenarios with
 *        known ground truth, run end-to-end through the identification
 *        pipeline and checked against fixed thresholds.
 */

#include "respfit/nls.hpp"
#include "respfit/patient.hpp"
#include "respfit/pipeline.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace respfit {

/// The three desk sigmoid patients (different constants and Raw). Index 0
/// is the reference patient; each comes with PEEP placements near the LIP,
/// in the linear region and near the UIP of its own curve.
PatientSpec desk_sigmoid_patient(int which, double noise_pct_p = 0.0,
                                 double noise_pct_f = 0.0);
/// {LIP-region PEEP, linear-region PEEP, UIP-region PEEP} for that patient.
std::vector<double> desk_patient_peeps(int which);

/// Quadratic-curve patient used for exact parameter-recovery oracles.
PatientSpec quadratic_oracle_patient();

/// Ten hysteresis scenarios spanning the envelope from near-FRC to
/// near-TLC, volume-controlled. second element: expected curvature sign
/// (0 marks the linear scenario).
std::vector<std::pair<PatientSpec, int>> hysteresis_battery();

/// Staircase PEEP titration on the desk sigmoid patient.
PatientSpec titration_patient();

/// Fit scores per PEEP level, means over accepted cycles.
struct RegionFitStats {
  double mean_nrmse_lm = 0.0;
  double mean_nrmse_nlm = 0.0;
  double mean_a1 = 0.0;
  double mean_a2 = 0.0;
  double mean_vt_ml = 0.0;
  int n_accepted = 0;
  int n_cycles = 0;
};

/// Runs simulate -> segment -> identify and groups results by the nearest
/// programmed PEEP level.
std::map<double, RegionFitStats> fit_stats_by_peep(const PatientSpec &spec,
                                                   const PipelineConfig &cfg);

struct ValidationRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationOptions {
  bool quick = false;             // noiseless subset only
  std::set<int> only;             // criterion ids to run; empty = all
  std::optional<LmOptions> lm_linear_override;
  std::optional<LmOptions> lm_quadratic_override;
};

std::vector<ValidationRow> run_validation(const ValidationOptions &opts = {});

bool all_passed(const std::vector<ValidationRow> &rows);
std::string render_validation_table(const std::vector<ValidationRow> &rows);

} // namespace respfit
