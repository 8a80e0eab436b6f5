#include "respfit/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace respfit {

const char *to_string(Region r) {
  switch (r) {
  case Region::Atelectasis:
    return "atelectasis";
  case Region::Linear:
    return "linear";
  case Region::Overdistension:
    return "overdistension";
  }
  return "unknown";
}

const char *to_string(TitrationLeg l) {
  return l == TitrationLeg::Ascending ? "ascending" : "descending";
}

RegionCall classify_region(double a1, double a2, double vt_ml,
                           double eps_lin) {
  if (!(a1 > 0.0))
    throw std::domain_error("classify_region: unphysiological fit (a1 <= 0)");
  if (!(vt_ml > 0.0))
    throw std::domain_error("classify_region: tidal volume must be positive");
  RegionCall call;
  call.curvature_ratio = std::abs(a2) * vt_ml * vt_ml / (a1 * vt_ml);
  call.a2_sign = a2 > 0.0 ? 1 : (a2 < 0.0 ? -1 : 0);
  if (call.curvature_ratio < eps_lin)
    call.region = Region::Linear;
  else
    call.region = a2 > 0.0 ? Region::Overdistension : Region::Atelectasis;
  return call;
}

RegionCall classify_region(const FitResult &fit, double vt_ml,
                           double eps_lin) {
  if (!fit.quadratic)
    throw std::domain_error("classify_region: fit has no quadratic model");
  return classify_region(fit.quadratic->a1_cmH2O_per_ml,
                         fit.quadratic->a2_cmH2O_per_ml2, vt_ml, eps_lin);
}

namespace {

bool accepted(const FitResult &r) {
  return r.status == FitStatus::Accepted ||
         r.status == FitStatus::AcceptedAfterRetry;
}

struct LevelCluster {
  std::vector<std::size_t> cycle_ids;
  double peep_sum = 0.0;
  double mean_peep() const {
    return peep_sum / static_cast<double>(cycle_ids.size());
  }
};

} // namespace

TitrationSummary
summarize_titration(const std::vector<FitResult> &fits,
                    const std::vector<BreathCycle> &cycles,
                    const std::optional<VentilatorProgram> &program) {
  if (fits.size() != cycles.size())
    throw std::invalid_argument("summarize_titration: fits/cycles mismatch");
  if (fits.empty())
    throw std::invalid_argument("summarize_titration: empty input");

  // Consecutive runs of cycles within 1 cmH2O form one level instance.
  constexpr double kPeepTol = 1.0;
  std::vector<LevelCluster> clusters;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    double peep = cycles[i].peep_cmH2O;
    if (clusters.empty() ||
        std::abs(peep - clusters.back().mean_peep()) > kPeepTol) {
      clusters.push_back({});
    }
    clusters.back().cycle_ids.push_back(i);
    clusters.back().peep_sum += peep;
  }

  // Snap to declared levels when a program is supplied.
  std::vector<double> declared;
  if (program)
    for (const PeepStep &s : program->peep_schedule)
      declared.push_back(s.peep_cmH2O);

  TitrationSummary summary;
  std::size_t max_level_idx = 0;
  double max_peep = -1e300;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    double p = clusters[ci].mean_peep();
    if (!declared.empty()) {
      auto nearest = std::min_element(
          declared.begin(), declared.end(), [&](double a, double b) {
            return std::abs(a - p) < std::abs(b - p);
          });
      p = *nearest;
    }
    if (p > max_peep) {
      max_peep = p;
      max_level_idx = ci;
    }
    TitrationLevel lvl;
    lvl.peep_cmH2O = p;
    summary.levels.push_back(lvl);
  }

  bool any_accepted = false;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    TitrationLevel &lvl = summary.levels[ci];
    lvl.leg = ci <= max_level_idx ? TitrationLeg::Ascending
                                  : TitrationLeg::Descending;
    lvl.n_cycles = static_cast<int>(clusters[ci].cycle_ids.size());
    double a1 = 0, a2 = 0, c = 0, lm = 0, nlm = 0, vt = 0, inv_a1 = 0;
    for (std::size_t id : clusters[ci].cycle_ids) {
      const FitResult &fr = fits[id];
      if (!accepted(fr) || !fr.quadratic || !fr.linear)
        continue;
      ++lvl.n_accepted;
      a1 += fr.quadratic->a1_cmH2O_per_ml;
      a2 += fr.quadratic->a2_cmH2O_per_ml2;
      c += fr.linear->c_ml_per_cmH2O;
      lm += fr.nrmse_linear_pct;
      nlm += fr.nrmse_quadratic_pct;
      vt += cycles[id].vt_insp_ml;
      inv_a1 += 1.0 / fr.quadratic->a1_cmH2O_per_ml;
    }
    if (lvl.n_accepted > 0) {
      any_accepted = true;
      double n = lvl.n_accepted;
      lvl.mean_a1 = a1 / n;
      lvl.mean_a2 = a2 / n;
      lvl.mean_c_linear = c / n;
      lvl.mean_nrmse_lm = lm / n;
      lvl.mean_nrmse_nlm = nlm / n;
      lvl.mean_vt_ml = vt / n;
      lvl.region = classify_region(lvl.mean_a1, lvl.mean_a2, lvl.mean_vt_ml);
      if (lvl.region->region != Region::Linear) {
        std::ostringstream note;
        note << "PEEP " << lvl.peep_cmH2O << " (" << to_string(lvl.leg)
             << "): ventilated in the " << to_string(lvl.region->region)
             << " region (curvature ratio "
             << lvl.region->curvature_ratio << ")";
        summary.notes.push_back(note.str());
      }
    }
  }
  if (!any_accepted)
    throw std::runtime_error(
        "summarize_titration: no accepted cycles at any PEEP level");

  // Highest mean compliance on the descending leg; all levels when the
  // maneuver has no descending half.
  double best = -1e300;
  for (const TitrationLevel &lvl : summary.levels) {
    if (lvl.n_accepted == 0)
      continue;
    bool eligible = lvl.leg == TitrationLeg::Descending;
    if (!eligible &&
        std::none_of(summary.levels.begin(), summary.levels.end(),
                     [](const TitrationLevel &l) {
                       return l.leg == TitrationLeg::Descending &&
                              l.n_accepted > 0;
                     }))
      eligible = true;
    if (!eligible)
      continue;
    double compliance = 1.0 / lvl.mean_a1;
    if (compliance > best) {
      best = compliance;
      summary.best_peep_linear = lvl.peep_cmH2O;
    }
  }
  return summary;
}

std::vector<FitComparisonRow>
fit_comparison(const std::vector<FitResult> &fits) {
  std::vector<FitComparisonRow> rows;
  rows.reserve(fits.size());
  for (const FitResult &fr : fits) {
    FitComparisonRow row;
    row.cycle_index = fr.cycle_index;
    row.nrmse_lm_pct = fr.nrmse_linear_pct;
    row.nrmse_nlm_pct = fr.nrmse_quadratic_pct;
    row.delta_pct = fr.nrmse_quadratic_pct - fr.nrmse_linear_pct;
    row.status = fr.status;
    rows.push_back(row);
  }
  return rows;
}

std::vector<PvCurveExport>
export_pv_curves(const std::vector<FitResult> &fits,
                 const std::vector<BreathCycle> &cycles) {
  if (fits.size() != cycles.size())
    throw std::invalid_argument("export_pv_curves: fits/cycles mismatch");
  std::vector<PvCurveExport> out;
  constexpr int kPoints = 100;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const FitResult &fr = fits[i];
    if (!accepted(fr) || !fr.quadratic || !fr.linear)
      continue;
    const BreathCycle &cy = cycles[i];
    PvCurveExport ex;
    ex.cycle_index = fr.cycle_index;
    double vt = cy.vt_insp_ml;
    for (int k = 0; k < kPoints; ++k) {
      double v = vt * static_cast<double>(k) / (kPoints - 1);
      ex.linear_curve.push_back({v, pc_of_v(*fr.linear, v)});
      ex.quadratic_curve.push_back({v, pc_of_v(*fr.quadratic, v)});
    }
    double raw = fr.quadratic->raw_cmH2O_s_per_ml;
    ex.measured.reserve(cy.size());
    for (std::size_t k = 0; k < cy.size(); ++k)
      ex.measured.push_back({cy.volume[k], cy.pv[k] - cy.flow[k] * raw});
    out.push_back(std::move(ex));
  }
  return out;
}

std::string fit_comparison_csv(const std::vector<FitComparisonRow> &rows) {
  std::ostringstream out;
  out << "cycle,nrmse_lm_pct,nrmse_nlm_pct,delta_pct,status\n";
  for (const FitComparisonRow &r : rows)
    out << r.cycle_index << "," << r.nrmse_lm_pct << "," << r.nrmse_nlm_pct
        << "," << r.delta_pct << "," << to_string(r.status) << "\n";
  return out.str();
}

std::string titration_summary_json(const TitrationSummary &summary) {
  nlohmann::json j;
  j["levels"] = nlohmann::json::array();
  for (const TitrationLevel &lvl : summary.levels) {
    nlohmann::json lj;
    lj["peep_cmh2o"] = lvl.peep_cmH2O;
    lj["leg"] = to_string(lvl.leg);
    lj["n_cycles"] = lvl.n_cycles;
    lj["n_accepted"] = lvl.n_accepted;
    if (lvl.n_accepted > 0) {
      lj["mean_a1"] = lvl.mean_a1;
      lj["mean_a2"] = lvl.mean_a2;
      lj["mean_c_linear"] = lvl.mean_c_linear;
      lj["mean_nrmse_lm"] = lvl.mean_nrmse_lm;
      lj["mean_nrmse_nlm"] = lvl.mean_nrmse_nlm;
      lj["mean_vt_ml"] = lvl.mean_vt_ml;
      lj["region"] = to_string(lvl.region->region);
      lj["curvature_ratio"] = lvl.region->curvature_ratio;
    }
    j["levels"].push_back(lj);
  }
  if (summary.best_peep_linear)
    j["best_peep_linear"] = *summary.best_peep_linear;
  j["notes"] = summary.notes;
  return j.dump(2) + "\n";
}

std::string a1_a2_vs_peep_csv(const TitrationSummary &summary) {
  std::ostringstream out;
  out << "peep_cmh2o,leg,mean_a1,mean_a2,mean_c_linear,n_accepted\n";
  for (const TitrationLevel &lvl : summary.levels) {
    out << lvl.peep_cmH2O << "," << to_string(lvl.leg) << ",";
    if (lvl.n_accepted > 0)
      out << lvl.mean_a1 << "," << lvl.mean_a2 << "," << lvl.mean_c_linear;
    else
      out << ",,";
    out << "," << lvl.n_accepted << "\n";
  }
  return out.str();
}

std::string report_table(const std::vector<FitResult> &fits,
                         const std::vector<BreathCycle> &cycles) {
  if (fits.size() != cycles.size())
    throw std::invalid_argument("report_table: fits/cycles mismatch");
  std::ostringstream out;
  out << "cycle      a1 [cmH2O/ml]   a2 [cmH2O/ml2]   a1*VT [cmH2O]  "
         "a2*VT^2 [cmH2O]  status\n";
  char line[160];
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const FitResult &fr = fits[i];
    if (!fr.quadratic) {
      std::snprintf(line, sizeof(line), "%5d %15s %16s %14s %16s  %s\n",
                    fr.cycle_index, "-", "-", "-", "-", to_string(fr.status));
      out << line;
      continue;
    }
    double vt = cycles[i].vt_insp_ml;
    double a1 = fr.quadratic->a1_cmH2O_per_ml;
    double a2 = fr.quadratic->a2_cmH2O_per_ml2;
    std::snprintf(line, sizeof(line),
                  "%5d %15.4g %16.4g %14.3g %16.3g  %s\n", fr.cycle_index, a1,
                  a2, a1 * vt, a2 * vt * vt, to_string(fr.status));
    out << line;
  }
  return out.str();
}

void write_pv_curve_files(const std::vector<PvCurveExport> &exports,
                          const std::map<int, TitrationLeg> &cycle_legs,
                          const std::string &out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<std::string, std::ostringstream> files;
  for (const PvCurveExport &ex : exports) {
    auto it = cycle_legs.find(ex.cycle_index);
    std::string leg =
        it != cycle_legs.end() ? to_string(it->second) : "ascending";
    auto &os = files[leg];
    if (os.tellp() == 0)
      os << "cycle,kind,v_ml,p_cmh2o\n";
    auto dump = [&](const char *kind, const std::vector<PvCurvePoint> &pts) {
      for (const PvCurvePoint &p : pts)
        os << ex.cycle_index << "," << kind << "," << p.v_ml << ","
           << p.p_cmH2O << "\n";
    };
    dump("model_linear", ex.linear_curve);
    dump("model_quadratic", ex.quadratic_curve);
    dump("measured", ex.measured);
  }
  for (auto &[leg, os] : files) {
    std::ofstream f(std::filesystem::path(out_dir) /
                    ("pv_curves_" + leg + ".csv"));
    f << os.str();
  }
}

} // namespace respfit
