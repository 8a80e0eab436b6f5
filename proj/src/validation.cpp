#include "respfit/validation.hpp"

#include "respfit/analysis.hpp"
#include "respfit/errors.hpp"
#include "respfit/signal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace respfit {

namespace {

PipelineConfig make_config(const ValidationOptions &opts) {
  PipelineConfig cfg;
  if (opts.lm_linear_override)
    cfg.lm_options_linear = *opts.lm_linear_override;
  if (opts.lm_quadratic_override)
    cfg.lm_options_quadratic = *opts.lm_quadratic_override;
  return cfg;
}

bool accepted(const FitResult &r) {
  return r.status == FitStatus::Accepted ||
         r.status == FitStatus::AcceptedAfterRetry;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

} // namespace

PatientSpec desk_sigmoid_patient(int which, double noise_pct_p,
                                 double noise_pct_f) {
  PatientSpec spec;
  SigmoidPV curve;
  switch (which) {
  case 0:
    curve = {0.0, 4000.0, 15.0, 4.0};
    spec.raw_cmH2O_s_per_ml = 0.01;
    break;
  case 1:
    curve = {0.0, 3000.0, 14.0, 3.0};
    spec.raw_cmH2O_s_per_ml = 0.015;
    break;
  case 2:
    curve = {0.0, 2500.0, 18.0, 5.0};
    spec.raw_cmH2O_s_per_ml = 0.008;
    break;
  default:
    throw std::invalid_argument("desk_sigmoid_patient: index 0..2");
  }
  spec.pv_curve = curve;

  // Slow deep breaths: expiration must cover several time constants of the
  // high-compliance mid-curve region so cycles start at equilibrium.
  VentilatorProgram prog;
  prog.mode = VentMode::PCV;
  prog.breath_rate_per_min = 3.0;
  prog.insp_fraction = 0.22;
  prog.amplitude = 4.0;
  prog.rise_time_s = 0.08;
  prog.noise_pct_p = noise_pct_p;
  prog.noise_pct_f = noise_pct_f;
  prog.peep_schedule.clear();
  for (double peep : desk_patient_peeps(which))
    prog.peep_schedule.push_back({peep, 6});
  spec.program = prog;
  spec.seed = 20240700 + static_cast<std::uint64_t>(which);
  return spec;
}

std::vector<double> desk_patient_peeps(int which) {
  switch (which) {
  case 0:
    return {4.0, 13.0, 22.0};
  case 1:
    return {5.0, 12.0, 19.0};
  case 2:
    return {5.0, 16.0, 27.0};
  default:
    throw std::invalid_argument("desk_patient_peeps: index 0..2");
  }
}

PatientSpec quadratic_oracle_patient() {
  PatientSpec spec;
  QuadraticLungModel q;
  q.a1_cmH2O_per_ml = 0.026;
  q.a2_cmH2O_per_ml2 = 1.45e-4;
  spec.pv_curve = q;
  spec.raw_cmH2O_s_per_ml = 0.01;

  VentilatorProgram prog;
  prog.mode = VentMode::PCV;
  prog.breath_rate_per_min = 10.0;
  prog.insp_fraction = 1.0 / 3.0;
  prog.amplitude = 17.0; // drives roughly 260 ml of tidal volume
  prog.rise_time_s = 0.08;
  prog.peep_schedule = {{5.0, 10}};
  spec.program = prog;
  spec.seed = 7;
  return spec;
}

std::vector<std::pair<PatientSpec, int>> hysteresis_battery() {
  // (PEEP, VT, loop width) triples walking the default sigmoid from
  // near-FRC to near-TLC; expected curvature sign from the backbone at the
  // excursion center (midpoint volume b/2 = 2000 ml separates the
  // concavities). Loops are widest where recruitment hysteresis is
  // strongest (curve ends) and nearly closed in the linear region.
  struct Row {
    double peep, vt, loop_width;
    int sign;
  };
  const std::vector<Row> rows = {
      {3.5, 500.0, 2.5, -1}, {4.0, 450.0, 2.0, -1}, {4.0, 550.0, 1.5, -1},
      {4.5, 600.0, 2.0, -1}, {4.0, 650.0, 2.5, -1}, {13.0, 600.0, 0.5, 0},
      {20.0, 500.0, 1.5, 1}, {19.0, 550.0, 1.0, 1}, {21.0, 450.0, 1.5, 1},
      {22.0, 400.0, 1.5, 1},
  };
  std::vector<std::pair<PatientSpec, int>> out;
  int idx = 0;
  for (const Row &r : rows) {
    PatientSpec spec;
    HysteresisPV h;
    h.base = {0.0, 4000.0, 15.0, 4.0};
    h.loop_width_cmH2O = r.loop_width;
    spec.pv_curve = h;
    spec.raw_cmH2O_s_per_ml = 0.01;

    VentilatorProgram prog;
    prog.mode = VentMode::VCV;
    prog.breath_rate_per_min = 5.0;
    prog.insp_fraction = 0.3;
    prog.amplitude = r.vt;
    prog.peep_schedule = {{r.peep, 6}};
    spec.program = prog;
    spec.seed = 100 + static_cast<std::uint64_t>(idx++);
    out.emplace_back(spec, r.sign);
  }
  return out;
}

PatientSpec titration_patient() {
  PatientSpec spec = desk_sigmoid_patient(0);
  VentilatorProgram prog = titration_program(5.0, 25.0, 5.0, 3);
  prog.mode = VentMode::PCV;
  prog.breath_rate_per_min = 4.0;
  prog.insp_fraction = 0.3;
  prog.amplitude = 3.0; // small excursions keep a1 local to each PEEP
  prog.rise_time_s = 0.08;
  spec.program = prog;
  spec.seed = 11;
  return spec;
}

std::map<double, RegionFitStats> fit_stats_by_peep(const PatientSpec &spec,
                                                   const PipelineConfig &cfg) {
  SimulatedRecording rec = simulate_recording(spec);
  std::vector<BreathCycle> cycles = segment_cycles(rec.ts);
  if (cycles.empty())
    throw std::runtime_error("fit_stats_by_peep: no cycles segmented");
  std::vector<FitResult> fits = run_pipeline(cycles, cfg);

  std::vector<double> levels;
  for (const PeepStep &s : spec.program.peep_schedule)
    if (std::find(levels.begin(), levels.end(), s.peep_cmH2O) == levels.end())
      levels.push_back(s.peep_cmH2O);

  std::map<double, RegionFitStats> stats;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    double peep = cycles[i].peep_cmH2O;
    double nearest = levels.front();
    for (double l : levels)
      if (std::abs(l - peep) < std::abs(nearest - peep))
        nearest = l;
    RegionFitStats &st = stats[nearest];
    ++st.n_cycles;
    const FitResult &fr = fits[i];
    if (!accepted(fr))
      continue;
    ++st.n_accepted;
    st.mean_nrmse_lm += fr.nrmse_linear_pct;
    st.mean_nrmse_nlm += fr.nrmse_quadratic_pct;
    st.mean_a1 += fr.quadratic->a1_cmH2O_per_ml;
    st.mean_a2 += fr.quadratic->a2_cmH2O_per_ml2;
    st.mean_vt_ml += cycles[i].vt_insp_ml;
  }
  for (auto &[peep, st] : stats) {
    if (st.n_accepted == 0)
      continue;
    double n = st.n_accepted;
    st.mean_nrmse_lm /= n;
    st.mean_nrmse_nlm /= n;
    st.mean_a1 /= n;
    st.mean_a2 /= n;
    st.mean_vt_ml /= n;
  }
  return stats;
}

namespace {

void criterion1_parameter_recovery(std::vector<ValidationRow> &rows,
                                   const PipelineConfig &cfg) {
  ValidationRow row{"criterion1 parameter recovery (quadratic oracle)", false,
                    ""};
  try {
    auto t0 = std::chrono::steady_clock::now();
    PatientSpec spec = quadratic_oracle_patient();
    SimulatedRecording rec = simulate_recording(spec);
    std::vector<BreathCycle> cycles = segment_cycles(rec.ts);
    std::vector<FitResult> fits = run_pipeline(cycles, cfg);
    double seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();

    const auto &q = std::get<QuadraticLungModel>(spec.pv_curve);
    int n_accepted = 0;
    double worst_rel = 0.0;
    for (const FitResult &fr : fits) {
      if (!accepted(fr))
        continue;
      ++n_accepted;
      double e1 = std::abs(fr.quadratic->a1_cmH2O_per_ml - q.a1_cmH2O_per_ml) /
                  q.a1_cmH2O_per_ml;
      double e2 = std::abs(fr.quadratic->a2_cmH2O_per_ml2 - q.a2_cmH2O_per_ml2) /
                  q.a2_cmH2O_per_ml2;
      double er = std::abs(fr.quadratic->raw_cmH2O_s_per_ml -
                           spec.raw_cmH2O_s_per_ml) /
                  spec.raw_cmH2O_s_per_ml;
      worst_rel = std::max({worst_rel, e1, e2, er});
    }
    row.pass = n_accepted >= 9 && worst_rel <= 0.02 && seconds < 30.0;
    row.detail = std::to_string(n_accepted) + "/" +
                 std::to_string(fits.size()) + " accepted, worst rel err " +
                 fmt(100.0 * worst_rel) + "%, " + fmt(seconds) + " s";
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

struct RegionScores {
  RegionFitStats lip, lin, uip;
  bool ok = false;
  std::string error;
};

RegionScores region_scores(int which, double np, double nf,
                           const PipelineConfig &cfg) {
  RegionScores sc;
  try {
    auto peeps = desk_patient_peeps(which);
    RegionFitStats *slots[3] = {&sc.lip, &sc.lin, &sc.uip};
    for (int r = 0; r < 3; ++r) {
      // One recording per region so each PEEP level is observed in steady
      // state without inter-level transitions.
      PatientSpec spec = desk_sigmoid_patient(which, np, nf);
      spec.program.peep_schedule = {{peeps[r], 6}};
      spec.seed += static_cast<std::uint64_t>(1000 * (r + 1));
      auto stats = fit_stats_by_peep(spec, cfg);
      *slots[r] = stats[peeps[r]];
    }
    sc.ok = sc.lip.n_accepted > 0 && sc.lin.n_accepted > 0 &&
            sc.uip.n_accepted > 0;
    if (!sc.ok)
      sc.error = "a region has no accepted cycles";
  } catch (const std::exception &e) {
    sc.error = e.what();
  }
  return sc;
}

void criterion2_region_fit_advantage(std::vector<ValidationRow> &rows,
                                     const PipelineConfig &cfg) {
  ValidationRow row{"criterion2 region-dependent fit advantage (noiseless)",
                    false, ""};
  RegionScores sc = region_scores(0, 0.0, 0.0, cfg);
  if (!sc.ok) {
    row.detail = sc.error;
    rows.push_back(row);
    return;
  }
  double d_lip = sc.lip.mean_nrmse_nlm - sc.lip.mean_nrmse_lm;
  double d_lin = sc.lin.mean_nrmse_nlm - sc.lin.mean_nrmse_lm;
  double d_uip = sc.uip.mean_nrmse_nlm - sc.uip.mean_nrmse_lm;
  bool pass = sc.lip.mean_nrmse_nlm >= 97.0 && sc.uip.mean_nrmse_nlm >= 97.0 &&
              d_lip >= 2.0 && d_uip >= 2.0 && sc.lin.mean_nrmse_nlm >= 99.0 &&
              sc.lin.mean_nrmse_lm >= 99.0 && std::abs(d_lin) < 1.0;
  row.pass = pass;
  std::ostringstream det;
  det << "LIP " << fmt(sc.lip.mean_nrmse_lm) << "/" << fmt(sc.lip.mean_nrmse_nlm)
      << " lin " << fmt(sc.lin.mean_nrmse_lm) << "/"
      << fmt(sc.lin.mean_nrmse_nlm) << " UIP " << fmt(sc.uip.mean_nrmse_lm)
      << "/" << fmt(sc.uip.mean_nrmse_nlm) << " (LM/NLM)";
  row.detail = det.str();
  rows.push_back(row);
}

void criterion3_noise_robustness(std::vector<ValidationRow> &rows,
                                 const PipelineConfig &cfg, bool quick) {
  struct NoiseLevel {
    double p, f;
    const char *label;
  };
  const std::vector<NoiseLevel> levels = {{3.0, 3.5, "manufacturer"},
                                          {10.0, 10.0, "stress"}};
  for (const NoiseLevel &nl : levels) {
    for (int which = 0; which < 3; ++which) {
      ValidationRow row{std::string("criterion3 noise ") + nl.label +
                            " patient " + std::to_string(which),
                        false, ""};
      if (quick) {
        row.pass = true;
        row.detail = "skipped (--quick)";
        rows.push_back(row);
        continue;
      }
      RegionScores sc = region_scores(which, nl.p, nl.f, cfg);
      if (!sc.ok) {
        row.detail = sc.error;
        rows.push_back(row);
        continue;
      }
      bool ordering = sc.lip.mean_nrmse_nlm >= sc.lip.mean_nrmse_lm &&
                      sc.uip.mean_nrmse_nlm >= sc.uip.mean_nrmse_lm;
      bool pass = ordering;
      if (nl.p <= 3.0) { // manufacturer bounds: absolute quality floor too
        pass = pass && sc.lip.mean_nrmse_nlm >= 90.0 &&
               sc.lin.mean_nrmse_nlm >= 90.0 && sc.uip.mean_nrmse_nlm >= 90.0 &&
               sc.lin.mean_nrmse_lm >= 90.0;
      }
      row.pass = pass;
      std::ostringstream det;
      det << "LIP " << fmt(sc.lip.mean_nrmse_lm) << "/"
          << fmt(sc.lip.mean_nrmse_nlm) << " lin " << fmt(sc.lin.mean_nrmse_lm)
          << "/" << fmt(sc.lin.mean_nrmse_nlm) << " UIP "
          << fmt(sc.uip.mean_nrmse_lm) << "/" << fmt(sc.uip.mean_nrmse_nlm);
      row.detail = det.str();
      rows.push_back(row);
    }
  }
}

void criterion4_region_classification(std::vector<ValidationRow> &rows,
                                      const PipelineConfig &cfg) {
  ValidationRow row{"criterion4 region classification (hysteresis battery)",
                    false, ""};
  try {
    int matches = 0, total = 0;
    bool magnitudes_ok = true;
    std::ostringstream det;
    for (const auto &[spec, true_sign] : hysteresis_battery()) {
      ++total;
      SimulatedRecording rec = simulate_recording(spec);
      std::vector<BreathCycle> cycles = segment_cycles(rec.ts);
      std::vector<FitResult> fits = run_pipeline(cycles, cfg);
      double a1 = 0, a2 = 0, vt = 0;
      int n = 0;
      for (std::size_t i = 0; i < fits.size(); ++i) {
        if (!accepted(fits[i]))
          continue;
        ++n;
        a1 += fits[i].quadratic->a1_cmH2O_per_ml;
        a2 += fits[i].quadratic->a2_cmH2O_per_ml2;
        vt += cycles[i].vt_insp_ml;
      }
      if (n == 0) {
        det << " [s" << total - 1 << " no accepted]";
        continue;
      }
      a1 /= n;
      a2 /= n;
      vt /= n;
      double ratio = std::abs(a2) * vt / a1;
      bool match = true_sign == 0
                       ? ratio < 0.10
                       : (a2 > 0.0 ? 1 : -1) == true_sign;
      if (match)
        ++matches;
      if (true_sign != 0 && ratio < 0.25)
        magnitudes_ok = false;
      if (true_sign == 0 && ratio >= 0.10)
        magnitudes_ok = false;
      det << " [s" << total - 1 << " a2=" << fmt(a2) << " r=" << fmt(ratio)
          << (match ? "" : " MISMATCH") << "]";
    }
    row.pass = matches >= 9 && magnitudes_ok;
    row.detail = std::to_string(matches) + "/" + std::to_string(total) +
                 " sign matches;" + det.str();
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

void criterion5_titration(std::vector<ValidationRow> &rows,
                          const PipelineConfig &cfg) {
  ValidationRow row{"criterion5 titration analysis", false, ""};
  try {
    PatientSpec spec = titration_patient();
    SimulatedRecording rec = simulate_recording(spec);
    std::vector<BreathCycle> cycles = segment_cycles(rec.ts);
    std::vector<FitResult> fits = run_pipeline(cycles, cfg);
    TitrationSummary summary =
        summarize_titration(fits, cycles, spec.program);

    const auto &sig = std::get<SigmoidPV>(spec.pv_curve);
    // PEEP level whose equilibrium volume sits nearest the sigmoid midpoint.
    double best_expected = 0.0, best_dist = 1e300;
    for (const PeepStep &s : spec.program.peep_schedule) {
      double v_eq = sigmoid_volume(sig, s.peep_cmH2O);
      double dist = std::abs(v_eq - (sig.a_ml + 0.5 * sig.b_ml));
      if (dist < best_dist) {
        best_dist = dist;
        best_expected = s.peep_cmH2O;
      }
    }
    bool best_ok = summary.best_peep_linear &&
                   std::abs(*summary.best_peep_linear - best_expected) < 0.5;

    // Top level must be flagged overdistension (its equilibrium volume sits
    // above the UIP volume of the curve).
    double top_peep = -1e300;
    const TitrationLevel *top = nullptr;
    for (const TitrationLevel &lvl : summary.levels)
      if (lvl.peep_cmH2O > top_peep) {
        top_peep = lvl.peep_cmH2O;
        top = &lvl;
      }
    bool top_ok = top && top->region &&
                  top->region->region == Region::Overdistension;

    // a2-vs-PEEP crosses zero between regions.
    std::map<double, std::pair<double, int>> a2_by_peep;
    for (const TitrationLevel &lvl : summary.levels)
      if (lvl.n_accepted > 0) {
        a2_by_peep[lvl.peep_cmH2O].first += lvl.mean_a2;
        a2_by_peep[lvl.peep_cmH2O].second += 1;
      }
    bool cross_ok = !a2_by_peep.empty() &&
                    a2_by_peep.begin()->second.first < 0.0 &&
                    a2_by_peep.rbegin()->second.first > 0.0;

    row.pass = best_ok && top_ok && cross_ok;
    std::ostringstream det;
    det << "best_peep "
        << (summary.best_peep_linear ? fmt(*summary.best_peep_linear) : "-")
        << " (expected " << fmt(best_expected) << "), top region "
        << (top && top->region ? to_string(top->region->region) : "-")
        << ", a2 ends " << fmt(a2_by_peep.begin()->second.first) << " .. "
        << fmt(a2_by_peep.rbegin()->second.first);
    row.detail = det.str();
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

void criterion6_solver(std::vector<ValidationRow> &rows,
                       const ValidationOptions &opts) {
  ValidationRow row{"criterion6 solver unit checks", false, ""};
  try {
    LmOptions lm_opts = opts.lm_quadratic_override
                            ? *opts.lm_quadratic_override
                            : LmOptions{};
    lm_opts.lower.clear();
    lm_opts.upper.clear();
    lm_opts.theta_scale.clear();

    // Exponential-decay benchmark y = 5 exp(-2 t).
    std::vector<double> t(50), y(50);
    for (int i = 0; i < 50; ++i) {
      t[i] = 0.05 * i;
      y[i] = 5.0 * std::exp(-2.0 * t[i]);
    }
    auto fn = [&](const std::vector<double> &th, std::vector<double> &r) {
      r.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i)
        r[i] = th[0] * std::exp(-th[1] * t[i]) - y[i];
      return true;
    };
    LmReport rep = lm_minimize(fn, {1.0, 1.0}, lm_opts);
    bool exp_ok = std::abs(rep.theta[0] - 5.0) < 1e-6 &&
                  std::abs(rep.theta[1] - 2.0) < 1e-6;

    bool monotone = true;
    for (std::size_t i = 1; i < rep.cost_trace.size(); ++i)
      if (!(rep.cost_trace[i] < rep.cost_trace[i - 1]))
        monotone = false;

    // Residuals linear in theta reach the least-squares optimum quickly.
    auto lin_fn = [](const std::vector<double> &th, std::vector<double> &r) {
      r = {th[0] - 3.0, th[1] - 7.0, 0.5 * th[0] + th[1] - 8.0};
      return true;
    };
    LsqResult lsq = linear_lsq({{1.0, 0.0}, {0.0, 1.0}, {0.5, 1.0}},
                               {3.0, 7.0, 8.0});
    LmReport lrep = lm_minimize(lin_fn, {0.0, 0.0}, lm_opts);
    bool lin_ok = lrep.iters <= 3 &&
                  std::abs(lrep.theta[0] - lsq.x[0]) < 1e-8 &&
                  std::abs(lrep.theta[1] - lsq.x[1]) < 1e-8;

    row.pass = exp_ok && monotone && lin_ok;
    row.detail = "exp fit (" + fmt(rep.theta[0]) + ", " + fmt(rep.theta[1]) +
                 ") in " + std::to_string(rep.iters) + " iters" +
                 (monotone ? "" : ", trace not monotone") +
                 (lin_ok ? "" : ", linear problem needed " +
                                    std::to_string(lrep.iters) + " iters");
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

void criterion7_numerics(std::vector<ValidationRow> &rows) {
  ValidationRow row{"criterion7 numerical properties", false, ""};
  try {
    // Trapezoid exact on a linear ramp.
    const double dt = 1.0 / 256.0;
    std::vector<double> ramp(257);
    for (int k = 0; k <= 256; ++k)
      ramp[k] = 100.0 * k * dt;
    std::vector<double> v = integrate_flow(ramp, dt);
    bool trap_ok = std::abs(v.back() - 50.0) <= 1e-9 * 50.0;

    // 4th-order convergence on a drive that is linear in time (so grid
    // refinement by linear interpolation is exact).
    QuadraticLungModel m{0.02, 1e-4, 0.01};
    auto make_pv = [](double step, double horizon) {
      std::vector<double> pv;
      for (double t = 0.0; t <= horizon + 1e-12; t += step)
        pv.push_back(2.0 + 3.0 * t);
      return pv;
    };
    const double horizon = 2.0;
    auto run = [&](double step) {
      return simulate_volume(m, make_pv(step, horizon), step);
    };
    double h0 = 1.0 / 64.0;
    VolumePrediction coarse = run(h0), half = run(h0 / 2.0), ref = run(h0 / 64.0);
    auto err_at_end = [&](const VolumePrediction &p, int stride) {
      double e = 0.0;
      for (std::size_t k = 0; k < p.volume.size(); ++k)
        e = std::max(e, std::abs(p.volume[k] -
                                 ref.volume[k * static_cast<std::size_t>(stride)]));
      return e;
    };
    double e1 = err_at_end(coarse, 64);
    double e2 = err_at_end(half, 32);
    double order = std::log2(e1 / e2);
    bool order_ok = order >= 3.9;

    // Pressure-balance residual on a clean simulation.
    PatientSpec spec = desk_sigmoid_patient(0);
    SimulatedRecording rec = simulate_recording(spec);
    double worst = 0.0;
    for (std::size_t k = 0; k < rec.clean.size(); ++k)
      worst = std::max(worst, std::abs(rec.clean.pressure[k] -
                                       rec.clean.flow[k] * spec.raw_cmH2O_s_per_ml -
                                       rec.pc_used_cmH2O[k]));
    bool balance_ok = worst <= 1e-6;

    // NRMSE identities.
    std::vector<double> sig = {0.0, 1.0, 2.0, 3.0};
    bool nrmse_ok = std::abs(nrmse_pct(sig, sig) - 100.0) < 1e-12;
    std::vector<double> mean_pred(sig.size(), 1.5);
    nrmse_ok = nrmse_ok && std::abs(nrmse_pct(sig, mean_pred)) < 1e-12;

    row.pass = trap_ok && order_ok && balance_ok && nrmse_ok;
    row.detail = "order " + fmt(order) + ", balance residual " + fmt(worst) +
                 " cmH2O" + (trap_ok ? "" : ", trapezoid off") +
                 (nrmse_ok ? "" : ", NRMSE identity off");
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

void criterion8_online_rate(std::vector<ValidationRow> &rows,
                            const PipelineConfig &cfg) {
  ValidationRow row{"criterion8 online-rate contract", false, ""};
  try {
    PatientSpec spec = desk_sigmoid_patient(0);
    SimulatedRecording rec = simulate_recording(spec);
    std::vector<BreathCycle> cycles = segment_cycles(rec.ts);
    if (cycles.empty())
      throw std::runtime_error("no cycles");
    const BreathCycle &cycle = cycles[cycles.size() / 2];

    auto t0 = std::chrono::steady_clock::now();
    LinearInitResult init = linear_init(cycle);
    auto [lin, lrep] = identify_linear(cycle, init.model, cfg.lm_options_linear);
    QuadraticLungModel seed = quadratic_init(cycle, lin);
    auto [quad, qrep] = identify_quadratic(cycle, seed, cfg.lm_options_quadratic);
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    (void)quad;
    row.pass = seconds < 1.0;
    row.detail = fmt(seconds) + " s for one cycle (" +
                 std::to_string(lrep.iters) + "+" + std::to_string(qrep.iters) +
                 " iters)";
  } catch (const std::exception &e) {
    row.detail = e.what();
  }
  rows.push_back(row);
}

} // namespace

std::vector<ValidationRow> run_validation(const ValidationOptions &opts) {
  PipelineConfig cfg = make_config(opts);
  auto wanted = [&](int id) {
    return opts.only.empty() || opts.only.count(id) > 0;
  };
  std::vector<ValidationRow> rows;
  if (wanted(1))
    criterion1_parameter_recovery(rows, cfg);
  if (wanted(2))
    criterion2_region_fit_advantage(rows, cfg);
  if (wanted(3))
    criterion3_noise_robustness(rows, cfg, opts.quick);
  if (wanted(4))
    criterion4_region_classification(rows, cfg);
  if (wanted(5))
    criterion5_titration(rows, cfg);
  if (wanted(6))
    criterion6_solver(rows, opts);
  if (wanted(7))
    criterion7_numerics(rows);
  if (wanted(8))
    criterion8_online_rate(rows, cfg);
  return rows;
}

bool all_passed(const std::vector<ValidationRow> &rows) {
  return std::all_of(rows.begin(), rows.end(),
                     [](const ValidationRow &r) { return r.pass; });
}

std::string render_validation_table(const std::vector<ValidationRow> &rows) {
  std::ostringstream out;
  for (const ValidationRow &r : rows)
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " — " << r.detail
        << "\n";
  return out.str();
}

} // namespace respfit
