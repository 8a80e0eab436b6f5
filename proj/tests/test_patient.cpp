#include "respfit/errors.hpp"
#include "respfit/patient.hpp"
#include "respfit/signal.hpp"
#include "respfit/validation.hpp"

#include <doctest.h>

#include <cmath>

using namespace respfit;

TEST_CASE("sigmoid inverse: midpoint, slope, round trip") {
  SigmoidPV s{0.0, 4000.0, 15.0, 4.0};
  CHECK(sigmoid_pc(s, 2000.0) == doctest::Approx(15.0).epsilon(1e-12));

  // dV/dP at the midpoint is b/(4d).
  double h = 1e-4;
  double dv_dp = (sigmoid_volume(s, 15.0 + h) - sigmoid_volume(s, 15.0 - h)) /
                 (2.0 * h);
  CHECK(dv_dp == doctest::Approx(4000.0 / 16.0).epsilon(1e-6));

  for (int k = 1; k < 1000; ++k) {
    double v = 4000.0 * k / 1000.0;
    CHECK(sigmoid_volume(s, sigmoid_pc(s, v)) ==
          doctest::Approx(v).epsilon(1e-9));
  }

  CHECK_THROWS_AS(sigmoid_pc(s, 0.0), EnvelopeError);
  CHECK_THROWS_AS(sigmoid_pc(s, 4000.0), EnvelopeError);
  CHECK_THROWS_AS(sigmoid_pc(s, -10.0), EnvelopeError);
}

TEST_CASE("hysteresis limbs close at the turning points") {
  HysteresisPV h;
  h.base = {0.0, 4000.0, 15.0, 4.0};
  h.loop_width_cmH2O = 3.0;
  h.v_min_ml = 500.0;
  h.v_max_ml = 1100.0;

  for (double v : {500.0, 1100.0})
    CHECK(hysteresis_pc(h, v, BreathPhase::Inspiration) ==
          doctest::Approx(hysteresis_pc(h, v, BreathPhase::Expiration))
              .epsilon(1e-12));

  // Mid-span separation equals the loop width.
  double mid = 800.0;
  double sep = hysteresis_pc(h, mid, BreathPhase::Inspiration) -
               hysteresis_pc(h, mid, BreathPhase::Expiration);
  CHECK(sep == doctest::Approx(3.0).epsilon(1e-9));

  // Orientation and envelope: inspiration above expiration, both limbs
  // within half a loop width of the backbone.
  for (int k = 0; k <= 60; ++k) {
    double v = 500.0 + 600.0 * k / 60.0;
    double pi = hysteresis_pc(h, v, BreathPhase::Inspiration);
    double pe = hysteresis_pc(h, v, BreathPhase::Expiration);
    double base = sigmoid_pc(h.base, v);
    CHECK(pi >= pe);
    CHECK(std::abs(pi - base) <= 1.5 + 1e-12);
    CHECK(std::abs(pe - base) <= 1.5 + 1e-12);
  }

  // Zero-width loop degenerates to the backbone.
  HysteresisPV flat = h;
  flat.loop_width_cmH2O = 0.0;
  CHECK(hysteresis_pc(flat, 700.0, BreathPhase::Inspiration) ==
        doctest::Approx(sigmoid_pc(h.base, 700.0)).epsilon(1e-12));

  CHECK_THROWS_AS(hysteresis_pc(h, 1200.0, BreathPhase::Inspiration),
                  SimulationStateError);
  HysteresisPV unset;
  CHECK_THROWS_AS(hysteresis_pc(unset, 700.0, BreathPhase::Inspiration),
                  SimulationStateError);
}

TEST_CASE("titration_program builds the symmetric staircase") {
  VentilatorProgram prog = titration_program(5.0, 20.0, 5.0, 3);
  std::vector<double> expected = {5.0, 10.0, 15.0, 20.0, 15.0, 10.0, 5.0};
  REQUIRE(prog.peep_schedule.size() == expected.size());
  int total = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(prog.peep_schedule[i].peep_cmH2O == expected[i]);
    CHECK(prog.peep_schedule[i].n_cycles == 3);
    total += prog.peep_schedule[i].n_cycles;
  }
  CHECK(total == 21);

  VentilatorProgram single = titration_program(5.0, 5.0, 1.0, 2);
  REQUIRE(single.peep_schedule.size() == 1);
  CHECK(single.peep_schedule[0].n_cycles == 2);

  CHECK_THROWS_AS(titration_program(10.0, 5.0, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(titration_program(5.0, 10.0, 0.0, 2), std::invalid_argument);
}

TEST_CASE("titration recording segments into the programmed cycle count") {
  PatientSpec spec = desk_sigmoid_patient(0);
  VentilatorProgram prog = titration_program(8.0, 16.0, 4.0, 2);
  prog.breath_rate_per_min = spec.program.breath_rate_per_min;
  prog.insp_fraction = spec.program.insp_fraction;
  prog.amplitude = 3.0;
  spec.program = prog;

  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  int programmed = 0;
  for (const PeepStep &s : prog.peep_schedule)
    programmed += s.n_cycles;
  CHECK(static_cast<int>(cycles.size()) == programmed);
}

TEST_CASE("PEEP placements land in the intended sigmoid regions") {
  PatientSpec spec = desk_sigmoid_patient(0);
  const auto &sig = std::get<SigmoidPV>(spec.pv_curve);
  double v_mid = sig.a_ml + 0.5 * sig.b_ml;
  double v_lip = sigmoid_volume(sig, sig.c_cmH2O - 2.0 * sig.d_cmH2O);
  double v_uip = sigmoid_volume(sig, sig.c_cmH2O + 2.0 * sig.d_cmH2O);

  auto peeps = desk_patient_peeps(0);
  CHECK(sigmoid_volume(sig, peeps[0]) < v_lip);           // below the LIP
  CHECK(std::abs(sigmoid_volume(sig, peeps[1]) - v_mid) < 0.15 * sig.b_ml);
  CHECK(sigmoid_volume(sig, peeps[2]) > 0.93 * v_uip);    // near the UIP

  SimulatedRecording rec = simulate_recording(spec);
  // Curvature sign of the truth matches the region placement.
  for (const CycleTruth &t : rec.cycles) {
    if (t.peep_cmH2O == peeps[0])
      CHECK(t.curvature_sign == -1);
    if (t.peep_cmH2O == peeps[2])
      CHECK(t.curvature_sign == 1);
  }
}

TEST_CASE("pressure balance holds on every clean sample") {
  for (VentMode mode : {VentMode::PCV, VentMode::VCV}) {
    PatientSpec spec = desk_sigmoid_patient(0);
    spec.program.mode = mode;
    if (mode == VentMode::VCV)
      spec.program.amplitude = 400.0;
    spec.program.peep_schedule = {{8.0, 2}, {13.0, 2}};
    SimulatedRecording rec = simulate_recording(spec);
    double worst = 0.0;
    for (std::size_t k = 0; k < rec.clean.size(); ++k)
      worst = std::max(
          worst, std::abs(rec.clean.pressure[k] -
                          rec.clean.flow[k] * spec.raw_cmH2O_s_per_ml -
                          rec.pc_used_cmH2O[k]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("each PEEP step opens at its equilibrium") {
  PatientSpec spec = desk_sigmoid_patient(0);
  spec.program.peep_schedule = {{8.0, 2}, {16.0, 2}, {12.0, 2}};
  SimulatedRecording rec = simulate_recording(spec);

  double last_peep = -1.0;
  for (const CycleTruth &t : rec.cycles) {
    if (t.peep_cmH2O == last_peep)
      continue; // only the first cycle of each step
    last_peep = t.peep_cmH2O;
    CHECK(std::abs(rec.volume_abs_ml[t.start_idx] - t.v_eq_ml) <= 10.0);
    CHECK(std::abs(rec.clean.flow[t.start_idx]) <= 5.0);
  }
}

TEST_CASE("noise is bounded, channel-scaled, and seed-deterministic") {
  PatientSpec spec = desk_sigmoid_patient(0, 3.0, 3.5);
  spec.program.peep_schedule = {{13.0, 2}};
  SimulatedRecording a = simulate_recording(spec);
  SimulatedRecording b = simulate_recording(spec);
  REQUIRE(a.ts.size() == b.ts.size());
  for (std::size_t k = 0; k < a.ts.size(); ++k) {
    REQUIRE(a.ts.pressure[k] == b.ts.pressure[k]);
    REQUIRE(a.ts.flow[k] == b.ts.flow[k]);
  }

  auto p2p = [](const std::vector<double> &x) {
    auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return *hi - *lo;
  };
  double amp_p = 0.03 * p2p(a.clean.pressure);
  double amp_f = 0.035 * p2p(a.clean.flow);
  bool any_noise = false;
  for (std::size_t k = 0; k < a.ts.size(); ++k) {
    CHECK(std::abs(a.ts.pressure[k] - a.clean.pressure[k]) <= amp_p);
    CHECK(std::abs(a.ts.flow[k] - a.clean.flow[k]) <= amp_f);
    any_noise = any_noise || a.ts.pressure[k] != a.clean.pressure[k];
  }
  CHECK(any_noise);

  PatientSpec reseeded = spec;
  reseeded.seed += 1;
  SimulatedRecording c = simulate_recording(reseeded);
  bool differs = false;
  for (std::size_t k = 0; k < a.ts.size(); ++k)
    differs = differs || a.ts.pressure[k] != c.ts.pressure[k];
  CHECK(differs);
}

TEST_CASE("envelope violations abort with the offending step named") {
  PatientSpec spec = desk_sigmoid_patient(0);
  spec.program.mode = VentMode::VCV;
  spec.program.peep_schedule = {{20.0, 2}};
  spec.program.amplitude = 1200.0; // tops out beyond TLC headroom
  try {
    simulate_recording(spec);
    FAIL("expected EnvelopeError");
  } catch (const EnvelopeError &e) {
    CHECK(std::string(e.what()).find("PEEP step 0") != std::string::npos);
  }
}

TEST_CASE("patient spec survives the JSON round trip") {
  PatientSpec spec = desk_sigmoid_patient(1, 3.0, 3.5);
  spec.program.mode = VentMode::VCV;
  spec.program.amplitude = 420.0;
  std::string text = patient_spec_to_json_text(spec);
  PatientSpec back = patient_spec_from_json_text(text);

  const auto &s0 = std::get<SigmoidPV>(spec.pv_curve);
  const auto &s1 = std::get<SigmoidPV>(back.pv_curve);
  CHECK(s1.b_ml == s0.b_ml);
  CHECK(s1.c_cmH2O == s0.c_cmH2O);
  CHECK(back.raw_cmH2O_s_per_ml == spec.raw_cmH2O_s_per_ml);
  CHECK(back.seed == spec.seed);
  CHECK(back.program.mode == VentMode::VCV);
  CHECK(back.program.amplitude == 420.0);
  CHECK(back.program.noise_pct_f == 3.5);
  REQUIRE(back.program.peep_schedule.size() ==
          spec.program.peep_schedule.size());

  PatientSpec hyst;
  HysteresisPV h;
  h.base = {0.0, 3000.0, 14.0, 3.0};
  h.loop_width_cmH2O = 2.0;
  hyst.pv_curve = h;
  PatientSpec hyst_back =
      patient_spec_from_json_text(patient_spec_to_json_text(hyst));
  CHECK(std::get<HysteresisPV>(hyst_back.pv_curve).loop_width_cmH2O == 2.0);

  CHECK_THROWS_AS(patient_spec_from_json_text("{not json"), FormatError);
  CHECK_THROWS_AS(patient_spec_from_json_text("{\"curve\":{\"type\":\"x\"}}"),
                  FormatError);
}

TEST_CASE("ground-truth sidecar lists every cycle") {
  PatientSpec spec = quadratic_oracle_patient();
  SimulatedRecording rec = simulate_recording(spec);
  std::string text = ground_truth_to_json_text(spec, rec);
  CHECK(text.find("\"true_a1\"") != std::string::npos);
  CHECK(text.find("\"cycles\"") != std::string::npos);
  std::size_t count = 0, pos = 0;
  while ((pos = text.find("\"start_idx\"", pos)) != std::string::npos) {
    ++count;
    pos += 1;
  }
  CHECK(count == rec.cycles.size());
}

TEST_CASE("program validation rejects bad settings") {
  VentilatorProgram prog;
  prog.peep_schedule.clear();
  CHECK_THROWS_AS(prog.validate(), std::invalid_argument);
  prog = {};
  prog.insp_fraction = 0.7;
  CHECK_THROWS_AS(prog.validate(), std::invalid_argument);
  prog = {};
  prog.amplitude = -1.0;
  CHECK_THROWS_AS(prog.validate(), std::invalid_argument);
  prog = {};
  prog.breath_rate_per_min = 0.0;
  CHECK_THROWS_AS(prog.validate(), std::invalid_argument);
}
