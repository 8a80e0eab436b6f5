#include "respfit/errors.hpp"
#include "respfit/patient.hpp"
#include "respfit/signal.hpp"
#include "respfit/validation.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace respfit;

namespace {

std::string temp_path(const std::string &name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string &path, const std::string &content) {
  std::ofstream out(path);
  out << content;
}

std::string slurp(const std::string &path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Square ventilation flow: +300 ml/s for 1 s (samples at both endpoints),
// -150 ml/s for the next 2 s, repeated three times.
TimeSeries square_flow_series() {
  TimeSeries ts;
  ts.sample_rate_hz = 256.0;
  const int n = 9 * 256 + 1;
  for (int k = 0; k < n; ++k) {
    double t = k / 256.0;
    double phase = std::fmod(t, 3.0);
    ts.flow.push_back(phase <= 1.0 ? 300.0 : -150.0);
    ts.pressure.push_back(5.0);
  }
  return ts;
}

} // namespace

TEST_CASE("integrate_flow is exact on constants and ramps") {
  const double dt = 1.0 / 256.0;
  std::vector<double> constant(257, 100.0);
  auto v1 = integrate_flow(constant, dt);
  CHECK(v1.front() == 0.0);
  CHECK(v1.back() == doctest::Approx(100.0).epsilon(1e-15));

  std::vector<double> ramp(257);
  for (int k = 0; k <= 256; ++k)
    ramp[k] = 100.0 * k * dt;
  auto v2 = integrate_flow(ramp, dt);
  CHECK(v2.back() == doctest::Approx(50.0).epsilon(1e-15));
}

TEST_CASE("integrate_flow on a full sine period lands back at zero") {
  const double dt = 1.0 / 256.0;
  std::vector<double> flow(257);
  for (int k = 0; k <= 256; ++k)
    flow[k] = std::sin(2.0 * M_PI * k * dt);
  auto v = integrate_flow(flow, dt);
  CHECK(std::abs(v.back()) < 1e-3);
}

TEST_CASE("trapezoid matches the analytic integral of piecewise-linear flow") {
  // Breakpoints on the sample grid make the trapezoid rule exact.
  const double dt = 1.0 / 256.0;
  std::vector<double> knots_t = {0.0, 0.25, 0.5, 1.0, 1.5};
  std::vector<double> knots_f = {0.0, 200.0, -50.0, 120.0, 0.0};
  std::vector<double> flow;
  for (int k = 0; k <= static_cast<int>(1.5 * 256); ++k) {
    double t = k * dt;
    std::size_t seg = 0;
    while (seg + 2 < knots_t.size() && t > knots_t[seg + 1])
      ++seg;
    double u = (t - knots_t[seg]) / (knots_t[seg + 1] - knots_t[seg]);
    flow.push_back(knots_f[seg] + u * (knots_f[seg + 1] - knots_f[seg]));
  }
  auto v = integrate_flow(flow, dt);

  double analytic = 0.0;
  for (std::size_t seg = 0; seg + 1 < knots_t.size(); ++seg)
    analytic += (knots_t[seg + 1] - knots_t[seg]) * 0.5 *
                (knots_f[seg] + knots_f[seg + 1]);
  CHECK(v.back() == doctest::Approx(analytic).epsilon(1e-9));
}

TEST_CASE("integrate_flow rejects bad arguments") {
  CHECK_THROWS_AS(integrate_flow({1.0, 2.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(integrate_flow({1.0}, 0.1), std::invalid_argument);
}

TEST_CASE("load_recording parses the shorthand header") {
  std::string path = temp_path("respfit_short.csv");
  write_file(path, "t,P,F\n0,5,0\n0.00390625,5,100\n0.0078125,5,100\n");
  TimeSeries ts = load_recording(path);
  CHECK(ts.size() == 3);
  CHECK(ts.sample_rate_hz == doctest::Approx(256.0).epsilon(1e-12));
  CHECK(ts.flow[1] == 100.0);
}

TEST_CASE("load_recording converts flow_l_min to ml/s") {
  std::string path = temp_path("respfit_lmin.csv");
  write_file(path,
             "t_s,pressure_cmH2O,flow_l_min\n0,5,6\n0.004,5,6\n0.008,5,6\n");
  TimeSeries ts = load_recording(path);
  CHECK(ts.flow[0] == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("load_recording rejects malformed input") {
  std::string one_col = temp_path("respfit_onecol.csv");
  write_file(one_col, "t_s\n0\n1\n");
  CHECK_THROWS_AS(load_recording(one_col), FormatError);

  std::string no_header = temp_path("respfit_nohdr.csv");
  write_file(no_header, "0,5,0\n0.1,5,1\n");
  CHECK_THROWS_AS(load_recording(no_header), FormatError);

  std::string bad_row = temp_path("respfit_badrow.csv");
  write_file(bad_row, "t,P,F\n0,5,0\n0.004,xyz,1\n");
  try {
    load_recording(bad_row);
    FAIL("expected FormatError");
  } catch (const FormatError &e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }

  std::string jitter = temp_path("respfit_jitter.csv");
  write_file(jitter, "t,P,F\n0,5,0\n0.004,5,1\n0.009,5,1\n0.012,5,1\n");
  CHECK_THROWS_AS(load_recording(jitter), FormatError);

  std::string nonmono = temp_path("respfit_nonmono.csv");
  write_file(nonmono, "t,P,F\n0,5,0\n0.004,5,1\n0.003,5,1\n");
  CHECK_THROWS_AS(load_recording(nonmono), FormatError);
}

TEST_CASE("simulator recording round-trips bit-exact through save and load") {
  PatientSpec spec = quadratic_oracle_patient();
  SimulatedRecording rec = simulate_recording(spec);

  std::string p1 = temp_path("respfit_rt1.csv");
  std::string p2 = temp_path("respfit_rt2.csv");
  write_recording(rec.ts, p1);
  TimeSeries loaded = load_recording(p1);
  REQUIRE(loaded.size() == rec.ts.size());
  CHECK(loaded.sample_rate_hz == rec.ts.sample_rate_hz);
  for (std::size_t k = 0; k < loaded.size(); ++k) {
    REQUIRE(loaded.pressure[k] == rec.ts.pressure[k]);
    REQUIRE(loaded.flow[k] == rec.ts.flow[k]);
  }
  write_recording(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("segment_cycles: all-zero flow yields no cycles") {
  TimeSeries ts;
  ts.flow.assign(1024, 0.0);
  ts.pressure.assign(1024, 5.0);
  CHECK(segment_cycles(ts).empty());
}

TEST_CASE("segment_cycles on the square-flow construction") {
  TimeSeries ts = square_flow_series();
  auto cycles = segment_cycles(ts);
  REQUIRE(cycles.size() == 2);

  // Starts at t = 3 s and 6 s; inspiration ends 1 s after each start.
  CHECK(std::abs(static_cast<double>(cycles[0].start_idx) - 3 * 256) <= 1.0);
  CHECK(std::abs(static_cast<double>(cycles[1].start_idx) - 6 * 256) <= 1.0);
  for (const BreathCycle &c : cycles) {
    double insp_s = static_cast<double>(c.insp_end_idx - c.start_idx) / 256.0;
    CHECK(std::abs(insp_s - 1.0) <= 1.5 / 256.0);
    CHECK(c.vt_insp_ml == doctest::Approx(300.0).epsilon(5e-3));
    CHECK(c.pif_ml_s == 300.0);
    CHECK(c.peep_cmH2O == doctest::Approx(5.0));
  }
  CHECK(cycles[0].end_idx == cycles[1].start_idx);
}

TEST_CASE("segment_cycles recovers the programmed cycles of a simulation") {
  PatientSpec spec = quadratic_oracle_patient();
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  CHECK(cycles.size() >= 9);
  CHECK(cycles.size() <= 10);

  // Inspired tidal volume within 1% of the simulator's per-cycle truth.
  for (const BreathCycle &c : cycles) {
    const CycleTruth *truth = nullptr;
    for (const CycleTruth &t : rec.cycles)
      if (c.start_idx >= t.start_idx && c.start_idx < t.end_idx)
        truth = &t;
    REQUIRE(truth != nullptr);
    CHECK(c.vt_insp_ml == doctest::Approx(truth->vt_actual_ml).epsilon(0.01));
  }
}

TEST_CASE("segmentation properties: contiguity, baseline, idempotence") {
  PatientSpec spec = desk_sigmoid_patient(0);
  spec.program.peep_schedule = {{13.0, 4}};
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  REQUIRE(cycles.size() == 4);

  std::size_t total = 0;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    total += cycles[i].size();
    CHECK(cycles[i].start_idx < cycles[i].insp_end_idx);
    CHECK(cycles[i].insp_end_idx < cycles[i].end_idx);
    if (i + 1 < cycles.size())
      CHECK(cycles[i].end_idx <= cycles[i + 1].start_idx);
    // Cycle opens at end-expiratory pressure.
    CHECK(std::abs(cycles[i].pv.front()) < 0.5);
  }
  CHECK(total <= rec.ts.size());

  // Re-segmenting a slice that keeps a pre-roll of the previous expiration
  // reproduces the remaining boundaries.
  std::size_t margin = 256;
  std::size_t offset = cycles[1].start_idx - margin;
  TimeSeries slice;
  slice.sample_rate_hz = rec.ts.sample_rate_hz;
  slice.pressure.assign(rec.ts.pressure.begin() +
                            static_cast<std::ptrdiff_t>(offset),
                        rec.ts.pressure.end());
  slice.flow.assign(rec.ts.flow.begin() + static_cast<std::ptrdiff_t>(offset),
                    rec.ts.flow.end());
  auto again = segment_cycles(slice);
  REQUIRE(again.size() == cycles.size() - 1);
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].start_idx + offset == cycles[i + 1].start_idx);
    CHECK(again[i].end_idx + offset == cycles[i + 1].end_idx);
  }
}

TEST_CASE("cycle_landmarks validates and flags degeneracy") {
  TimeSeries ts = square_flow_series();
  auto cycles = segment_cycles(ts);
  REQUIRE(!cycles.empty());

  CycleLandmarks lm = cycle_landmarks(cycles[0]);
  CHECK(lm.vt_insp_ml == doctest::Approx(300.0).epsilon(5e-3));
  CHECK(lm.pif_ml_s == 300.0);
  // Constant pressure: plateau equals peep, flagged for upstream discard.
  CHECK(lm.plateau_equals_peep);

  BreathCycle degenerate = cycles[0];
  degenerate.vt_insp_ml = 0.0;
  CHECK_THROWS_AS(cycle_landmarks(degenerate), DegenerateCycleError);
}

TEST_CASE("simulated landmarks match the ventilator settings") {
  PatientSpec spec = desk_sigmoid_patient(0);
  spec.program.peep_schedule = {{13.0, 3}};
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  REQUIRE(!cycles.empty());
  for (const BreathCycle &c : cycles) {
    CHECK(c.peep_cmH2O == doctest::Approx(13.0).epsilon(1e-3));
    CHECK(c.pip_cmH2O ==
          doctest::Approx(13.0 + spec.program.amplitude).epsilon(1e-3));
    CHECK(!c.landmark_order_violated);
  }
}
