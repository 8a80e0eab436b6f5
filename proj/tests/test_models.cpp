#include "respfit/models.hpp"
#include "respfit/patient.hpp"
#include "respfit/signal.hpp"
#include "respfit/validation.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace respfit;

namespace {

// Linear 8x upsampling of a drive signal, consistent with the integrator's
// midpoint interpolation.
std::vector<double> upsample8(const std::vector<double> &pv) {
  std::vector<double> fine;
  fine.reserve((pv.size() - 1) * 8 + 1);
  for (std::size_t k = 0; k + 1 < pv.size(); ++k)
    for (int j = 0; j < 8; ++j)
      fine.push_back(pv[k] + (pv[k + 1] - pv[k]) * j / 8.0);
  fine.push_back(pv.back());
  return fine;
}

std::vector<double> pcv_like_drive(std::size_t n, double dt) {
  std::vector<double> pv(n);
  for (std::size_t k = 0; k < n; ++k) {
    double t = k * dt;
    double phase = std::fmod(t, 4.0);
    double env = phase < 0.1  ? phase / 0.1
                 : phase < 1.5 ? 1.0
                 : phase < 1.6 ? (1.6 - phase) / 0.1
                               : 0.0;
    pv[k] = 12.0 * env;
  }
  return pv;
}

} // namespace

TEST_CASE("pc_of_v evaluates both polynomials") {
  LinearLungModel lin{50.0, 0.01};
  CHECK(pc_of_v(lin, 0.0) == 0.0);
  CHECK(pc_of_v(lin, 250.0) == doctest::Approx(5.0));

  // Quadratic split: linear and curvature pressure terms at VT.
  QuadraticLungModel q{0.020, 1.38e-6, 0.01};
  double linear_term = 0.020 * 480.0;
  double quad_term = 1.38e-6 * 480.0 * 480.0;
  CHECK(linear_term == doctest::Approx(9.6));
  CHECK(quad_term == doctest::Approx(0.318).epsilon(1e-2));
  CHECK(pc_of_v(q, 480.0) == doctest::Approx(linear_term + quad_term));
}

TEST_CASE("quadratic with zero curvature equals the linear model") {
  LinearLungModel lin{50.0, 0.01};
  QuadraticLungModel q{1.0 / 50.0, 0.0, 0.01};
  for (double v : {-100.0, 0.0, 123.0, 480.0, 900.0})
    CHECK(pc_of_v(q, v) == doctest::Approx(pc_of_v(lin, v)).epsilon(1e-12));
}

TEST_CASE("simulate_volume stays at equilibrium for zero drive") {
  QuadraticLungModel q{0.02, 1e-5, 0.01};
  std::vector<double> pv(200, 0.0);
  VolumePrediction pred = simulate_volume(q, pv, 1.0 / 256.0);
  CHECK(!pred.diverged);
  for (double v : pred.volume)
    CHECK(v == 0.0);
}

TEST_CASE("linear step response follows the RC solution") {
  LinearLungModel lin{50.0, 0.01}; // tau = 0.5 s
  const double dt = 1.0 / 256.0;
  std::vector<double> pv(2049, 10.0);
  VolumePrediction pred = simulate_volume(lin, pv, dt);
  REQUIRE(!pred.diverged);

  double expected = 500.0 * (1.0 - std::exp(-1.0)); // at t = tau = 0.5 s
  CHECK(pred.volume[128] == doctest::Approx(expected).epsilon(1e-3));

  // Monotone convergence to C*pv: within 0.1% after 7 tau.
  std::size_t k7 = static_cast<std::size_t>(7.0 * 0.5 / dt);
  CHECK(std::abs(pred.volume[k7] - 500.0) <= 0.001 * 500.0);
  CHECK(std::abs(pred.volume.back() - 500.0) <=
        std::abs(pred.volume[k7] - 500.0));
}

TEST_CASE("simulate_volume matches an 8x finer integration") {
  QuadraticLungModel q{0.02, 1e-4, 0.01};
  const double dt = 1.0 / 256.0;
  std::vector<double> pv = pcv_like_drive(1024, dt);
  VolumePrediction coarse = simulate_volume(q, pv, dt);
  VolumePrediction fine = simulate_volume(q, upsample8(pv), dt / 8.0);
  REQUIRE(!coarse.diverged);
  REQUIRE(!fine.diverged);

  double vmax = 0.0;
  for (double v : fine.volume)
    vmax = std::max(vmax, std::abs(v));
  for (std::size_t k = 0; k < coarse.volume.size(); ++k) {
    double ref = fine.volume[8 * k];
    double denom = std::max(std::abs(ref), 1e-3 * vmax);
    CHECK(std::abs(coarse.volume[k] - ref) / denom <= 5e-4);
  }
}

TEST_CASE("step-halving convergence order is ~4 on smooth drive") {
  QuadraticLungModel q{0.02, 1e-4, 0.01};
  auto run = [&](double step) {
    std::vector<double> pv;
    for (double t = 0.0; t <= 2.0 + 1e-12; t += step)
      pv.push_back(2.0 + 3.0 * t); // linear drive: refinement is exact
    return simulate_volume(q, pv, step);
  };
  double h = 1.0 / 64.0;
  auto coarse = run(h), half = run(h / 2.0), ref = run(h / 64.0);
  auto err = [&](const VolumePrediction &p, std::size_t stride) {
    double e = 0.0;
    for (std::size_t k = 0; k < p.volume.size(); ++k)
      e = std::max(e, std::abs(p.volume[k] - ref.volume[k * stride]));
    return e;
  };
  double order = std::log2(err(coarse, 64) / err(half, 32));
  CHECK(order >= 3.9);
}

TEST_CASE("divergence guard reports blow-ups in-band") {
  // Strong negative curvature turns the elastic term into positive
  // feedback at high volume.
  QuadraticLungModel q{1e-4, -1e-2, 1e-4};
  std::vector<double> pv(2048, 30.0);
  VolumePrediction pred = simulate_volume(q, pv, 1.0 / 256.0);
  CHECK(pred.diverged);
  CHECK(pred.volume.size() < pv.size());
}

TEST_CASE("residuals of the generating model are tiny") {
  PatientSpec spec = quadratic_oracle_patient();
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  REQUIRE(!cycles.empty());

  QuadraticLungModel truth = std::get<QuadraticLungModel>(spec.pv_curve);
  truth.raw_cmH2O_s_per_ml = spec.raw_cmH2O_s_per_ml;
  for (const BreathCycle &c : cycles) {
    ResidualEval ev = residuals(truth, c);
    REQUIRE(!ev.diverged);
    double worst = 0.0;
    for (double r : ev.r)
      worst = std::max(worst, std::abs(r));
    CHECK(worst < 0.5);
  }
}

TEST_CASE("residuals vanish on an all-zero cycle") {
  BreathCycle c;
  c.sample_rate_hz = 256.0;
  c.pv.assign(100, 0.0);
  c.flow.assign(100, 0.0);
  c.volume.assign(100, 0.0);
  LinearLungModel lin{50.0, 0.01};
  ResidualEval ev = residuals(lin, c);
  REQUIRE(!ev.diverged);
  for (double r : ev.r)
    CHECK(r == 0.0);
}

TEST_CASE("cost increases away from the generating compliance") {
  PatientSpec spec;
  QuadraticLungModel gen{1.0 / 50.0, 0.0, 0.01};
  spec.pv_curve = gen;
  spec.raw_cmH2O_s_per_ml = 0.01;
  spec.program.peep_schedule = {{5.0, 2}};
  spec.program.amplitude = 8.0;
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  REQUIRE(!cycles.empty());

  auto sum_sq = [&](const LinearLungModel &m) {
    ResidualEval ev = residuals(m, cycles[0]);
    REQUIRE(!ev.diverged);
    double s = 0.0;
    for (double r : ev.r)
      s += r * r;
    return s;
  };
  CHECK(sum_sq({100.0, 0.01}) > sum_sq({50.0, 0.01}));
}

TEST_CASE("model nesting holds along a whole simulated cycle") {
  PatientSpec spec = desk_sigmoid_patient(0);
  spec.program.peep_schedule = {{13.0, 2}};
  SimulatedRecording rec = simulate_recording(spec);
  auto cycles = segment_cycles(rec.ts);
  REQUIRE(!cycles.empty());

  LinearLungModel lin{50.0, 0.01};
  QuadraticLungModel q{1.0 / 50.0, 0.0, 0.01};
  VolumePrediction a = simulate_volume(lin, cycles[0].pv, cycles[0].dt());
  VolumePrediction b = simulate_volume(q, cycles[0].pv, cycles[0].dt());
  REQUIRE(a.volume.size() == b.volume.size());
  for (std::size_t k = 0; k < a.volume.size(); ++k)
    CHECK(a.volume[k] ==
          doctest::Approx(b.volume[k]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("pc curvature sign equals sign(a2)") {
  std::mt19937_64 rng(42);
  auto u = [&](double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  for (int trial = 0; trial < 50; ++trial) {
    QuadraticLungModel q{u(1e-3, 0.1), u(-1e-4, 1e-4), 0.01};
    double v = u(10.0, 900.0), h = 1.0;
    double second_diff =
        pc_of_v(q, v + h) - 2.0 * pc_of_v(q, v) + pc_of_v(q, v - h);
    if (q.a2_cmH2O_per_ml2 > 1e-12)
      CHECK(second_diff > 0.0);
    else if (q.a2_cmH2O_per_ml2 < -1e-12)
      CHECK(second_diff < 0.0);
  }
}
