#include "respfit/patient.hpp"

#include "respfit/detail/rk4.hpp"
#include "respfit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace respfit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kHoldSeconds = 0.5;   // equilibrium hold opening each step
constexpr double kTopHeadroom = 0.005; // fraction of b kept clear of TLC
} // namespace

double sigmoid_pc(const SigmoidPV &curve, double v_ml) {
  if (!(curve.b_ml > 0.0) || !(curve.d_cmH2O > 0.0))
    throw std::invalid_argument("sigmoid curve needs b > 0 and d > 0");
  if (!(v_ml > curve.a_ml && v_ml < curve.a_ml + curve.b_ml))
    throw EnvelopeError("volume " + std::to_string(v_ml) +
                        " ml outside sigmoid envelope (" +
                        std::to_string(curve.a_ml) + ", " +
                        std::to_string(curve.a_ml + curve.b_ml) + ")");
  return curve.c_cmH2O -
         curve.d_cmH2O * std::log(curve.b_ml / (v_ml - curve.a_ml) - 1.0);
}

double sigmoid_volume(const SigmoidPV &curve, double p_cmH2O) {
  return curve.a_ml +
         curve.b_ml / (1.0 + std::exp(-(p_cmH2O - curve.c_cmH2O) / curve.d_cmH2O));
}

double hysteresis_pc(const HysteresisPV &curve, double v_ml,
                     BreathPhase phase) {
  if (!(curve.loop_width_cmH2O >= 0.0))
    throw std::invalid_argument("hysteresis loop width must be >= 0");
  const double span = curve.v_max_ml - curve.v_min_ml;
  if (!(span > 0.0))
    throw SimulationStateError("hysteresis loop span not configured");
  const double tol = 1e-9 * span + 1e-9;
  if (v_ml > curve.v_max_ml + tol)
    throw SimulationStateError("volume " + std::to_string(v_ml) +
                               " ml above hysteresis loop span top " +
                               std::to_string(curve.v_max_ml));
  // Below the loop bottom both limbs have merged into the backbone; passive
  // expiration may settle slightly there.
  double frac = std::clamp((v_ml - curve.v_min_ml) / span, 0.0, 1.0);
  double w = 0.5 * curve.loop_width_cmH2O * std::sin(kPi * frac);
  double base = sigmoid_pc(curve.base, v_ml);
  return phase == BreathPhase::Inspiration ? base + w : base - w;
}

const char *to_string(VentMode m) {
  return m == VentMode::PCV ? "PCV" : "VCV";
}

void VentilatorProgram::validate() const {
  if (peep_schedule.empty())
    throw std::invalid_argument("program: empty PEEP schedule");
  for (const PeepStep &s : peep_schedule) {
    if (s.n_cycles < 1)
      throw std::invalid_argument("program: PEEP step needs >= 1 cycle");
    if (!(s.peep_cmH2O >= 0.0))
      throw std::invalid_argument("program: negative PEEP");
  }
  if (!(breath_rate_per_min > 0.0))
    throw std::invalid_argument("program: breath rate must be positive");
  if (!(insp_fraction > 0.2 && insp_fraction < 0.6))
    throw std::invalid_argument("program: insp_fraction outside (0.2, 0.6)");
  if (!(amplitude > 0.0))
    throw std::invalid_argument("program: amplitude must be positive");
  if (!(rise_time_s >= 0.0) || !(insp_flow_ml_s >= 0.0))
    throw std::invalid_argument("program: negative timing value");
  if (!(noise_pct_p >= 0.0) || !(noise_pct_f >= 0.0))
    throw std::invalid_argument("program: negative noise percentage");
}

VentilatorProgram titration_program(double peep_min_cmH2O,
                                    double peep_max_cmH2O, double step_cmH2O,
                                    int cycles_per_step) {
  if (peep_min_cmH2O > peep_max_cmH2O)
    throw std::invalid_argument("titration_program: peep_min > peep_max");
  if (!(step_cmH2O > 0.0))
    throw std::invalid_argument("titration_program: step must be positive");
  if (cycles_per_step < 1)
    throw std::invalid_argument("titration_program: need >= 1 cycle per step");

  std::vector<double> up;
  for (double p = peep_min_cmH2O; p < peep_max_cmH2O - 1e-12; p += step_cmH2O)
    up.push_back(p);
  up.push_back(peep_max_cmH2O);

  VentilatorProgram prog;
  prog.peep_schedule.clear();
  for (double p : up)
    prog.peep_schedule.push_back({p, cycles_per_step});
  for (std::size_t i = up.size() - 1; i-- > 0;)
    prog.peep_schedule.push_back({up[i], cycles_per_step});
  return prog;
}

namespace {

// Deterministic uniform in [0,1): 53 random mantissa bits, independent of
// the standard library's distribution implementation.
double next_u01(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct StepContext {
  double peep = 0.0;
  double v_eq = 0.0;      // absolute equilibrium volume
  int step_index = 0;
};

// Elastic pressure and envelope bookkeeping for one patient curve. For
// quadratic patients the curve is expressed in cycle coordinates (volume
// measured from the PEEP equilibrium), so Pc includes the PEEP offset and
// the equilibrium volume is zero.
class CurveDriver {
public:
  CurveDriver(const PvCurve &curve, double raw) : curve_(curve), raw_(raw) {}

  bool is_quadratic() const {
    return std::holds_alternative<QuadraticLungModel>(curve_);
  }

  double equilibrium_volume(double peep) const {
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      return sigmoid_volume(*s, peep);
    if (const auto *h = std::get_if<HysteresisPV>(&curve_))
      return sigmoid_volume(h->base, peep);
    return 0.0;
  }

  // Local compliance at the equilibrium of the given PEEP, for settling
  // time estimates.
  double local_compliance(double peep) const {
    const SigmoidPV *base = nullptr;
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      base = s;
    else if (const auto *h = std::get_if<HysteresisPV>(&curve_))
      base = &h->base;
    if (base) {
      double u = equilibrium_volume(peep) - base->a_ml;
      return u * (base->b_ml - u) / (base->d_cmH2O * base->b_ml);
    }
    return 1.0 / std::get<QuadraticLungModel>(curve_).a1_cmH2O_per_ml;
  }

  // Quasi-static top volume for envelope checks and loop spans.
  double quasi_static_volume(double pressure, double peep) const {
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      return sigmoid_volume(*s, pressure);
    if (const auto *h = std::get_if<HysteresisPV>(&curve_))
      return sigmoid_volume(h->base, pressure);
    const auto &q = std::get<QuadraticLungModel>(curve_);
    // solve a1 v + a2 v^2 = pressure - peep for the positive root
    double rhs = pressure - peep;
    double a1 = q.a1_cmH2O_per_ml, a2 = q.a2_cmH2O_per_ml2;
    if (std::abs(a2) < 1e-15)
      return rhs / a1;
    double disc = a1 * a1 + 4.0 * a2 * rhs;
    if (disc < 0.0)
      throw EnvelopeError("quadratic curve cannot reach drive pressure");
    return (-a1 + std::sqrt(disc)) / (2.0 * a2);
  }

  void check_envelope(double v_top, const StepContext &step) const {
    const SigmoidPV *base = nullptr;
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      base = s;
    else if (const auto *h = std::get_if<HysteresisPV>(&curve_))
      base = &h->base;
    if (!base)
      return;
    double limit = base->a_ml + (1.0 - kTopHeadroom) * base->b_ml;
    if (v_top > limit)
      throw EnvelopeError(
          "PEEP step " + std::to_string(step.step_index) + " (PEEP " +
          std::to_string(step.peep) +
          " cmH2O): predicted end-inspiratory volume " +
          std::to_string(v_top) + " ml exceeds the envelope limit " +
          std::to_string(limit) + " ml");
  }

  // Configure the hysteresis loop span for the coming cycle.
  void begin_cycle(double v_start, double v_top) {
    if (auto *h = std::get_if<HysteresisPV>(&curve_)) {
      h->v_min_ml = v_start;
      h->v_max_ml = std::max(v_top, v_start + 1.0);
    }
  }

  // Outside cycles (holds, PEEP transitions) the limbs collapse onto the
  // backbone.
  void end_cycle() {
    if (auto *h = std::get_if<HysteresisPV>(&curve_)) {
      h->v_min_ml = 0.0;
      h->v_max_ml = 0.0;
    }
  }

  double pc(double v, BreathPhase phase, double peep) const {
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      return sigmoid_pc(*s, v);
    if (const auto *h = std::get_if<HysteresisPV>(&curve_)) {
      if (h->v_max_ml > h->v_min_ml)
        return hysteresis_pc(*h, v, phase);
      return sigmoid_pc(h->base, v); // no cycle open (equilibrium hold)
    }
    const auto &q = std::get<QuadraticLungModel>(curve_);
    return peep + pc_of_v(q, v);
  }

  int curvature_sign(double v_center, const QuadraticLungModel *quad) const {
    if (quad)
      return quad->a2_cmH2O_per_ml2 > 0.0   ? 1
             : quad->a2_cmH2O_per_ml2 < 0.0 ? -1
                                            : 0;
    const SigmoidPV *base = nullptr;
    if (const auto *s = std::get_if<SigmoidPV>(&curve_))
      base = s;
    else if (const auto *h = std::get_if<HysteresisPV>(&curve_))
      base = &h->base;
    double u = 2.0 * (v_center - base->a_ml) - base->b_ml;
    return u > 0.0 ? 1 : (u < 0.0 ? -1 : 0);
  }

  double raw() const { return raw_; }

private:
  PvCurve curve_;
  double raw_;
};

struct Emitter {
  std::vector<double> pressure, flow, volume_abs, pc_used;

  void emit(double p, double f, double v, double pc) {
    pressure.push_back(p);
    flow.push_back(f);
    volume_abs.push_back(v);
    pc_used.push_back(pc);
  }
};

// PCV drive envelope over one cycle: trapezoid with equal rise and fall.
double pcv_drive(double t_rel, double ti, double rise, double peep,
                 double amplitude) {
  double env = 0.0;
  if (t_rel < ti) {
    env = rise > 0.0 ? std::min(t_rel / rise, 1.0) : 1.0;
  } else {
    env = rise > 0.0 ? std::max(0.0, 1.0 - (t_rel - ti) / rise) : 0.0;
  }
  return peep + amplitude * env;
}

} // namespace

SimulatedRecording simulate_recording(const PatientSpec &spec) {
  spec.program.validate();
  if (!(spec.raw_cmH2O_s_per_ml > 0.0))
    throw std::invalid_argument("patient: Raw must be positive");

  const VentilatorProgram &prog = spec.program;
  const double fs = 256.0;
  const double dt = 1.0 / fs;
  const double period = 60.0 / prog.breath_rate_per_min;
  const std::size_t n_cycle = static_cast<std::size_t>(std::llround(period * fs));
  const std::size_t n_insp =
      static_cast<std::size_t>(std::llround(prog.insp_fraction * period * fs));
  const std::size_t n_hold = static_cast<std::size_t>(std::llround(kHoldSeconds * fs));
  if (n_insp < 4 || n_cycle <= n_insp + 4)
    throw std::invalid_argument("program: breath timing too short to sample");

  const double raw = spec.raw_cmH2O_s_per_ml;
  const QuadraticLungModel *quad = std::get_if<QuadraticLungModel>(&spec.pv_curve);

  SimulatedRecording rec;
  Emitter em;

  CurveDriver curve(spec.pv_curve, raw);
  int cycle_counter = 0;
  int step_index = 0;
  double v = curve.equilibrium_volume(prog.peep_schedule.front().peep_cmH2O);
  double prev_peep = prog.peep_schedule.front().peep_cmH2O;

  for (const PeepStep &ps : prog.peep_schedule) {
    StepContext step{ps.peep_cmH2O, 0.0, step_index++};
    step.v_eq = curve.equilibrium_volume(step.peep);

    // Quasi-static envelope validation before generating the step.
    double drive_top = prog.mode == VentMode::PCV ? step.peep + prog.amplitude : 0.0;
    double v_top_pred = prog.mode == VentMode::PCV
                            ? curve.quasi_static_volume(drive_top, step.peep)
                            : step.v_eq + prog.amplitude;
    curve.check_envelope(v_top_pred, step);

    curve.end_cycle();
    if (step.step_index == 0) {
      // The recording opens at rest on the first step's equilibrium.
      double pc_eq = curve.pc(v, BreathPhase::Expiration, step.peep);
      for (std::size_t k = 0; k < n_hold; ++k)
        em.emit(pc_eq, 0.0, v, pc_eq);
    } else {
      // PEEP change: the baseline ramps to the new level and the lung is
      // left to settle passively onto the new equilibrium (no volume
      // teleports; the pressure balance holds throughout). The relaxation
      // rides through whichever side of the transition is more compliant.
      const double ramp_s = 0.5;
      double c_path = std::max(curve.local_compliance(step.peep),
                               curve.local_compliance(prev_peep));
      double settle_s = std::max(1.0, 8.0 * raw * c_path);
      std::size_t n_trans = static_cast<std::size_t>(
          std::llround((ramp_s + settle_s) * fs));
      for (std::size_t k = 0; k < n_trans; ++k) {
        double t_rel = static_cast<double>(k) * dt;
        auto baseline = [&](double t) {
          double f = ramp_s > 0.0 ? std::min(t / ramp_s, 1.0) : 1.0;
          return prev_peep + (step.peep - prev_peep) * f;
        };
        double p_now = baseline(t_rel);
        double pc_now = curve.pc(v, BreathPhase::Expiration, p_now);
        em.emit(p_now, (p_now - pc_now) / raw, v, pc_now);
        auto f = [&](double vol, double p) {
          return (p - curve.pc(vol, BreathPhase::Expiration, p)) / raw;
        };
        try {
          v = detail::rk4_forced_step(f, v, p_now, baseline(t_rel + 0.5 * dt),
                                      baseline(t_rel + dt), dt);
        } catch (const EnvelopeError &) {
          throw EnvelopeError(
              "PEEP step " + std::to_string(step.step_index) + " (PEEP " +
              std::to_string(step.peep) +
              " cmH2O): transition left the envelope");
        }
      }
    }
    prev_peep = step.peep;

    for (int c = 0; c < ps.n_cycles; ++c) {
      CycleTruth truth;
      truth.index = cycle_counter++;
      truth.start_idx = em.pressure.size();
      truth.peep_cmH2O = step.peep;
      truth.v_eq_ml = step.v_eq;
      if (quad) {
        truth.true_a1 = quad->a1_cmH2O_per_ml;
        truth.true_a2 = quad->a2_cmH2O_per_ml2;
        truth.true_raw = raw;
      }

      double cycle_v_top = prog.mode == VentMode::PCV
                               ? curve.quasi_static_volume(drive_top, step.peep)
                               : v + prog.amplitude;
      curve.begin_cycle(v, cycle_v_top);
      truth.curvature_sign = curve.curvature_sign(0.5 * (v + cycle_v_top), quad);

      if (prog.mode == VentMode::PCV) {
        const double ti = static_cast<double>(n_insp) * dt;
        // The expiration limb engages at the actual volume turning point
        // (flow reversal during the drive fall), latched once per cycle.
        bool in_expiration = false;
        double last_flow = 0.0;
        for (std::size_t k = 0; k < n_cycle; ++k) {
          double t_rel = static_cast<double>(k) * dt;
          if (!in_expiration && k >= n_insp && last_flow <= 0.0)
            in_expiration = true;
          BreathPhase ph = in_expiration ? BreathPhase::Expiration
                                         : BreathPhase::Inspiration;
          double p_now =
              pcv_drive(t_rel, ti, prog.rise_time_s, step.peep, prog.amplitude);
          double pc_now = curve.pc(v, ph, step.peep);
          double f_now = (p_now - pc_now) / raw;
          em.emit(p_now, f_now, v, pc_now);
          last_flow = f_now;

          double p_half = pcv_drive(t_rel + 0.5 * dt, ti, prog.rise_time_s,
                                    step.peep, prog.amplitude);
          double p_next = pcv_drive(t_rel + dt, ti, prog.rise_time_s, step.peep,
                                    prog.amplitude);
          auto f = [&](double vol, double p) {
            return (p - curve.pc(vol, ph, step.peep)) / raw;
          };
          try {
            v = detail::rk4_forced_step(f, v, p_now, p_half, p_next, dt);
          } catch (const EnvelopeError &) {
            throw EnvelopeError("PEEP step " + std::to_string(step.step_index) +
                                " (PEEP " + std::to_string(step.peep) +
                                " cmH2O): simulation left the envelope");
          }
        }
      } else {
        // VCV: constant-flow phase, end-inspiratory pause, passive expiration.
        std::size_t n_flow = prog.insp_flow_ml_s > 0.0
                                 ? static_cast<std::size_t>(std::llround(
                                       prog.amplitude / prog.insp_flow_ml_s * fs))
                                 : static_cast<std::size_t>(
                                       std::llround(0.8 * static_cast<double>(n_insp)));
        if (n_flow < 2 || n_flow > n_insp)
          throw std::invalid_argument(
              "program: VCV inspiratory flow does not fit the breath window");
        // Exact delivered tidal volume regardless of grid rounding.
        double f_insp = prog.amplitude / (static_cast<double>(n_flow) * dt);

        for (std::size_t k = 0; k < n_cycle; ++k) {
          BreathPhase ph = k < n_insp ? BreathPhase::Inspiration
                                      : BreathPhase::Expiration;
          try {
            if (k < n_flow) {
              double pc_now = curve.pc(v, ph, step.peep);
              em.emit(f_insp * raw + pc_now, f_insp, v, pc_now);
              v += f_insp * dt;
            } else if (k < n_insp) {
              double pc_now = curve.pc(v, ph, step.peep);
              em.emit(pc_now, 0.0, v, pc_now); // valves closed
            } else {
              double pc_now = curve.pc(v, ph, step.peep);
              em.emit(step.peep, (step.peep - pc_now) / raw, v, pc_now);
              auto f = [&](double vol, double p) {
                return (p - curve.pc(vol, ph, step.peep)) / raw;
              };
              v = detail::rk4_forced_step(f, v, step.peep, step.peep, step.peep,
                                          dt);
            }
          } catch (const EnvelopeError &) {
            throw EnvelopeError("PEEP step " + std::to_string(step.step_index) +
                                " (PEEP " + std::to_string(step.peep) +
                                " cmH2O): simulation left the envelope");
          }
        }
      }

      truth.end_idx = em.pressure.size();
      double v_start_cycle = em.volume_abs[truth.start_idx];
      double vt = 0.0;
      for (std::size_t k = truth.start_idx; k < truth.end_idx; ++k)
        vt = std::max(vt, em.volume_abs[k] - v_start_cycle);
      truth.vt_actual_ml = vt;
      rec.cycles.push_back(truth);
    }
  }

  rec.sample_rate_hz = fs;
  rec.clean.sample_rate_hz = fs;
  rec.clean.t0_s = 0.0;
  rec.clean.pressure = em.pressure;
  rec.clean.flow = em.flow;
  rec.volume_abs_ml = std::move(em.volume_abs);
  rec.pc_used_cmH2O = std::move(em.pc_used);

  // Uniform noise scaled to the clean peak-to-peak, per channel.
  rec.ts = rec.clean;
  if (prog.noise_pct_p > 0.0 || prog.noise_pct_f > 0.0) {
    auto p2p = [](const std::vector<double> &x) {
      auto [lo, hi] = std::minmax_element(x.begin(), x.end());
      return *hi - *lo;
    };
    double amp_p = prog.noise_pct_p / 100.0 * p2p(rec.clean.pressure);
    double amp_f = prog.noise_pct_f / 100.0 * p2p(rec.clean.flow);
    std::mt19937_64 rng(spec.seed);
    for (std::size_t k = 0; k < rec.ts.size(); ++k) {
      rec.ts.pressure[k] += amp_p * (2.0 * next_u01(rng) - 1.0);
      rec.ts.flow[k] += amp_f * (2.0 * next_u01(rng) - 1.0);
    }
  }
  return rec;
}

namespace {

using nlohmann::json;

json curve_to_json(const PvCurve &curve) {
  json j;
  if (const auto *s = std::get_if<SigmoidPV>(&curve)) {
    j["type"] = "sigmoid";
    j["a_ml"] = s->a_ml;
    j["b_ml"] = s->b_ml;
    j["c_cmh2o"] = s->c_cmH2O;
    j["d_cmh2o"] = s->d_cmH2O;
  } else if (const auto *h = std::get_if<HysteresisPV>(&curve)) {
    j["type"] = "hysteresis";
    j["base"] = curve_to_json(h->base);
    j["loop_width_cmh2o"] = h->loop_width_cmH2O;
  } else {
    const auto &q = std::get<QuadraticLungModel>(curve);
    j["type"] = "quadratic";
    j["a1"] = q.a1_cmH2O_per_ml;
    j["a2"] = q.a2_cmH2O_per_ml2;
  }
  return j;
}

SigmoidPV sigmoid_from_json(const json &j) {
  SigmoidPV s;
  s.a_ml = j.value("a_ml", 0.0);
  s.b_ml = j.at("b_ml").get<double>();
  s.c_cmH2O = j.at("c_cmh2o").get<double>();
  s.d_cmH2O = j.at("d_cmh2o").get<double>();
  return s;
}

PvCurve curve_from_json(const json &j) {
  std::string type = j.at("type").get<std::string>();
  if (type == "sigmoid")
    return sigmoid_from_json(j);
  if (type == "hysteresis") {
    HysteresisPV h;
    h.base = sigmoid_from_json(j.at("base"));
    h.loop_width_cmH2O = j.value("loop_width_cmh2o", 3.0);
    return h;
  }
  if (type == "quadratic") {
    QuadraticLungModel q;
    q.a1_cmH2O_per_ml = j.at("a1").get<double>();
    q.a2_cmH2O_per_ml2 = j.value("a2", 0.0);
    q.raw_cmH2O_s_per_ml = 0.01; // never used: the patient Raw applies
    return q;
  }
  throw FormatError("unknown curve type '" + type + "'");
}

} // namespace

std::string patient_spec_to_json_text(const PatientSpec &spec) {
  json j;
  j["curve"] = curve_to_json(spec.pv_curve);
  j["raw_cmh2o_s_per_ml"] = spec.raw_cmH2O_s_per_ml;
  j["seed"] = spec.seed;
  json p;
  p["mode"] = to_string(spec.program.mode);
  p["peep_schedule"] = json::array();
  for (const PeepStep &s : spec.program.peep_schedule)
    p["peep_schedule"].push_back(
        {{"peep_cmh2o", s.peep_cmH2O}, {"cycles", s.n_cycles}});
  p["breath_rate_per_min"] = spec.program.breath_rate_per_min;
  p["insp_fraction"] = spec.program.insp_fraction;
  p["amplitude"] = spec.program.amplitude;
  p["rise_time_s"] = spec.program.rise_time_s;
  p["insp_flow_ml_s"] = spec.program.insp_flow_ml_s;
  p["noise_pct_pressure"] = spec.program.noise_pct_p;
  p["noise_pct_flow"] = spec.program.noise_pct_f;
  j["program"] = p;
  return j.dump(2) + "\n";
}

PatientSpec patient_spec_from_json_text(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw FormatError(std::string("patient spec: ") + e.what());
  }
  try {
    PatientSpec spec;
    spec.pv_curve = curve_from_json(j.at("curve"));
    spec.raw_cmH2O_s_per_ml = j.at("raw_cmh2o_s_per_ml").get<double>();
    spec.seed = j.value("seed", std::uint64_t{1});
    const json &p = j.at("program");
    VentilatorProgram prog;
    std::string mode = p.value("mode", "PCV");
    if (mode == "PCV")
      prog.mode = VentMode::PCV;
    else if (mode == "VCV")
      prog.mode = VentMode::VCV;
    else
      throw FormatError("unknown ventilation mode '" + mode + "'");
    prog.peep_schedule.clear();
    for (const json &s : p.at("peep_schedule"))
      prog.peep_schedule.push_back(
          {s.at("peep_cmh2o").get<double>(), s.at("cycles").get<int>()});
    prog.breath_rate_per_min = p.value("breath_rate_per_min", 12.0);
    prog.insp_fraction = p.value("insp_fraction", 1.0 / 3.0);
    prog.amplitude = p.at("amplitude").get<double>();
    prog.rise_time_s = p.value("rise_time_s", 0.08);
    prog.insp_flow_ml_s = p.value("insp_flow_ml_s", 0.0);
    prog.noise_pct_p = p.value("noise_pct_pressure", 0.0);
    prog.noise_pct_f = p.value("noise_pct_flow", 0.0);
    prog.validate();
    spec.program = prog;
    return spec;
  } catch (const json::exception &e) {
    throw FormatError(std::string("patient spec: ") + e.what());
  }
}

PatientSpec load_patient_spec(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return patient_spec_from_json_text(buf.str());
}

std::string ground_truth_to_json_text(const PatientSpec &spec,
                                      const SimulatedRecording &rec) {
  json j;
  j["patient"] = json::parse(patient_spec_to_json_text(spec));
  j["sample_rate_hz"] = rec.sample_rate_hz;
  j["cycles"] = json::array();
  for (const CycleTruth &c : rec.cycles) {
    json cj;
    cj["index"] = c.index;
    cj["start_idx"] = c.start_idx;
    cj["end_idx"] = c.end_idx;
    cj["peep_cmh2o"] = c.peep_cmH2O;
    cj["v_eq_ml"] = c.v_eq_ml;
    cj["vt_actual_ml"] = c.vt_actual_ml;
    cj["curvature_sign"] = c.curvature_sign;
    if (c.true_a1) {
      cj["true_a1"] = *c.true_a1;
      cj["true_a2"] = *c.true_a2;
      cj["true_raw"] = *c.true_raw;
    }
    j["cycles"].push_back(cj);
  }
  return j.dump(2) + "\n";
}

} // namespace respfit
