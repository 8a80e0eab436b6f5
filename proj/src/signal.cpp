#include "respfit/signal.hpp"

#include "respfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace respfit {

void TimeSeries::validate() const {
  if (pressure.size() != flow.size())
    throw FormatError("pressure and flow lengths differ");
  if (pressure.size() < 2)
    throw FormatError("recording needs at least 2 samples");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw FormatError("sample rate must be positive");
  for (std::size_t i = 0; i < pressure.size(); ++i) {
    if (!std::isfinite(pressure[i]) || !std::isfinite(flow[i]))
      throw FormatError("non-finite sample at index " + std::to_string(i));
  }
}

std::vector<double> integrate_flow(const std::vector<double> &flow,
                                   double dt) {
  if (!(dt > 0.0))
    throw std::invalid_argument("integrate_flow: dt must be positive");
  if (flow.size() < 2)
    throw std::invalid_argument("integrate_flow: need at least 2 samples");
  std::vector<double> v(flow.size());
  v[0] = 0.0;
  for (std::size_t k = 1; k < flow.size(); ++k)
    v[k] = v[k - 1] + dt * 0.5 * (flow[k] + flow[k - 1]);
  return v;
}

namespace {

// Robust noise-amplitude estimate for a uniformly noisy slowly varying
// signal: the median |successive difference| of U(-A,A) noise is ~0.586*A.
double estimate_flow_deadband(const std::vector<double> &flow) {
  std::vector<double> diffs;
  diffs.reserve(flow.size() - 1);
  for (std::size_t k = 1; k < flow.size(); ++k)
    diffs.push_back(std::abs(flow[k] - flow[k - 1]));
  auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  double noise_amp = *mid / 0.586;

  double peak = 0.0;
  for (double f : flow)
    peak = std::max(peak, std::abs(f));
  // At least a sliver of the peak so exact-zero holds stay in-band.
  return std::max(2.0 * noise_amp, 1e-4 * peak);
}

enum class FlowSide { Unset, Positive, Negative };

struct CrossingEvents {
  std::vector<std::size_t> starts;    // expiration -> inspiration
  std::vector<std::size_t> insp_ends; // inspiration -> expiration
};

// Debounced Schmitt-style crossing detector. A candidate fires when flow
// leaves the deadband on the opposite side of the current state; it is
// accepted only if flow does not return decisively to the old side within
// the debounce window. The reported index is backtracked to the underlying
// sign transition so boundaries land where flow actually crossed zero.
//
// A long quiet dwell re-arms the start detector even when the last
// decisive flow was inspiratory: a breath that begins after a near-zero-flow
// pause (e.g. following a baseline-pressure change) is a new cycle. The
// quiet threshold is physiological (a fraction of peak flow), distinct from
// the noise deadband.
CrossingEvents detect_crossings(const std::vector<double> &flow, double band,
                                double quiet, std::size_t debounce_samples,
                                std::size_t rearm_samples) {
  CrossingEvents ev;
  const std::size_t n = flow.size();
  FlowSide state = FlowSide::Unset;
  std::size_t first_decisive = n;
  std::size_t quiet_run = 0;

  auto backtrack_to_positive = [&](std::size_t k) {
    for (std::size_t j = k; j > 0; --j)
      if (flow[j] > 0.0 && flow[j - 1] <= 0.0)
        return j;
    return k;
  };
  auto backtrack_to_nonpositive = [&](std::size_t k) {
    for (std::size_t j = k; j > 0; --j)
      if (flow[j] <= 0.0 && flow[j - 1] > 0.0)
        return j;
    return k;
  };
  // Start of the current above-quiet run; used for re-armed starts where a
  // quiet dwell may contain no sign change at all.
  auto backtrack_to_quiet_exit = [&](std::size_t k) {
    std::size_t j = k;
    while (j > 0 && flow[j - 1] > quiet)
      --j;
    return j;
  };
  auto debounced = [&](std::size_t k, bool positive) {
    std::size_t stop = std::min(n, k + debounce_samples);
    for (std::size_t j = k; j < stop; ++j) {
      if (positive && flow[j] < -band)
        return false;
      if (!positive && flow[j] > band)
        return false;
    }
    return true;
  };

  for (std::size_t k = 0; k < n; ++k) {
    if (flow[k] > band) {
      if (state == FlowSide::Unset) {
        // A recording that opens at rest and then inspires begins a cycle;
        // one that opens mid-inspiration is a fragment.
        if (first_decisive == n && k >= debounce_samples && debounced(k, true))
          ev.starts.push_back(backtrack_to_positive(k));
        state = FlowSide::Positive;
        if (first_decisive == n)
          first_decisive = k;
      } else if (state == FlowSide::Negative && debounced(k, true)) {
        ev.starts.push_back(backtrack_to_positive(k));
        state = FlowSide::Positive;
      } else if (state == FlowSide::Positive && flow[k] > quiet &&
                 quiet_run >= rearm_samples && debounced(k, true)) {
        ev.starts.push_back(backtrack_to_quiet_exit(k));
      }
    } else if (flow[k] < -band) {
      if (state == FlowSide::Unset) {
        state = FlowSide::Negative;
        if (first_decisive == n)
          first_decisive = k;
      } else if (state == FlowSide::Positive && debounced(k, false)) {
        ev.insp_ends.push_back(backtrack_to_nonpositive(k));
        state = FlowSide::Negative;
      }
    }
    quiet_run = std::abs(flow[k]) <= quiet ? quiet_run + 1 : 0;
  }
  return ev;
}

BreathCycle build_cycle(const TimeSeries &ts, std::size_t start,
                        std::size_t insp_end, std::size_t end,
                        double peep_window_ms) {
  BreathCycle c;
  c.start_idx = start;
  c.insp_end_idx = insp_end;
  c.end_idx = end;
  c.sample_rate_hz = ts.sample_rate_hz;

  const double dt = ts.dt();
  std::size_t peep_samples =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::llround(peep_window_ms / 1e3 / dt)));
  std::size_t w0 = start > peep_samples ? start - peep_samples : 0;
  double peep = 0.0;
  for (std::size_t k = w0; k < start; ++k)
    peep += ts.pressure[k];
  peep /= static_cast<double>(start - w0);
  c.peep_cmH2O = peep;

  c.flow.assign(ts.flow.begin() + static_cast<std::ptrdiff_t>(start),
                ts.flow.begin() + static_cast<std::ptrdiff_t>(end));
  c.pv.resize(end - start);
  for (std::size_t k = 0; k < c.pv.size(); ++k)
    c.pv[k] = ts.pressure[start + k] - peep;
  c.volume = integrate_flow(c.flow, dt);

  c.pip_cmH2O = *std::max_element(
      ts.pressure.begin() + static_cast<std::ptrdiff_t>(start),
      ts.pressure.begin() + static_cast<std::ptrdiff_t>(end));
  c.pif_ml_s = *std::max_element(c.flow.begin(), c.flow.end());
  c.plateau_cmH2O = ts.pressure[insp_end];
  c.vt_insp_ml = *std::max_element(c.volume.begin(), c.volume.end());
  c.landmark_order_violated =
      !(c.pip_cmH2O >= c.plateau_cmH2O && c.plateau_cmH2O >= c.peep_cmH2O);
  return c;
}

} // namespace

std::vector<BreathCycle> segment_cycles(const TimeSeries &ts,
                                        const SegmentationOptions &opts) {
  ts.validate();
  const double dt = ts.dt();
  const double band = opts.flow_deadband_ml_s
                          ? *opts.flow_deadband_ml_s
                          : estimate_flow_deadband(ts.flow);
  const std::size_t debounce = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opts.debounce_ms / 1e3 / dt)));

  // A breath may also begin after ~0.75 s of quiet flow (see re-arm rule).
  double peak_flow = 0.0;
  for (double f : ts.flow)
    peak_flow = std::max(peak_flow, std::abs(f));
  const double quiet = std::max(band, 0.01 * peak_flow);
  const std::size_t rearm = std::max(
      2 * debounce, static_cast<std::size_t>(std::llround(0.75 / dt)));
  CrossingEvents ev = detect_crossings(ts.flow, band, quiet, debounce, rearm);
  std::vector<BreathCycle> cycles;
  if (ev.starts.empty())
    return cycles;

  for (std::size_t i = 0; i < ev.starts.size(); ++i) {
    std::size_t start = ev.starts[i];
    bool closed_by_next_start = i + 1 < ev.starts.size();
    std::size_t end = closed_by_next_start ? ev.starts[i + 1] : ts.size();

    auto it = std::find_if(ev.insp_ends.begin(), ev.insp_ends.end(),
                           [&](std::size_t e) { return e > start && e < end; });
    if (it == ev.insp_ends.end())
      continue; // no completed inspiration inside the span
    std::size_t insp_end = *it;

    // Trailing cycle: keep only if some expiration made it into the record.
    if (!closed_by_next_start && end - insp_end < debounce)
      continue;
    if (end - start < 2)
      continue;
    cycles.push_back(build_cycle(ts, start, insp_end, end, opts.peep_window_ms));
  }
  return cycles;
}

CycleLandmarks cycle_landmarks(const BreathCycle &cycle) {
  if (!(cycle.vt_insp_ml > 0.0))
    throw DegenerateCycleError(
        "cycle at sample " + std::to_string(cycle.start_idx) +
        ": non-positive inspired tidal volume");
  CycleLandmarks lm;
  lm.pip_cmH2O = cycle.pip_cmH2O;
  lm.plateau_cmH2O = cycle.plateau_cmH2O;
  lm.pif_ml_s = cycle.pif_ml_s;
  lm.peep_cmH2O = cycle.peep_cmH2O;
  lm.vt_insp_ml = cycle.vt_insp_ml;
  lm.plateau_equals_peep = cycle.plateau_cmH2O == cycle.peep_cmH2O;
  return lm;
}

namespace {

std::vector<std::string> split_csv_row(const std::string &line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ','))
    out.push_back(field);
  return out;
}

std::string trim(const std::string &s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos)
    return "";
  return s.substr(b, e - b + 1);
}

} // namespace

TimeSeries load_recording(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path);

  std::string header;
  if (!std::getline(in, header))
    throw FormatError(path + ": empty file");
  auto cols = split_csv_row(header);
  for (auto &c : cols)
    c = trim(c);
  if (cols.size() != 3)
    throw FormatError(path + ": expected 3 columns in header, got " +
                      std::to_string(cols.size()));

  bool t_ok = cols[0] == "t_s" || cols[0] == "t";
  bool p_ok = cols[1] == "pressure_cmH2O" || cols[1] == "P";
  double flow_scale = 1.0;
  bool f_ok = true;
  if (cols[2] == "flow_ml_s" || cols[2] == "F") {
    flow_scale = 1.0;
  } else if (cols[2] == "flow_l_min") {
    flow_scale = 1000.0 / 60.0;
  } else {
    f_ok = false;
  }
  if (!t_ok || !p_ok || !f_ok)
    throw FormatError(path + ": unrecognized header '" + header +
                      "' (units missing or unknown)");

  TimeSeries ts;
  std::vector<double> t;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty())
      continue;
    auto fields = split_csv_row(line);
    if (fields.size() != 3)
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected 3 fields");
    try {
      std::size_t pos = 0;
      double tv = std::stod(fields[0], &pos);
      double pv = std::stod(fields[1], &pos);
      double fv = std::stod(fields[2], &pos);
      t.push_back(tv);
      ts.pressure.push_back(pv);
      ts.flow.push_back(fv * flow_scale);
    } catch (const std::exception &) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": malformed row '" + line + "'");
    }
  }
  if (t.size() < 2)
    throw FormatError(path + ": fewer than 2 samples");

  double span = t.back() - t.front();
  if (!(span > 0.0))
    throw FormatError(path + ": non-increasing timestamps");
  double dt_nom = span / static_cast<double>(t.size() - 1);
  for (std::size_t k = 1; k < t.size(); ++k) {
    double dt_k = t[k] - t[k - 1];
    if (!(dt_k > 0.0))
      throw FormatError(path + ": non-monotone timestamp at row " +
                        std::to_string(k + 2));
    if (std::abs(dt_k - dt_nom) > 0.01 * dt_nom)
      throw FormatError(path + ": timestamp jitter beyond 1% at row " +
                        std::to_string(k + 2));
  }
  ts.t0_s = t.front();
  ts.sample_rate_hz = 1.0 / dt_nom;
  ts.validate();
  return ts;
}

void write_recording(const TimeSeries &ts, const std::string &path) {
  ts.validate();
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path);
  out << "t_s,pressure_cmH2O,flow_ml_s\n";
  const double dt = ts.dt();
  char buf[128];
  for (std::size_t k = 0; k < ts.size(); ++k) {
    double t = ts.t0_s + static_cast<double>(k) * dt;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", t, ts.pressure[k],
                  ts.flow[k]);
    out << buf;
  }
}

} // namespace respfit
