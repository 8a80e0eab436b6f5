#include "respfit/pipeline.hpp"

#include "respfit/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace respfit {

namespace {

constexpr double kCMin = 1.0, kCMax = 500.0;          // ml/cmH2O
constexpr double kRawMin = 1e-4, kRawMax = 1.0;       // cmH2O*s/ml
constexpr double kA1Min = 1e-4, kA1Max = 1.0;         // cmH2O/ml
constexpr double kA2Min = -1e-2, kA2Max = 1e-2;       // cmH2O/ml^2
constexpr double kRetryElastanceInflation = 1.2;

double clamp(double x, double lo, double hi, bool *flag = nullptr) {
  double y = std::min(std::max(x, lo), hi);
  if (flag && y != x)
    *flag = true;
  return y;
}

double neg_inf() { return -std::numeric_limits<double>::infinity(); }

/// NRMSE of a model's predicted volume on a cycle; -inf when the
/// prediction diverged.
template <typename Model>
double model_nrmse(const Model &m, const BreathCycle &cycle) {
  VolumePrediction pred = simulate_volume(m, cycle.pv, cycle.dt());
  if (pred.diverged)
    return neg_inf();
  return nrmse_pct(cycle.volume, pred.volume);
}

} // namespace

const char *to_string(FitStatus s) {
  switch (s) {
  case FitStatus::Accepted:
    return "accepted";
  case FitStatus::AcceptedAfterRetry:
    return "accepted_after_retry";
  case FitStatus::Discarded:
    return "discarded";
  case FitStatus::DiscardedFirstCycle:
    return "discarded_first_cycle";
  }
  return "unknown";
}

LmOptions default_linear_lm_options() {
  LmOptions o;
  o.lower = {kCMin, kRawMin};
  o.upper = {kCMax, kRawMax};
  return o;
}

LmOptions default_quadratic_lm_options() {
  LmOptions o;
  o.lower = {kA1Min, kA2Min, kRawMin};
  o.upper = {kA1Max, kA2Max, kRawMax};
  return o;
}

PipelineConfig::PipelineConfig()
    : lm_options_linear(default_linear_lm_options()),
      lm_options_quadratic(default_quadratic_lm_options()) {}

LinearInitResult linear_init(const BreathCycle &cycle) {
  CycleLandmarks lm = cycle_landmarks(cycle);
  if (lm.plateau_equals_peep)
    throw DegenerateCycleError("linear_init: plateau equals PEEP");
  if (!(lm.pif_ml_s > 0.0))
    throw DegenerateCycleError("linear_init: non-positive peak flow");

  LinearInitResult res;
  double c = lm.vt_insp_ml / (lm.plateau_cmH2O - lm.peep_cmH2O);
  double raw = (lm.pip_cmH2O - lm.plateau_cmH2O) / lm.pif_ml_s;
  res.model.c_ml_per_cmH2O = clamp(c, kCMin, kCMax, &res.clamped_c);
  res.model.raw_cmH2O_s_per_ml = clamp(raw, kRawMin, kRawMax, &res.clamped_raw);
  return res;
}

std::pair<LinearLungModel, LmReport>
identify_linear(const BreathCycle &cycle, const LinearLungModel &init,
                const LmOptions &opts) {
  LmOptions o = opts;
  if (o.theta_scale.empty())
    o.theta_scale = {std::max(std::abs(init.c_ml_per_cmH2O), 1.0),
                     std::max(std::abs(init.raw_cmH2O_s_per_ml), 1e-3)};
  auto fn = [&cycle](const std::vector<double> &theta,
                     std::vector<double> &r) {
    LinearLungModel m{theta[0], theta[1]};
    ResidualEval ev = residuals(m, cycle);
    if (ev.diverged)
      return false;
    r = std::move(ev.r);
    return true;
  };
  LmReport rep =
      lm_minimize(fn, {init.c_ml_per_cmH2O, init.raw_cmH2O_s_per_ml}, o);
  LinearLungModel out{rep.theta[0], rep.theta[1]};
  return {out, rep};
}

QuadraticLungModel quadratic_init(const BreathCycle &cycle,
                                  const LinearLungModel &lin) {
  const double raw = lin.raw_cmH2O_s_per_ml;
  double vmax = 0.0;
  for (double v : cycle.volume)
    vmax = std::max(vmax, std::abs(v));
  if (vmax < 1.0) // ml; an empty breath cannot seed the curvature
    throw DegenerateCycleError("quadratic_init: volume ~ 0 throughout");

  std::vector<std::vector<double>> design;
  std::vector<double> target;
  design.reserve(cycle.size());
  target.reserve(cycle.size());
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    design.push_back({cycle.volume[k], cycle.volume[k] * cycle.volume[k]});
    target.push_back(cycle.pv[k] - cycle.flow[k] * raw);
  }
  LsqResult lsq = linear_lsq(design, target);
  if (lsq.degenerate)
    throw DegenerateCycleError("quadratic_init: degenerate design");

  QuadraticLungModel m;
  m.a1_cmH2O_per_ml = clamp(lsq.x[0], kA1Min, kA1Max);
  m.a2_cmH2O_per_ml2 = clamp(lsq.x[1], kA2Min, kA2Max);
  m.raw_cmH2O_s_per_ml = clamp(raw, kRawMin, kRawMax);
  return m;
}

std::pair<QuadraticLungModel, LmReport>
identify_quadratic(const BreathCycle &cycle, const QuadraticLungModel &init,
                   const LmOptions &opts) {
  LmOptions o = opts;
  if (o.theta_scale.empty())
    o.theta_scale = {std::max(std::abs(init.a1_cmH2O_per_ml), 1e-3),
                     std::max(std::abs(init.a2_cmH2O_per_ml2), 1e-5),
                     std::max(std::abs(init.raw_cmH2O_s_per_ml), 1e-3)};
  auto fn = [&cycle](const std::vector<double> &theta,
                     std::vector<double> &r) {
    QuadraticLungModel m{theta[0], theta[1], theta[2]};
    ResidualEval ev = residuals(m, cycle);
    if (ev.diverged)
      return false;
    r = std::move(ev.r);
    return true;
  };
  LmReport rep = lm_minimize(
      fn, {init.a1_cmH2O_per_ml, init.a2_cmH2O_per_ml2, init.raw_cmH2O_s_per_ml},
      o);
  QuadraticLungModel out{rep.theta[0], rep.theta[1], rep.theta[2]};
  return {out, rep};
}

double nrmse_pct(const std::vector<double> &v,
                 const std::vector<double> &v_hat) {
  if (v.size() != v_hat.size() || v.size() < 2)
    throw std::invalid_argument("nrmse_pct: need equal lengths >= 2");
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());

  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    num += (v[k] - v_hat[k]) * (v[k] - v_hat[k]);
    den += (v[k] - mean) * (v[k] - mean);
  }
  if (den == 0.0)
    throw std::domain_error("nrmse_pct: constant reference signal");
  return 100.0 * (1.0 - std::sqrt(num) / std::sqrt(den));
}

namespace {

bool solver_failed(const LmReport &rep) {
  return rep.status == LmStatus::Singular ||
         rep.status == LmStatus::DivergedResidual;
}

} // namespace

std::vector<FitResult> run_pipeline(const std::vector<BreathCycle> &cycles,
                                    const PipelineConfig &cfg) {
  if (cycles.empty())
    throw std::invalid_argument("run_pipeline: no cycles");
  if (cfg.threshold_mode == ThresholdMode::Fixed &&
      !(cfg.fixed_threshold_pct >= 0.0 && cfg.fixed_threshold_pct <= 100.0))
    throw std::invalid_argument("run_pipeline: fixed threshold outside [0, 100]");

  std::vector<FitResult> results;
  results.reserve(cycles.size());
  std::optional<QuadraticLungModel> warm;

  for (std::size_t i = 0; i < cycles.size(); ++i) {
    const BreathCycle &cycle = cycles[i];
    const bool first = i == 0;
    FitResult fr;
    fr.cycle_index = static_cast<int>(i);

    auto discard = [&](const std::string &why) {
      fr.status = first ? FitStatus::DiscardedFirstCycle : FitStatus::Discarded;
      fr.note = why;
      results.push_back(fr);
    };

    LinearInitResult vent;
    try {
      vent = linear_init(cycle);
    } catch (const DegenerateCycleError &e) {
      discard(e.what());
      continue;
    }

    // A diverging ventilator model yields -inf: any finite quadratic fit
    // then clears the gate.
    double threshold = cfg.threshold_mode == ThresholdMode::Fixed
                           ? cfg.fixed_threshold_pct
                           : model_nrmse(vent.model, cycle);
    fr.threshold_pct = threshold;

    auto [lin, lin_rep] = identify_linear(cycle, vent.model, cfg.lm_options_linear);
    fr.linear_report = lin_rep;
    if (solver_failed(lin_rep)) {
      discard(std::string("linear stage failed: ") + to_string(lin_rep.status));
      continue;
    }
    fr.linear = lin;
    fr.nrmse_linear_pct = model_nrmse(lin, cycle);

    // First attempt: warm start when available, else the LSQ seed.
    QuadraticLungModel seed;
    if (cfg.warm_start && warm) {
      seed = *warm;
    } else {
      try {
        seed = quadratic_init(cycle, lin);
      } catch (const DegenerateCycleError &e) {
        discard(e.what());
        continue;
      }
    }

    auto [quad, quad_rep] = identify_quadratic(cycle, seed, cfg.lm_options_quadratic);
    double score = solver_failed(quad_rep) ? neg_inf() : model_nrmse(quad, cycle);
    fr.attempt_nrmse_pct.push_back(score);

    bool pass = std::isfinite(score) && score >= threshold;
    if (!pass && !first) {
      // One-shot retry from a re-initialized seed: inflated linear
      // elastance, zero curvature.
      fr.aux_used = true;
      try {
        QuadraticLungModel retry_seed = quadratic_init(cycle, lin);
        retry_seed.a1_cmH2O_per_ml = std::min(
            retry_seed.a1_cmH2O_per_ml * kRetryElastanceInflation, kA1Max);
        retry_seed.a2_cmH2O_per_ml2 = 0.0;
        auto [quad2, rep2] =
            identify_quadratic(cycle, retry_seed, cfg.lm_options_quadratic);
        double score2 =
            solver_failed(rep2) ? neg_inf() : model_nrmse(quad2, cycle);
        fr.attempt_nrmse_pct.push_back(score2);
        quad = quad2;
        quad_rep = rep2;
        score = score2;
        pass = std::isfinite(score) && score >= threshold;
      } catch (const DegenerateCycleError &e) {
        fr.attempt_nrmse_pct.push_back(neg_inf());
        pass = false;
        fr.note = e.what();
      }
    }

    fr.quadratic = quad;
    fr.quadratic_report = quad_rep;
    fr.nrmse_quadratic_pct = score;
    if (pass) {
      fr.status = fr.aux_used ? FitStatus::AcceptedAfterRetry : FitStatus::Accepted;
      warm = quad;
    } else {
      fr.status = first ? FitStatus::DiscardedFirstCycle : FitStatus::Discarded;
      if (fr.note.empty())
        fr.note = "NRMSE below threshold";
    }
    results.push_back(fr);
  }

  bool any_accepted = std::any_of(results.begin(), results.end(), [](const FitResult &r) {
    return r.status == FitStatus::Accepted ||
           r.status == FitStatus::AcceptedAfterRetry;
  });
  if (!any_accepted) {
    std::ostringstream msg;
    msg << "all " << results.size() << " cycles discarded:";
    for (const FitResult &r : results)
      msg << " [" << r.cycle_index << "] " << r.note << ";";
    throw PipelineError(msg.str(), std::move(results));
  }
  return results;
}

namespace {

using nlohmann::json;

json finite_or_null(double x) {
  if (std::isfinite(x))
    return x;
  return nullptr;
}

double null_or_double(const json &j, const char *key, double fallback) {
  if (!j.contains(key) || j[key].is_null())
    return fallback;
  return j[key].get<double>();
}

} // namespace

std::string fit_results_to_jsonl(const std::vector<FitResult> &results) {
  std::ostringstream out;
  for (const FitResult &r : results) {
    json j;
    j["index"] = r.cycle_index;
    j["status"] = to_string(r.status);
    j["c"] = r.linear ? finite_or_null(r.linear->c_ml_per_cmH2O) : json(nullptr);
    j["raw"] =
        r.linear ? finite_or_null(r.linear->raw_cmH2O_s_per_ml) : json(nullptr);
    j["a1"] =
        r.quadratic ? finite_or_null(r.quadratic->a1_cmH2O_per_ml) : json(nullptr);
    j["a2"] = r.quadratic ? finite_or_null(r.quadratic->a2_cmH2O_per_ml2)
                          : json(nullptr);
    j["raw_nlm"] = r.quadratic ? finite_or_null(r.quadratic->raw_cmH2O_s_per_ml)
                               : json(nullptr);
    j["nrmse_linear"] = finite_or_null(r.nrmse_linear_pct);
    j["nrmse_quadratic"] = finite_or_null(r.nrmse_quadratic_pct);
    j["threshold"] = finite_or_null(r.threshold_pct);
    j["iters"] = json{{"linear", r.linear_report ? r.linear_report->iters : 0},
                      {"quadratic",
                       r.quadratic_report ? r.quadratic_report->iters : 0}};
    j["aux_used"] = r.aux_used;
    if (!r.note.empty())
      j["note"] = r.note;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<FitResult> fit_results_from_jsonl(const std::string &text) {
  std::vector<FitResult> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    json j = json::parse(line);
    FitResult r;
    r.cycle_index = j.at("index").get<int>();
    std::string status = j.at("status").get<std::string>();
    if (status == "accepted")
      r.status = FitStatus::Accepted;
    else if (status == "accepted_after_retry")
      r.status = FitStatus::AcceptedAfterRetry;
    else if (status == "discarded_first_cycle")
      r.status = FitStatus::DiscardedFirstCycle;
    else
      r.status = FitStatus::Discarded;
    if (j.contains("c") && !j["c"].is_null())
      r.linear = LinearLungModel{j["c"].get<double>(),
                                 null_or_double(j, "raw", kRawMin)};
    if (j.contains("a1") && !j["a1"].is_null())
      r.quadratic =
          QuadraticLungModel{j["a1"].get<double>(), null_or_double(j, "a2", 0.0),
                             null_or_double(j, "raw_nlm", kRawMin)};
    r.nrmse_linear_pct = null_or_double(j, "nrmse_linear", neg_inf());
    r.nrmse_quadratic_pct = null_or_double(j, "nrmse_quadratic", neg_inf());
    r.threshold_pct = null_or_double(j, "threshold", neg_inf());
    r.aux_used = j.value("aux_used", false);
    if (j.contains("note"))
      r.note = j["note"].get<std::string>();
    out.push_back(r);
  }
  return out;
}

} // namespace respfit
