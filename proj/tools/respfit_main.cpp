// respfit: simulate ventilated patients, identify per-cycle respiratory
// mechanics from pressure/flow recordings, analyze fit sequences, and run
// the built-in validation battery.

#include "respfit/analysis.hpp"
#include "respfit/errors.hpp"
#include "respfit/patient.hpp"
#include "respfit/pipeline.hpp"
#include "respfit/signal.hpp"
#include "respfit/validation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace respfit;

void write_text_file(const std::string &path, const std::string &content) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path);
  out << content;
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ThresholdMode parse_threshold(const std::string &text, double &fixed_value) {
  if (text == "ventilator")
    return ThresholdMode::VentilatorLinear;
  if (text.rfind("fixed:", 0) == 0) {
    fixed_value = std::stod(text.substr(6));
    if (fixed_value < 0.0 || fixed_value > 100.0)
      throw CLI::ValidationError("--threshold",
                                 "fixed threshold must be in [0, 100]");
    return ThresholdMode::Fixed;
  }
  throw CLI::ValidationError("--threshold",
                             "expected 'ventilator' or 'fixed:<pct>'");
}

int cmd_simulate(const std::string &spec_path, const std::string &out_path,
                 std::optional<std::uint64_t> seed,
                 std::optional<double> noise_p, std::optional<double> noise_f,
                 const std::string &sidecar_path, bool verbose) {
  PatientSpec spec = load_patient_spec(spec_path);
  if (seed)
    spec.seed = *seed;
  if (noise_p)
    spec.program.noise_pct_p = *noise_p;
  if (noise_f)
    spec.program.noise_pct_f = *noise_f;

  SimulatedRecording rec = simulate_recording(spec);
  write_recording(rec.ts, out_path);
  std::string sidecar =
      sidecar_path.empty() ? out_path + ".truth.json" : sidecar_path;
  write_text_file(sidecar, ground_truth_to_json_text(spec, rec));
  if (verbose)
    std::cout << "simulated " << rec.cycles.size() << " cycles, "
              << rec.ts.size() << " samples\n";
  std::cout << "wrote " << out_path << " and " << sidecar << "\n";
  return 0;
}

int cmd_identify(const std::string &in_path, const std::string &out_path,
                 const std::string &threshold, bool no_warm_start,
                 bool verbose) {
  TimeSeries ts = load_recording(in_path);
  std::vector<BreathCycle> cycles = segment_cycles(ts);
  if (cycles.empty()) {
    std::cerr << "error: no complete cycles in " << in_path << "\n";
    return 1;
  }

  PipelineConfig cfg;
  cfg.threshold_mode = parse_threshold(threshold, cfg.fixed_threshold_pct);
  cfg.warm_start = !no_warm_start;

  std::vector<FitResult> fits;
  try {
    fits = run_pipeline(cycles, cfg);
  } catch (const PipelineError &e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!out_path.empty())
      write_text_file(out_path, fit_results_to_jsonl(e.results));
    return 1;
  }
  if (!out_path.empty())
    write_text_file(out_path, fit_results_to_jsonl(fits));

  int n_acc = 0, n_retry = 0, n_disc = 0;
  double sum_lm = 0.0, sum_nlm = 0.0;
  for (const FitResult &fr : fits) {
    switch (fr.status) {
    case FitStatus::Accepted:
      ++n_acc;
      break;
    case FitStatus::AcceptedAfterRetry:
      ++n_acc;
      ++n_retry;
      break;
    default:
      ++n_disc;
      break;
    }
    if (fr.status == FitStatus::Accepted ||
        fr.status == FitStatus::AcceptedAfterRetry) {
      sum_lm += fr.nrmse_linear_pct;
      sum_nlm += fr.nrmse_quadratic_pct;
    }
  }
  std::cout << cycles.size() << " cycles: " << n_acc << " accepted (" << n_retry
            << " after retry), " << n_disc << " discarded\n";
  if (n_acc > 0)
    std::cout << "mean NRMSE linear " << sum_lm / n_acc << "%, quadratic "
              << sum_nlm / n_acc << "%\n";
  if (verbose)
    for (const FitResult &fr : fits)
      std::cout << "  cycle " << fr.cycle_index << ": " << to_string(fr.status)
                << " nrmse_nlm=" << fr.nrmse_quadratic_pct
                << " threshold=" << fr.threshold_pct
                << (fr.note.empty() ? "" : " (" + fr.note + ")") << "\n";
  return 0;
}

// When the recording's ground-truth sidecar is available (simulated data),
// emit per-cycle oracle errors; real recordings simply have no sidecar.
void write_oracle_errors(const std::string &in_path,
                         const std::vector<FitResult> &fits,
                         const std::string &out_path) {
  std::string sidecar = in_path + ".truth.json";
  if (!std::filesystem::exists(sidecar))
    return;
  nlohmann::json truth;
  try {
    truth = nlohmann::json::parse(read_text_file(sidecar));
  } catch (const std::exception &) {
    return; // unusable sidecar, analysis proceeds without oracle columns
  }
  if (!truth.contains("cycles"))
    return;
  std::ostringstream out;
  out << "cycle,true_a1,est_a1,rel_err_a1,true_a2,est_a2,rel_err_a2\n";
  bool any = false;
  for (const auto &cj : truth["cycles"]) {
    if (!cj.contains("true_a1"))
      continue;
    int idx = cj.value("index", -1);
    for (const FitResult &fr : fits) {
      if (fr.cycle_index != idx || !fr.quadratic)
        continue;
      double ta1 = cj["true_a1"].get<double>();
      double ta2 = cj["true_a2"].get<double>();
      double ea1 = fr.quadratic->a1_cmH2O_per_ml;
      double ea2 = fr.quadratic->a2_cmH2O_per_ml2;
      out << idx << "," << ta1 << "," << ea1 << ","
          << std::abs(ea1 - ta1) / std::max(std::abs(ta1), 1e-300) << ","
          << ta2 << "," << ea2 << ","
          << std::abs(ea2 - ta2) / std::max(std::abs(ta2), 1e-300) << "\n";
      any = true;
    }
  }
  if (any)
    write_text_file(out_path, out.str());
}

int cmd_analyze(const std::string &fits_path, const std::string &in_path,
                const std::string &out_dir) {
  std::vector<FitResult> fits = fit_results_from_jsonl(read_text_file(fits_path));
  TimeSeries ts = load_recording(in_path);
  std::vector<BreathCycle> cycles = segment_cycles(ts);
  if (fits.size() != cycles.size()) {
    std::cerr << "error: " << fits.size() << " fit records vs "
              << cycles.size() << " segmented cycles\n";
    return 1;
  }
  std::filesystem::create_directories(out_dir);
  auto in_dir = [&](const std::string &name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  write_text_file(in_dir("fit_comparison.csv"),
                  fit_comparison_csv(fit_comparison(fits)));
  write_text_file(in_dir("report_table.txt"), report_table(fits, cycles));
  write_oracle_errors(in_path, fits, in_dir("oracle_errors.csv"));

  TitrationSummary summary = summarize_titration(fits, cycles);
  write_text_file(in_dir("titration_summary.json"),
                  titration_summary_json(summary));
  write_text_file(in_dir("a1_a2_vs_peep.csv"), a1_a2_vs_peep_csv(summary));

  // Leg labels per cycle for the P-V exports.
  std::map<int, TitrationLeg> legs;
  {
    std::size_t cursor = 0;
    for (const TitrationLevel &lvl : summary.levels)
      for (int k = 0; k < lvl.n_cycles && cursor < fits.size(); ++k, ++cursor)
        legs[fits[cursor].cycle_index] = lvl.leg;
  }
  write_pv_curve_files(export_pv_curves(fits, cycles), legs, out_dir);
  std::cout << "wrote analysis files to " << out_dir << "\n";
  return 0;
}

int cmd_validate(bool quick) {
  ValidationOptions opts;
  opts.quick = quick;
  std::vector<ValidationRow> rows = run_validation(opts);
  std::cout << render_validation_table(rows);
  if (!all_passed(rows)) {
    std::cerr << "validation FAILED\n";
    return 1;
  }
  std::cout << "validation passed\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Per-cycle respiratory-mechanics identification toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string sim_spec, sim_out, sim_sidecar;
  std::optional<std::uint64_t> sim_seed;
  std::optional<double> sim_noise_p, sim_noise_f;
  bool verbose = false;
  app.add_flag("--verbose", verbose, "chatty output");

  CLI::App *sim = app.add_subcommand("simulate", "generate a recording from a patient spec");
  sim->add_option("--spec", sim_spec, "PatientSpec JSON file")->required();
  sim->add_option("--output", sim_out, "output CSV recording")->required();
  sim->add_option("--sidecar", sim_sidecar, "ground-truth JSON path (default <output>.truth.json)");
  sim->add_option("--seed", sim_seed, "override the spec's RNG seed");
  sim->add_option("--noise-p", sim_noise_p, "override pressure noise % of peak-to-peak");
  sim->add_option("--noise-f", sim_noise_f, "override flow noise % of peak-to-peak");

  // identify
  std::string id_in, id_out, id_threshold = "ventilator";
  bool id_no_warm = false;
  CLI::App *ident = app.add_subcommand("identify", "fit models per breath cycle");
  ident->add_option("--input", id_in, "recording CSV")->required();
  ident->add_option("--output", id_out, "fit results JSON-lines file");
  ident->add_option("--threshold", id_threshold,
                    "acceptance threshold: 'ventilator' or 'fixed:<pct>'");
  ident->add_flag("--no-warm-start", id_no_warm,
                  "seed every cycle from its own linear fit");

  // analyze
  std::string an_fits, an_in, an_out = "analysis";
  CLI::App *an = app.add_subcommand("analyze", "summarize identify output");
  an->add_option("--fits", an_fits, "fit results JSON-lines file")->required();
  an->add_option("--input", an_in, "recording CSV the fits came from")->required();
  an->add_option("--out-dir", an_out, "output directory");

  // validate
  bool quick = false;
  CLI::App *val = app.add_subcommand("validate", "run the built-in scenario battery");
  val->add_flag("--quick", quick, "noiseless subset only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_spec, sim_out, sim_seed, sim_noise_p, sim_noise_f,
                          sim_sidecar, verbose);
    if (ident->parsed())
      return cmd_identify(id_in, id_out, id_threshold, id_no_warm, verbose);
    if (an->parsed())
      return cmd_analyze(an_fits, an_in, an_out);
    if (val->parsed())
      return cmd_validate(quick);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
