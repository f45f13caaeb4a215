// qlink: desk-scale simulator of phase-encoded quantum-communication fiber
// links (long-interferometer, time-bin and few-mode-fiber architectures).
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "qlink/config.hpp"
#include "qlink/drift.hpp"
#include "qlink/experiments.hpp"
#include "qlink/version.hpp"

namespace fs = std::filesystem;
using namespace qlink;

namespace {

std::string default_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string format = "csv";
  std::string stamp;

  RunConfig resolve_run() const {
    if (!config_path.empty() && !preset.empty())
      throw ConfigError("choose either --config or --preset, not both");
    RunConfig run;
    if (!config_path.empty())
      run = load_run_config(config_path);
    else if (!preset.empty())
      run = preset_config(preset);
    else
      throw ConfigError("a configuration is required: pass --config FILE or --preset NAME");
    if (seed) run.seed = *seed;
    return run;
  }

  fs::path resolve_output_dir(const RunConfig& run) const {
    if (!output_dir.empty()) return output_dir;  // flag or QLINK_OUTPUT_DIR
    return run.output_dir.empty() ? fs::path(".") : fs::path(run.output_dir);
  }

  OutputFormat resolve_format() const {
    return format == "json" ? OutputFormat::json : OutputFormat::csv;
  }

  std::string resolve_stamp() const { return stamp.empty() ? default_stamp() : stamp; }
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
  auto* config = cmd->add_option("--config", opts.config_path, "run configuration file");
  auto* preset =
      cmd->add_option("--preset", opts.preset, "built-in preset: ideal, paper_b2b, paper_500m");
  if (!needs_config) {
    config->group("");  // accepted but not advertised
    preset->group("");
  }
  cmd->add_option("--seed", opts.seed, "master seed (overrides run.seed)");
  cmd->add_option("--output-dir", opts.output_dir, "output directory")
      ->envname("QLINK_OUTPUT_DIR");
  cmd->add_option("--format", opts.format, "results format")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--stamp", opts.stamp, "timestamp tag for file names (default: now, UTC)");
}

void report_paths(const RunPaths& paths) {
  std::cout << "wrote " << paths.results.string() << "\n";
  for (const auto& p : paths.plots) std::cout << "wrote " << p.string() << "\n";
  std::cout << "wrote " << paths.manifest.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qlink: phase-encoded quantum link simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // sweep
  CommonOpts sweep_opts;
  std::string sweep_basis = "mub1";
  SweepSpec sweep_spec;
  auto* sweep = app.add_subcommand("sweep", "single-photon interference fringe vs phi_A");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--basis", sweep_basis, "measurement basis: mub1 (phi_B=0) or mub2 (phi_B=pi/2)")
      ->check(CLI::IsMember({"mub1", "mub2"}));
  sweep->add_option("--points", sweep_spec.steps, "points on the triangular ramp");
  sweep->add_option("--gates", sweep_spec.gates_per_point, "gates per point");
  sweep->add_option("--start", sweep_spec.start, "phi_A ramp start (rad)");
  sweep->add_option("--stop", sweep_spec.stop, "phi_A ramp stop (rad)");

  // matrix
  CommonOpts matrix_opts;
  std::uint64_t matrix_gates = 100000;
  auto* matrix = app.add_subcommand("matrix", "BB84 probability matrix");
  add_common(matrix, matrix_opts, true);
  matrix->add_option("--gates", matrix_gates, "gates per matrix cell");

  // losssweep
  CommonOpts loss_opts;
  std::string loss_fit;
  double loss_max_db = 10.0, loss_target = 0.11, loss_db_per_km = 0.22;
  int loss_steps = 41;
  auto* losssweep = app.add_subcommand("losssweep", "QBER vs added loss with threshold solve");
  add_common(losssweep, loss_opts, true);
  losssweep->add_option("--fit", loss_fit, "none, fit_dark_share or fit_qber11 (overrides config)")
      ->check(CLI::IsMember({"none", "fit_dark_share", "fit_qber11"}));
  losssweep->add_option("--max-db", loss_max_db, "sweep range in dB");
  losssweep->add_option("--steps", loss_steps, "table rows");
  losssweep->add_option("--target", loss_target, "QBER threshold to solve for");
  losssweep->add_option("--db-per-km", loss_db_per_km, "fiber loss used for the km equivalent");

  // dimtable
  CommonOpts dim_opts;
  int dim_max = 8;
  double dim_lantern_db = 0.7;
  auto* dimtable = app.add_subcommand("dimtable", "time-bin loss vs lantern gain per dimension");
  add_common(dimtable, dim_opts, false);
  dimtable->add_option("--dmax", dim_max, "largest dimension");
  dimtable->add_option("--lantern-db", dim_lantern_db, "lantern insertion loss in dB");

  // drift
  auto* drift = app.add_subcommand("drift", "phase-drift traces and Fourier spectra");
  drift->require_subcommand(1);

  CommonOpts synth_opts;
  double synth_minutes = 0.0, synth_seconds = 0.0, synth_rate = 1000.0, synth_mod = 100.0;
  double synth_sigma = 0.15, synth_tau = 0.5, synth_visibility = 1.0;
  std::string synth_out;
  auto* synth = drift->add_subcommand("synth", "synthesize a photodiode trace");
  add_common(synth, synth_opts, false);
  synth->add_option("--minutes", synth_minutes, "trace duration in minutes");
  synth->add_option("--seconds", synth_seconds, "trace duration in seconds");
  synth->add_option("--rate", synth_rate, "sample rate in Hz");
  synth->add_option("--mod-hz", synth_mod, "phase modulation frequency in Hz");
  synth->add_option("--sigma", synth_sigma, "drift strength in rad/sqrt(s); 0 disables drift");
  synth->add_option("--tau", synth_tau, "drift relaxation time in s (inf = pure random walk)");
  synth->add_option("--visibility", synth_visibility, "fringe visibility");
  synth->add_option("--out", synth_out, "output trace file (default derived from stamp)");

  CommonOpts spec_opts;
  std::string spec_in, spec_out, spec_window = "rectangular";
  auto* spectrum = drift->add_subcommand("spectrum", "Fourier spectrum of a trace");
  add_common(spectrum, spec_opts, false);
  spectrum->add_option("--in", spec_in, "input trace CSV")->required();
  spectrum->add_option("--window", spec_window, "FFT window")
      ->check(CLI::IsMember({"rectangular", "hann"}));
  spectrum->add_option("--out", spec_out, "output spectrum file (default derived from stamp)");

  CommonOpts cmp_opts;
  std::string cmp_a, cmp_b;
  double cmp_lo = 0.0, cmp_hi = 10.0, cmp_threshold = 2.0;
  auto* compare = drift->add_subcommand("compare", "band-power ratio of two spectra");
  add_common(compare, cmp_opts, false);
  compare->add_option("--a", cmp_a, "first spectrum CSV")->required();
  compare->add_option("--b", cmp_b, "second spectrum CSV")->required();
  compare->add_option("--lo", cmp_lo, "band lower edge in Hz (exclusive)");
  compare->add_option("--hi", cmp_hi, "band upper edge in Hz (inclusive)");
  compare->add_option("--threshold", cmp_threshold, "indistinguishability threshold tau");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sweep->parsed()) {
      const RunConfig run = sweep_opts.resolve_run();
      const ArchitectureConfig cfg = make_architecture(run);
      sweep_spec.seed = run.seed;
      const double phi_b = sweep_basis == "mub2" ? basis_phase(Basis::mub2) : basis_phase(Basis::mub1);
      const InterferenceResult result = run_interference_sweep(cfg, sweep_spec, phi_b);
      const auto paths =
          write_interference_result(sweep_opts.resolve_output_dir(run), sweep_opts.resolve_stamp(),
                                    result, sweep_opts.resolve_format(), echo_config(run));
      report_paths(paths);
      std::printf("fitted visibility D1: %.4f +- %.4f (analytic %.4f)\n",
                  result.fits[0].visibility, result.fits[0].visibility_sigma,
                  result.analytic_visibility);
      return 0;
    }

    if (matrix->parsed()) {
      const RunConfig run = matrix_opts.resolve_run();
      const ArchitectureConfig cfg = make_architecture(run);
      const MatrixExperimentResult result = run_matrix_experiment(cfg, matrix_gates, run.seed);
      const auto paths =
          write_matrix_result(matrix_opts.resolve_output_dir(run), matrix_opts.resolve_stamp(),
                              result, matrix_opts.resolve_format(), echo_config(run));
      report_paths(paths);
      std::printf("mean diagonal: %.4f +- %.4f%s\n", result.diagonal_mean, result.diagonal_sd,
                  result.matrix.low_counts_warning ? " (warning: low counts)" : "");
      return 0;
    }

    if (losssweep->parsed()) {
      RunConfig run = loss_opts.resolve_run();
      if (!loss_fit.empty()) run.fit = loss_fit;
      const ArchitectureConfig cfg = make_architecture(run);
      const auto fit_override = resolve_fit(run.fit, cfg);
      const LossSweepResult result =
          run_loss_sweep(cfg, loss_max_db, loss_steps, fit_override, loss_target, loss_db_per_km);
      const auto paths =
          write_loss_sweep_result(loss_opts.resolve_output_dir(run), loss_opts.resolve_stamp(),
                                  result, loss_opts.resolve_format(), echo_config(run), run.seed);
      report_paths(paths);
      if (result.threshold_reached)
        std::printf("QBER = %.2f%% at %.3f dB added loss (%.2f km at %.2f dB/km)\n",
                    100.0 * result.qber_target, result.threshold_db, result.threshold_km,
                    result.db_per_km);
      else
        std::printf("QBER threshold %.2f%% not reached within %.2f dB\n",
                    100.0 * result.qber_target, loss_max_db);
      return 0;
    }

    if (dimtable->parsed()) {
      const auto rows = run_dimension_table(dim_max, dim_lantern_db);
      const std::uint64_t seed = dim_opts.seed.value_or(1);
      std::ostringstream echo;
      echo << "dimtable.dmax = " << dim_max << "\n";
      echo << "dimtable.lantern_db = " << dim_lantern_db << "\n";
      fs::path dir = dim_opts.output_dir.empty() ? fs::path(".") : fs::path(dim_opts.output_dir);
      const auto paths = write_dimension_table(dir, dim_opts.resolve_stamp(), rows,
                                               dim_opts.resolve_format(), echo.str(), seed);
      report_paths(paths);
      for (const auto& row : rows)
        std::printf("d=%d  timebin_transmission=%.4f  fmf_gain=%.4f\n", row.d,
                    row.timebin_transmission, row.fmf_gain);
      return 0;
    }

    if (synth->parsed()) {
      SynthSpec spec;
      spec.duration_s = synth_minutes > 0.0 ? synth_minutes * 60.0
                                            : (synth_seconds > 0.0 ? synth_seconds : 60.0);
      spec.sample_rate_hz = synth_rate;
      spec.mod_freq_hz = synth_mod;
      spec.visibility = synth_visibility;
      spec.seed = synth_opts.seed.value_or(1);
      if (synth_sigma > 0.0) {
        spec.drift.model = DriftModel::random_walk;
        spec.drift.sigma_rad_per_sqrt_s = synth_sigma;
        spec.drift.relaxation_time_s = synth_tau;
      }
      const TimeSeries ts = synthesize_drift_trace(spec);
      fs::path out = synth_out.empty()
                         ? fs::path(synth_opts.output_dir.empty() ? "." : synth_opts.output_dir) /
                               ("drift_trace_" + synth_opts.resolve_stamp() + "_" +
                                std::to_string(spec.seed) + ".csv")
                         : fs::path(synth_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream file(out);
      if (!file) throw std::runtime_error("cannot write " + out.string());
      write_timeseries_csv(file, ts);
      std::cout << "wrote " << out.string() << " (" << ts.samples.size() << " samples)\n";
      return 0;
    }

    if (spectrum->parsed()) {
      std::ifstream in(spec_in);
      if (!in) throw ConfigError("cannot open trace file: " + spec_in);
      const TimeSeries ts = read_timeseries_csv(in);
      const Spectrum s =
          fourier_spectrum(ts, spec_window == "hann" ? Window::hann : Window::rectangular);
      fs::path out = spec_out.empty()
                         ? fs::path(spec_opts.output_dir.empty() ? "." : spec_opts.output_dir) /
                               ("drift_spectrum_" + spec_opts.resolve_stamp() + ".csv")
                         : fs::path(spec_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream file(out);
      if (!file) throw std::runtime_error("cannot write " + out.string());
      write_spectrum_csv(file, s);

      Eigen::Index kmax = 1;
      for (Eigen::Index k = 1; k < s.magnitudes.size(); ++k)
        if (s.magnitudes(k) > s.magnitudes(kmax)) kmax = k;
      std::cout << "wrote " << out.string() << "\n";
      std::printf("dominant non-DC bin: %.6g Hz\n", s.frequencies_hz(kmax));
      return 0;
    }

    if (compare->parsed()) {
      auto load = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open spectrum file: " + p);
        return read_spectrum_csv(in);
      };
      const auto cmp = compare_band_power(load(cmp_a), load(cmp_b), cmp_lo, cmp_hi, cmp_threshold);
      std::printf("band (%g, %g] Hz power ratio: %.6g -> %s\n", cmp_lo, cmp_hi, cmp.ratio,
                  cmp.indistinguishable ? "indistinguishable" : "distinguishable");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
