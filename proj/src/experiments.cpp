#include "qlink/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qlink/rng.hpp"
#include "qlink/text.hpp"
#include "qlink/version.hpp"

namespace qlink {

namespace {

constexpr double kPi = std::numbers::pi;

double now_seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return format_double(v); }

// Triangle: up start..stop inclusive, then back down without repeating the
// endpoints.
std::vector<double> triangle_points(double start, double stop, int steps) {
  std::vector<double> xs;
  const double dx = (stop - start) / static_cast<double>(steps - 1);
  for (int i = 0; i < steps; ++i) xs.push_back(start + dx * i);
  for (int i = steps - 2; i >= 1; --i) xs.push_back(start + dx * i);
  return xs;
}

}  // namespace

void validate(const SweepSpec& spec) {
  if (spec.steps < 2) throw std::invalid_argument("sweep: need at least 2 steps");
  if (spec.gates_per_point < 1) throw std::invalid_argument("sweep: need at least 1 gate per point");
  if (!(spec.stop > spec.start)) throw std::invalid_argument("sweep: stop must exceed start");
}

InterferenceResult run_interference_sweep(const ArchitectureConfig& cfg, const SweepSpec& spec,
                                          double phi_b) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(spec);
  if (spec.variable != SweepSpec::Variable::alice_phase)
    throw std::invalid_argument("interference sweep: variable must be alice_phase");
  validate(cfg);
  if (cfg.dim != 2) throw std::invalid_argument("interference sweep: needs dim 2");

  const std::vector<double> bank = bob_phase_bank(cfg.scheme, 2, phi_b);
  const std::vector<double> xs = triangle_points(spec.start, spec.stop, spec.steps);

  InterferenceResult res;
  res.phi_b = phi_b;
  res.gates_per_point = spec.gates_per_point;
  res.seed = spec.seed;

  const double n = static_cast<double>(spec.gates_per_point);
  double total_counts = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const ModeState prepared = prepare_qudit(2, {0.0, xs[i]});
    const auto counts =
        simulate_clicks(cfg, prepared, bank, spec.gates_per_point, derive_seed(spec.seed, i));
    SweepRow row;
    row.x = xs[i];
    for (int det = 0; det < 2; ++det) {
      const double c = static_cast<double>(counts[static_cast<std::size_t>(det)]);
      total_counts += c;
      row.counts.push_back(c);
      row.sigma.push_back(std::sqrt(c));  // Poissonian
      const double capped = std::min(c, n - 0.5);
      row.mu_estimate.push_back(-std::log1p(-capped / n));
    }
    res.rows.push_back(std::move(row));
  }
  res.zero_counts = total_counts == 0.0;

  // Least squares of mu_estimate against a + p cos(x) + q sin(x).
  const auto npts = static_cast<Eigen::Index>(res.rows.size());
  Eigen::MatrixXd design(npts, 3);
  for (Eigen::Index i = 0; i < npts; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = std::cos(res.rows[static_cast<std::size_t>(i)].x);
    design(i, 2) = std::sin(res.rows[static_cast<std::size_t>(i)].x);
  }
  const Eigen::Matrix3d gram_inv = (design.transpose() * design).inverse();
  for (int det = 0; det < 2; ++det) {
    Eigen::VectorXd y(npts);
    for (Eigen::Index i = 0; i < npts; ++i)
      y(i) = res.rows[static_cast<std::size_t>(i)].mu_estimate[static_cast<std::size_t>(det)];
    const Eigen::Vector3d beta = gram_inv * (design.transpose() * y);
    const double dof = static_cast<double>(npts - 3);
    const double s2 = (y - design * beta).squaredNorm() / std::max(dof, 1.0);
    const Eigen::Matrix3d cov = s2 * gram_inv;

    FringeFit fit;
    fit.offset = beta(0);
    const double r = std::hypot(beta(1), beta(2));
    fit.amplitude = r;
    fit.phase = std::atan2(beta(2), beta(1));
    fit.visibility = fit.offset != 0.0 ? r / fit.offset : 0.0;
    if (fit.offset > 0.0 && r > 0.0) {
      const Eigen::Vector3d grad(-r / (fit.offset * fit.offset), beta(1) / (r * fit.offset),
                                 beta(2) / (r * fit.offset));
      fit.visibility_sigma = std::sqrt(grad.dot(cov * grad));
    }
    res.fits.push_back(fit);
  }

  // Analytic counterpart: the inverted click series is exactly
  // eta mu(dphi) - ln(1 - p_dc), sinusoidal in dphi.
  auto muhat_at = [&cfg, &bank](double phi_a, int det) {
    const auto exp = expected_detection(cfg, prepare_qudit(2, {0.0, phi_a}), bank);
    const auto& dm = cfg.detectors[static_cast<std::size_t>(det)];
    const double p = 1.0 - (1.0 - dm.dark_count_prob) * std::exp(-exp.sifted_mu(det) * dm.efficiency);
    return -std::log1p(-p);
  };
  const double peak = muhat_at(phi_b, 0);
  const double trough = muhat_at(phi_b + kPi, 0);
  res.analytic_visibility = peak + trough > 0.0 ? (peak - trough) / (peak + trough) : 0.0;

  res.wall_seconds = now_seconds_since(t0);
  return res;
}

MatrixExperimentResult run_matrix_experiment(const ArchitectureConfig& cfg,
                                             std::uint64_t gates_per_cell, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  MatrixExperimentResult res;
  res.matrix = probability_matrix(cfg, gates_per_cell, seed);
  res.seed = seed;
  double mean = 0.0;
  for (int j = 0; j < 4; ++j) mean += res.matrix.p(j, j);
  mean /= 4.0;
  double var = 0.0;
  for (int j = 0; j < 4; ++j) var += (res.matrix.p(j, j) - mean) * (res.matrix.p(j, j) - mean);
  res.diagonal_mean = mean;
  res.diagonal_sd = std::sqrt(var / 3.0);
  res.wall_seconds = now_seconds_since(t0);
  return res;
}

LossSweepResult run_loss_sweep(const ArchitectureConfig& cfg, double max_added_db, int steps,
                               std::optional<double> signal_override, double qber_target,
                               double db_per_km) {
  const auto t0 = std::chrono::steady_clock::now();
  if (max_added_db <= 0.0) throw std::invalid_argument("loss sweep: max added loss must be positive");
  if (steps < 2) throw std::invalid_argument("loss sweep: need at least 2 steps");
  if (db_per_km <= 0.0) throw std::invalid_argument("loss sweep: dB/km must be positive");

  LossSweepResult res;
  res.qber_target = qber_target;
  res.db_per_km = db_per_km;
  res.signal_override = signal_override;

  auto qber_at = [&](double db) { return qber_from_link(cfg, db, signal_override).qber; };
  res.baseline = qber_from_link(cfg, 0.0, signal_override);

  for (int i = 0; i < steps; ++i) {
    const double db = max_added_db * static_cast<double>(i) / static_cast<double>(steps - 1);
    LossSweepRow row;
    row.added_db = db;
    row.qber = qber_at(db);
    row.key = row.qber <= 0.5 ? key_fraction(row.qber) : 0.0;
    res.rows.push_back(row);
  }

  // QBER(alpha) is monotone nondecreasing; bisect for the threshold.
  const double q0 = qber_at(0.0), q1 = qber_at(max_added_db);
  if (q0 >= qber_target) {
    res.threshold_reached = true;
    res.threshold_db = 0.0;
  } else if (q1 < qber_target) {
    res.threshold_reached = false;  // unreachable within the sweep range
  } else {
    double lo = 0.0, hi = max_added_db;
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
      const double mid = 0.5 * (lo + hi);
      (qber_at(mid) < qber_target ? lo : hi) = mid;
    }
    res.threshold_reached = true;
    res.threshold_db = 0.5 * (lo + hi);
  }
  res.threshold_km = res.threshold_reached ? res.threshold_db / db_per_km : 0.0;
  res.wall_seconds = now_seconds_since(t0);
  return res;
}

std::vector<DimensionRow> run_dimension_table(int d_max, double lantern_loss_db) {
  if (d_max < 2) throw std::invalid_argument("dimension table: d_max must be >= 2");
  std::vector<DimensionRow> rows;
  for (int d = 2; d <= d_max; ++d)
    rows.push_back({d, intrinsic_sift_transmission(Scheme::time_bin, d),
                    detection_gain_vs_timebin(d, lantern_loss_db)});
  return rows;
}

std::string qber_report_csv(const QberReport& rep) {
  std::ostringstream out;
  out << "qber,optical_error_rate,signal_per_gate,dark_prob_total,dark_share_points,"
         "sifting_factor";
  for (std::size_t k = 0; k < rep.detector_click_prob.size(); ++k)
    out << ",click_prob_d" << k + 1;
  out << "\n";
  out << fmt(rep.qber) << ',' << fmt(rep.optical_error_rate) << ',' << fmt(rep.signal_per_gate)
      << ',' << fmt(rep.dark_prob_total) << ',' << fmt(rep.dark_share_points) << ','
      << fmt(rep.sifting_factor);
  for (double p : rep.detector_click_prob) out << ',' << fmt(p);
  out << "\n";
  return out.str();
}

std::string qber_report_json(const QberReport& rep) {
  nlohmann::ordered_json j;
  j["qber"] = rep.qber;
  j["optical_error_rate"] = rep.optical_error_rate;
  j["signal_per_gate"] = rep.signal_per_gate;
  j["dark_prob_total"] = rep.dark_prob_total;
  j["dark_share_points"] = rep.dark_share_points;
  j["sifting_factor"] = rep.sifting_factor;
  j["detector_click_prob"] = rep.detector_click_prob;
  return j.dump(2);
}

std::optional<double> resolve_fit(const std::string& fit_name, const ArchitectureConfig& cfg) {
  if (fit_name.empty() || fit_name == "none") return std::nullopt;
  const QberReport base = qber_from_link(cfg, 0.0);
  const double p_dc = base.dark_prob_total;
  if (fit_name == "fit_dark_share") {
    // 100 * 0.5 P / (S + P) = 0.016  =>  S = P (50 / 0.016 - 1)
    constexpr double kTargetPoints = 0.016;
    if (p_dc <= 0.0)
      throw std::invalid_argument("fit_dark_share: config has no dark counts to fit against");
    return p_dc * (50.0 / kTargetPoints - 1.0);
  }
  if (fit_name == "fit_qber11") {
    // (e S + 0.5 P) / (S + P) = q at alpha*  =>  S(alpha*) = P (0.5 - q) / (q - e)
    constexpr double kQ = 0.11;
    constexpr double kAlphaDb = 3.85;
    const double e_opt = base.optical_error_rate;
    if (p_dc <= 0.0 || e_opt >= kQ)
      throw std::invalid_argument(
          "fit_qber11: needs dark counts and an optical error rate below 11 %");
    const double s_at_threshold = p_dc * (0.5 - kQ) / (kQ - e_opt);
    return s_at_threshold * std::pow(10.0, kAlphaDb / 10.0);
  }
  throw std::invalid_argument("unknown fit '" + fit_name + "'");
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::filesystem::path base_path(const std::filesystem::path& dir, const std::string& runner,
                                const std::string& stamp, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  return dir / (runner + "_" + stamp + "_" + std::to_string(seed));
}

void write_manifest(const std::filesystem::path& p, const std::string& runner,
                    std::uint64_t seed, const std::string& config_echo, double wall_seconds,
                    const std::string& extras = "") {
  auto out = open_out(p);
  out << "runner = " << runner << "\n";
  out << "version = " << kVersion << "\n";
  out << "seed = " << seed << "\n";
  if (!extras.empty()) out << extras;
  out << "wall_seconds = " << fmt(wall_seconds) << "\n";
  out << "[config]\n" << config_echo;
}

void write_config_comment(std::ostream& out, const std::string& config_echo) {
  std::istringstream in(config_echo);
  std::string line;
  while (std::getline(in, line)) out << "# " << line << "\n";
}

}  // namespace

RunPaths write_interference_result(const std::filesystem::path& dir, const std::string& stamp,
                                   const InterferenceResult& result, OutputFormat format,
                                   const std::string& config_echo) {
  const auto base = base_path(dir, "sweep", stamp, result.seed);
  RunPaths paths;

  if (format == OutputFormat::csv) {
    paths.results = base;
    paths.results += ".csv";
    auto out = open_out(paths.results);
    out << "# qlink sweep " << kVersion << "\n";
    write_config_comment(out, config_echo);
    out << "# phi_b = " << fmt(result.phi_b) << "\n";
    out << "# gates_per_point = " << result.gates_per_point << "\n";
    out << "# analytic_visibility = " << fmt(result.analytic_visibility) << "\n";
    for (std::size_t det = 0; det < result.fits.size(); ++det) {
      const auto& f = result.fits[det];
      out << "# fit_d" << det + 1 << ": offset=" << fmt(f.offset)
          << " amplitude=" << fmt(f.amplitude) << " phase=" << fmt(f.phase)
          << " visibility=" << fmt(f.visibility) << " visibility_sigma="
          << fmt(f.visibility_sigma) << "\n";
    }
    if (result.zero_counts) out << "# warning: zero counts everywhere\n";
    out << "phi_a,counts_d1,sigma_d1,muhat_d1,counts_d2,sigma_d2,muhat_d2\n";
    for (const auto& row : result.rows) {
      out << fmt(row.x);
      for (int det = 0; det < 2; ++det)
        out << ',' << fmt(row.counts[static_cast<std::size_t>(det)]) << ','
            << fmt(row.sigma[static_cast<std::size_t>(det)]) << ','
            << fmt(row.mu_estimate[static_cast<std::size_t>(det)]);
      out << "\n";
    }
  } else {
    paths.results = base;
    paths.results += ".json";
    nlohmann::ordered_json j;
    j["runner"] = "sweep";
    j["version"] = kVersion;
    j["seed"] = result.seed;
    j["phi_b"] = result.phi_b;
    j["gates_per_point"] = result.gates_per_point;
    j["analytic_visibility"] = result.analytic_visibility;
    j["zero_counts"] = result.zero_counts;
    for (const auto& f : result.fits)
      j["fits"].push_back({{"offset", f.offset},
                           {"amplitude", f.amplitude},
                           {"phase", f.phase},
                           {"visibility", f.visibility},
                           {"visibility_sigma", f.visibility_sigma}});
    for (const auto& row : result.rows)
      j["rows"].push_back({{"phi_a", row.x},
                           {"counts", row.counts},
                           {"sigma", row.sigma},
                           {"muhat", row.mu_estimate}});
    auto out = open_out(paths.results);
    out << j.dump(2) << "\n";
  }

  for (int det = 0; det < 2; ++det) {
    std::filesystem::path p = base;
    p += "_d" + std::to_string(det + 1) + ".dat";
    auto out = open_out(p);
    out << "# x y sigma\n";
    for (const auto& row : result.rows)
      out << fmt(row.x) << ' ' << fmt(row.counts[static_cast<std::size_t>(det)]) << ' '
          << fmt(row.sigma[static_cast<std::size_t>(det)]) << "\n";
    paths.plots.push_back(p);
  }

  paths.manifest = base;
  paths.manifest += ".manifest.txt";
  std::ostringstream extras;
  extras << "phi_b = " << fmt(result.phi_b) << "\n";
  write_manifest(paths.manifest, "sweep", result.seed, config_echo, result.wall_seconds,
                 extras.str());
  return paths;
}

RunPaths write_matrix_result(const std::filesystem::path& dir, const std::string& stamp,
                             const MatrixExperimentResult& result, OutputFormat format,
                             const std::string& config_echo) {
  const auto base = base_path(dir, "matrix", stamp, result.seed);
  RunPaths paths;
  static const char* kNames[4] = {"LP+", "LP-", "OAM+", "OAM-"};

  if (format == OutputFormat::csv) {
    paths.results = base;
    paths.results += ".csv";
    auto out = open_out(paths.results);
    out << "# qlink matrix " << kVersion << "\n";
    write_config_comment(out, config_echo);
    out << "# gates_per_cell = " << result.matrix.gates_per_cell << "\n";
    out << "# diagonal_mean = " << fmt(result.diagonal_mean) << "\n";
    out << "# diagonal_sd = " << fmt(result.diagonal_sd) << "\n";
    if (result.matrix.low_counts_warning) out << "# warning: fewer than 100 expected clicks per cell\n";
    out << "sent,proj_LP+,sigma_LP+,proj_LP-,sigma_LP-,proj_OAM+,sigma_OAM+,proj_OAM-,sigma_OAM-\n";
    for (int j = 0; j < 4; ++j) {
      out << kNames[j];
      for (int i = 0; i < 4; ++i)
        out << ',' << fmt(result.matrix.p(j, i)) << ',' << fmt(result.matrix.sigma(j, i));
      out << "\n";
    }
  } else {
    paths.results = base;
    paths.results += ".json";
    nlohmann::ordered_json j;
    j["runner"] = "matrix";
    j["version"] = kVersion;
    j["seed"] = result.seed;
    j["gates_per_cell"] = result.matrix.gates_per_cell;
    j["diagonal_mean"] = result.diagonal_mean;
    j["diagonal_sd"] = result.diagonal_sd;
    j["low_counts_warning"] = result.matrix.low_counts_warning;
    for (int r = 0; r < 4; ++r) {
      nlohmann::ordered_json row;
      row["sent"] = kNames[r];
      for (int c = 0; c < 4; ++c) {
        row["p"].push_back(result.matrix.p(r, c));
        row["sigma"].push_back(result.matrix.sigma(r, c));
      }
      j["rows"].push_back(row);
    }
    auto out = open_out(paths.results);
    out << j.dump(2) << "\n";
  }

  paths.manifest = base;
  paths.manifest += ".manifest.txt";
  write_manifest(paths.manifest, "matrix", result.seed, config_echo, result.wall_seconds);
  return paths;
}

RunPaths write_loss_sweep_result(const std::filesystem::path& dir, const std::string& stamp,
                                 const LossSweepResult& result, OutputFormat format,
                                 const std::string& config_echo, std::uint64_t seed) {
  const auto base = base_path(dir, "losssweep", stamp, seed);
  RunPaths paths;

  if (format == OutputFormat::csv) {
    paths.results = base;
    paths.results += ".csv";
    auto out = open_out(paths.results);
    out << "# qlink losssweep " << kVersion << "\n";
    write_config_comment(out, config_echo);
    if (result.signal_override)
      out << "# signal_override_per_gate = " << fmt(*result.signal_override) << "\n";
    out << "# qber_target = " << fmt(result.qber_target) << "\n";
    if (result.threshold_reached)
      out << "# threshold_db = " << fmt(result.threshold_db)
          << "\n# threshold_km = " << fmt(result.threshold_km) << " (at "
          << fmt(result.db_per_km) << " dB/km)\n";
    else
      out << "# threshold = unreachable within sweep range\n";
    {
      std::istringstream baseline(qber_report_csv(result.baseline));
      std::string line;
      while (std::getline(baseline, line)) out << "# baseline " << line << "\n";
    }
    out << "added_db,qber,key_fraction\n";
    for (const auto& row : result.rows)
      out << fmt(row.added_db) << ',' << fmt(row.qber) << ',' << fmt(row.key) << "\n";
  } else {
    paths.results = base;
    paths.results += ".json";
    nlohmann::ordered_json j;
    j["runner"] = "losssweep";
    j["version"] = kVersion;
    j["seed"] = seed;
    j["baseline"] = nlohmann::ordered_json::parse(qber_report_json(result.baseline));
    j["qber_target"] = result.qber_target;
    j["threshold_reached"] = result.threshold_reached;
    if (result.threshold_reached) {
      j["threshold_db"] = result.threshold_db;
      j["threshold_km"] = result.threshold_km;
      j["db_per_km"] = result.db_per_km;
    }
    if (result.signal_override) j["signal_override_per_gate"] = *result.signal_override;
    for (const auto& row : result.rows)
      j["rows"].push_back({{"added_db", row.added_db}, {"qber", row.qber}, {"key", row.key}});
    auto out = open_out(paths.results);
    out << j.dump(2) << "\n";
  }

  std::filesystem::path plot = base;
  plot += "_qber.dat";
  {
    auto out = open_out(plot);
    out << "# x y sigma\n";
    for (const auto& row : result.rows)
      out << fmt(row.added_db) << ' ' << fmt(row.qber) << " 0\n";
  }
  paths.plots.push_back(plot);

  paths.manifest = base;
  paths.manifest += ".manifest.txt";
  write_manifest(paths.manifest, "losssweep", seed, config_echo, result.wall_seconds);
  return paths;
}

RunPaths write_dimension_table(const std::filesystem::path& dir, const std::string& stamp,
                               const std::vector<DimensionRow>& rows, OutputFormat format,
                               const std::string& config_echo, std::uint64_t seed) {
  const auto base = base_path(dir, "dimtable", stamp, seed);
  RunPaths paths;

  if (format == OutputFormat::csv) {
    paths.results = base;
    paths.results += ".csv";
    auto out = open_out(paths.results);
    out << "# qlink dimtable " << kVersion << "\n";
    out << "d,timebin_transmission,fmf_gain\n";
    for (const auto& row : rows)
      out << row.d << ',' << fmt(row.timebin_transmission) << ',' << fmt(row.fmf_gain) << "\n";
  } else {
    paths.results = base;
    paths.results += ".json";
    nlohmann::ordered_json j;
    j["runner"] = "dimtable";
    j["version"] = kVersion;
    for (const auto& row : rows)
      j["rows"].push_back({{"d", row.d},
                           {"timebin_transmission", row.timebin_transmission},
                           {"fmf_gain", row.fmf_gain}});
    auto out = open_out(paths.results);
    out << j.dump(2) << "\n";
  }

  paths.manifest = base;
  paths.manifest += ".manifest.txt";
  write_manifest(paths.manifest, "dimtable", seed, config_echo, 0.0);
  return paths;
}

}  // namespace qlink
