#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "qlink/config.hpp"
#include "qlink/experiments.hpp"

using namespace qlink;
namespace fs = std::filesystem;

namespace {
constexpr double pi = std::numbers::pi;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("qlink_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double wrap_angle(double a) {
  while (a > pi) a -= 2 * pi;
  while (a < -pi) a += 2 * pi;
  return a;
}
}  // namespace

TEST_CASE("interference sweep: ideal link fits visibility 1.000") {
  const ArchitectureConfig cfg = make_architecture(preset_config("ideal"));
  SweepSpec spec;
  spec.steps = 48;
  spec.gates_per_point = 14000;
  spec.seed = 7;

  const InterferenceResult res = run_interference_sweep(cfg, spec, 0.0);
  CHECK(res.analytic_visibility == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(res.fits[0].visibility - 1.0) < 1e-3);
  CHECK_FALSE(res.zero_counts);

  // triangular ramp: 2*steps - 2 points
  CHECK(res.rows.size() == 2 * 48 - 2);

  // the two detector fringes are anti-phased by pi
  const double offset = wrap_angle(res.fits[0].phase - res.fits[1].phase);
  CHECK(std::abs(std::abs(offset) - pi) < 0.05);
}

TEST_CASE("interference sweep: fitted visibility matches the analytic value") {
  const ArchitectureConfig cfg = make_architecture(preset_config("paper_500m"));
  SweepSpec spec;
  spec.steps = 64;
  spec.gates_per_point = 14000;
  spec.seed = 3;

  for (double phi_b : {0.0, pi / 2}) {
    const InterferenceResult res = run_interference_sweep(cfg, spec, phi_b);
    // calibrated 500 m link: V_fit ~= 2 * 0.951 - 1
    CHECK(res.analytic_visibility == doctest::Approx(2 * 0.951 - 1).epsilon(5e-3));
    CHECK(std::abs(res.fits[0].visibility - res.analytic_visibility) <
          3.0 * res.fits[0].visibility_sigma);
  }
}

TEST_CASE("interference sweep: rejects bad specs") {
  const ArchitectureConfig cfg = make_architecture(preset_config("ideal"));
  SweepSpec spec;
  spec.steps = 1;
  CHECK_THROWS_AS(run_interference_sweep(cfg, spec, 0.0), std::invalid_argument);
  spec.steps = 16;
  spec.variable = SweepSpec::Variable::added_loss_db;
  CHECK_THROWS_AS(run_interference_sweep(cfg, spec, 0.0), std::invalid_argument);
}

TEST_CASE("matrix experiment: ideal diagonal") {
  const ArchitectureConfig cfg = make_architecture(preset_config("ideal"));
  const MatrixExperimentResult res = run_matrix_experiment(cfg, 20000, 11);
  CHECK(res.diagonal_mean == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.diagonal_sd == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("loss sweep: fit_qber11 reproduces the threshold") {
  const ArchitectureConfig cfg = make_architecture(preset_config("paper_500m"));
  const auto fit = resolve_fit("fit_qber11", cfg);
  REQUIRE(fit.has_value());
  CHECK(*fit > 3.0e-5);
  CHECK(*fit < 4.5e-5);

  const LossSweepResult res = run_loss_sweep(cfg, 10.0, 41, fit);
  REQUIRE(res.threshold_reached);
  CHECK(res.threshold_db == doctest::Approx(3.85).epsilon(0.013));  // +-0.05 dB
  CHECK(res.threshold_km == doctest::Approx(17.5).epsilon(0.017));  // +-0.3 km

  // oracle: 1000-point grid scan brackets the same crossing
  const int n = 1000;
  double grid_db = -1.0;
  for (int i = 0; i + 1 < n; ++i) {
    const double a = 10.0 * i / (n - 1), b = 10.0 * (i + 1) / (n - 1);
    if (qber_from_link(cfg, a, fit).qber < 0.11 && qber_from_link(cfg, b, fit).qber >= 0.11) {
      grid_db = a;
      break;
    }
  }
  REQUIRE(grid_db >= 0.0);
  CHECK(std::abs(res.threshold_db - grid_db) <= 10.0 / (n - 1) + 1e-9);
}

TEST_CASE("loss sweep: fit_dark_share pins the dark contribution") {
  const ArchitectureConfig cfg = make_architecture(preset_config("paper_500m"));
  const auto fit = resolve_fit("fit_dark_share", cfg);
  REQUIRE(fit.has_value());
  // S0 = P_dc (50 / 0.016 - 1) with P_dc = 2.4e-6
  CHECK(*fit == doctest::Approx(2.4e-6 * (50.0 / 0.016 - 1.0)).epsilon(1e-12));
  const QberReport rep = qber_from_link(cfg, 0.0, fit);
  CHECK(rep.dark_share_points == doctest::Approx(0.016).epsilon(1e-9));
}

TEST_CASE("loss sweep: clean link never reaches the threshold") {
  const ArchitectureConfig cfg = make_architecture(preset_config("ideal"));
  const LossSweepResult res = run_loss_sweep(cfg, 20.0, 21);
  CHECK_FALSE(res.threshold_reached);
  for (const auto& row : res.rows) CHECK(row.qber == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dimension table") {
  const auto rows = run_dimension_table(8, 0.7);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].d == 2);
  CHECK(rows[0].timebin_transmission == 0.5);
  CHECK(rows[0].fmf_gain == doctest::Approx(0.70228).epsilon(1e-4));
  CHECK(rows[6].d == 8);
  CHECK(rows[6].timebin_transmission == 0.125);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].fmf_gain > rows[i - 1].fmf_gain);
  CHECK_THROWS_AS(run_dimension_table(1, 0.7), std::invalid_argument);
}

TEST_CASE("qber report serialization") {
  const ArchitectureConfig cfg = make_architecture(preset_config("paper_500m"));
  const QberReport rep = qber_from_link(cfg, 0.0);

  const std::string csv = qber_report_csv(rep);
  CHECK(csv.find("qber,optical_error_rate,signal_per_gate,dark_prob_total,"
                 "dark_share_points,sifting_factor,click_prob_d1,click_prob_d2") !=
        std::string::npos);
  // one header + one data row
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  const std::string json = qber_report_json(rep);
  CHECK(json.find("\"qber\"") != std::string::npos);
  CHECK(json.find("\"detector_click_prob\"") != std::string::npos);

  const LossSweepResult sweep = run_loss_sweep(cfg, 5.0, 5);
  CHECK(sweep.baseline.qber == doctest::Approx(rep.qber).epsilon(1e-12));
}

TEST_CASE("resolve_fit: unknown and inapplicable fits") {
  const ArchitectureConfig cfg = make_architecture(preset_config("paper_500m"));
  CHECK_FALSE(resolve_fit("none", cfg).has_value());
  CHECK_THROWS_AS(resolve_fit("bogus", cfg), std::invalid_argument);
  const ArchitectureConfig clean = make_architecture(preset_config("ideal"));
  CHECK_THROWS_AS(resolve_fit("fit_dark_share", clean), std::invalid_argument);
}

TEST_CASE("result files are byte-identical across reruns") {
  const RunConfig run = preset_config("paper_500m");
  const ArchitectureConfig cfg = make_architecture(run);
  SweepSpec spec;
  spec.steps = 16;
  spec.gates_per_point = 2000;
  spec.seed = 5;

  const auto dir_a = temp_dir("rerun_a");
  const auto dir_b = temp_dir("rerun_b");
  const auto res_a = run_interference_sweep(cfg, spec, 0.0);
  const auto res_b = run_interference_sweep(cfg, spec, 0.0);
  const auto paths_a =
      write_interference_result(dir_a, "stamp", res_a, OutputFormat::csv, echo_config(run));
  const auto paths_b =
      write_interference_result(dir_b, "stamp", res_b, OutputFormat::csv, echo_config(run));

  CHECK(slurp(paths_a.results) == slurp(paths_b.results));
  REQUIRE(paths_a.plots.size() == paths_b.plots.size());
  for (std::size_t i = 0; i < paths_a.plots.size(); ++i)
    CHECK(slurp(paths_a.plots[i]) == slurp(paths_b.plots[i]));

  // file naming convention <runner>_<stamp>_<seed>.*
  CHECK(paths_a.results.filename() == "sweep_stamp_5.csv");
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("json results are well formed") {
  const RunConfig run = preset_config("ideal");
  const ArchitectureConfig cfg = make_architecture(run);
  const auto dir = temp_dir("json");

  const MatrixExperimentResult res = run_matrix_experiment(cfg, 2000, 3);
  const auto paths = write_matrix_result(dir, "s", res, OutputFormat::json, echo_config(run));
  const std::string text = slurp(paths.results);
  CHECK(text.find("\"runner\": \"matrix\"") != std::string::npos);
  CHECK(text.find("\"diagonal_mean\"") != std::string::npos);
  CHECK(paths.results.extension() == ".json");
  fs::remove_all(dir);
}

TEST_CASE("loss sweep and dimension table writers") {
  const RunConfig run = preset_config("paper_500m");
  const ArchitectureConfig cfg = make_architecture(run);
  const auto dir = temp_dir("writers");

  const auto loss = run_loss_sweep(cfg, 8.0, 9, resolve_fit("fit_qber11", cfg));
  const auto lp = write_loss_sweep_result(dir, "s", loss, OutputFormat::csv, echo_config(run), 2);
  const std::string text = slurp(lp.results);
  CHECK(text.find("added_db,qber,key_fraction") != std::string::npos);
  CHECK(text.find("# threshold_db = ") != std::string::npos);
  CHECK(text.find("# threshold_km = ") != std::string::npos);

  const auto dim = run_dimension_table(4, 0.7);
  const auto dp = write_dimension_table(dir, "s", dim, OutputFormat::csv, "", 2);
  CHECK(slurp(dp.results).find("d,timebin_transmission,fmf_gain") != std::string::npos);
  fs::remove_all(dir);
}
