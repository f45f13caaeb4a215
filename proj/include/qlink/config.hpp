#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>

#include "qlink/protocol.hpp"

namespace qlink {

// Configuration problem with the offending line number (0 = no line, e.g.
// missing file or missing key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string message, int line = 0)
      : std::runtime_error(std::move(message)), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Full parameterization of one run: link scheme and devices plus the
// reproducibility knobs. Loaded from `section.key = value` files.
struct RunConfig {
  Scheme scheme = Scheme::fmf_lantern;
  int dim = 2;
  SourceModel source{0.4};
  std::optional<std::pair<LanternModel, LanternModel>> lanterns;
  FiberSpan fiber;
  DetectorModel detector;

  double visibility = 1.0;
  bool visibility_auto = false;   // solve V from target_diagonal instead
  double target_diagonal = 1.0;

  std::string fit = "none";       // none | fit_dark_share | fit_qber11
  std::uint64_t seed = 1;
  std::string output_dir = ".";
};

RunConfig parse_run_config(std::istream& in, const std::string& origin = "<stream>");
RunConfig load_run_config(const std::filesystem::path& path);

// Built-in presets mirroring the shipped config files:
// `ideal`, `paper_b2b`, `paper_500m`.
RunConfig preset_config(const std::string& name);

// Resolve the run configuration into a validated architecture; solves the
// visibility when it is set to `auto`.
ArchitectureConfig make_architecture(const RunConfig& run);

// Canonical `section.key = value` echo (deterministic ordering), used for
// run manifests and result-file metadata.
std::string echo_config(const RunConfig& run);

}  // namespace qlink
