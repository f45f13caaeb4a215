#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "qlink/modes.hpp"

namespace qlink {

inline double db_to_power(double db) { return std::pow(10.0, -db / 10.0); }
inline double db_to_amplitude(double db) { return std::pow(10.0, -db / 20.0); }

// How the coherent crosstalk phase of a lantern behaves from gate to gate.
enum class CrosstalkPhaseMode { fixed, random_per_trial };

// Mode-selective photonic lantern. Maps dim single-mode ports one-to-one to
// dim LP modes (or back). Imperfections: a flat insertion loss and per-output
// extinction ratios; crosstalk is coherent with a fixed or per-trial phase.
struct LanternModel {
  int dim = 2;
  double insertion_loss_db = 0.0;         // >= 0
  std::vector<double> extinction_db;      // one per output, <= 0; -inf = no crosstalk
  CrosstalkPhaseMode phase_mode = CrosstalkPhaseMode::fixed;
  double fixed_phase_rad = 0.0;

  static LanternModel ideal(int dim);
};

// Validates parameter ranges and the passivity of the induced transfer
// matrix (worst case over crosstalk phases). Throws std::invalid_argument.
void validate(const LanternModel& model);

// Induced dim x dim transfer matrix. Diagonal sqrt(t*(1-eps_k)), off-diagonal
// sqrt(t*eps_k)*e^{i theta} with t = 10^(-IL/10), eps_k = 10^(ext_db[k]/10).
// trial_seed drives the per-trial phase draw and is required in
// random_per_trial mode.
TransferElement lantern_transfer(const LanternModel& model,
                                 std::optional<std::uint64_t> trial_seed = std::nullopt);

// Few-mode fiber span; same-core propagation applies one scalar attenuation
// and one common phase to every mode.
struct FiberSpan {
  double length_km = 0.0;
  double loss_coeff_db_per_km = 0.0;
  double excess_loss_db = 0.0;            // connectors etc.
  std::function<double(double)> common_phase_drift;  // time_s -> radians, may be empty

  double total_loss_db() const { return length_km * loss_coeff_db_per_km + excess_loss_db; }
};

void validate(const FiberSpan& span);

// dim x dim scalar element a * e^{i phi(t)} * I with a = 10^(-loss_db/20).
TransferElement fiber_transfer(const FiberSpan& span, double time_s = 0.0, Eigen::Index dim = 2);

// Weak coherent source: mean photon number per gate width at Alice's output.
struct SourceModel {
  double mean_photon_number = 0.0;
};

// Gated InGaAs single-photon detector.
struct DetectorModel {
  double efficiency = 0.1;          // eta, in [0,1]
  double dark_count_prob = 0.0;     // per gate, in [0,1]
  double gate_width_ns = 2.5;
  double trigger_rate_hz = 1.0e6;
};

void validate(const SourceModel& source);
void validate(const DetectorModel& det);

// Threshold click model: P(click) = 1 - (1 - p_dc) exp(-mu * eta).
double click_probability(double mu_at_detector, const DetectorModel& det);

// Per-detector Bernoulli click counts over n_gates gates. Deterministic for
// a fixed seed; detector streams are sub-seeded independently so results do
// not depend on evaluation order.
std::vector<std::uint64_t> sample_clicks(const std::vector<double>& per_detector_mu,
                                         const DetectorModel& det, std::uint64_t n_gates,
                                         std::uint64_t seed);

}  // namespace qlink
