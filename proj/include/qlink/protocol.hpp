#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "qlink/components.hpp"
#include "qlink/modes.hpp"

namespace qlink {

// ---------------------------------------------------------------------------
// BB84 state table over the (LP11a, LP11b) mode pair:
//   MUB1:  |LP+->  phi_A = 0       |LP-->  phi_A = pi
//   MUB2:  |OAM+-> phi_A = pi/2    |OAM--> phi_A = 3pi/2
// Every prepared state is (1/sqrt2) (1, e^{i phi_A}).
// ---------------------------------------------------------------------------

enum class Bb84Label { lp_plus, lp_minus, oam_plus, oam_minus };
enum class Basis { mub1, mub2 };

inline constexpr std::array<Bb84Label, 4> kBb84Labels = {
    Bb84Label::lp_plus, Bb84Label::lp_minus, Bb84Label::oam_plus, Bb84Label::oam_minus};

double alice_phase(Bb84Label label);     // {0, pi, pi/2, 3pi/2}
Basis basis_of(Bb84Label label);
double basis_phase(Basis basis);         // phi_B in {0, pi/2}
const char* to_string(Bb84Label label);

ModeState prepare_bb84(Bb84Label label);

// d-dimensional path state (1/sqrt d) sum_n e^{i phi_n} |n>.
ModeState prepare_qudit(int d, const std::vector<double>& phases);

// ---------------------------------------------------------------------------
// Link architectures (the three schemes and their d-dimensional versions)
// ---------------------------------------------------------------------------

enum class Scheme { long_mzi, time_bin, fmf_lantern };

const char* to_string(Scheme scheme);

struct ArchitectureConfig {
  Scheme scheme = Scheme::fmf_lantern;
  int dim = 2;
  SourceModel source;
  std::optional<std::pair<LanternModel, LanternModel>> lanterns;  // mux, demux; fmf_lantern only
  FiberSpan fiber;
  std::vector<DetectorModel> detectors;  // one per output port
  double visibility = 1.0;               // residual mode/polarization overlap V
};

void validate(const ArchitectureConfig& cfg);

// Bob's phase-bank settings that realize a measurement. The couplers'
// cross-port i is compensated so that detector 0 projects onto the state
// with relative phase phi_b (dim 2), or onto the qudit state with phases
// `target` (general d; detector k then projects onto the DFT-conjugate
// state k).
std::vector<double> bob_phase_bank(Scheme scheme, int dim, double phi_b);
std::vector<double> bob_projection_bank(Scheme scheme, int dim, const std::vector<double>& target);

// Per-detector, per-arrival-bin mean photon numbers for one trial, plus the
// temporal sifting mask. Detector 0 is the matched projector. Single-bin
// schemes return one all-pass bin; time_bin returns 2d-1 bins with only the
// central one sifted.
struct DetectionResult {
  Eigen::MatrixXd mean_photons;      // n_detectors x n_bins
  std::vector<std::uint8_t> sift_mask;

  int bins() const { return static_cast<int>(mean_photons.cols()); }
  int detectors() const { return static_cast<int>(mean_photons.rows()); }
  double sifted_mu(int detector) const;
};

DetectionResult detection_probabilities(const ArchitectureConfig& cfg, const ModeState& prepared,
                                        const std::vector<double>& bob_phases,
                                        std::optional<std::uint64_t> trial_seed = std::nullopt);

// Exact expectation of detection_probabilities over the per-trial crosstalk
// phases (and identical to it when nothing is random).
DetectionResult expected_detection(const ArchitectureConfig& cfg, const ModeState& prepared,
                                   const std::vector<double>& bob_phases);

// Monte Carlo gated detection: counts of sifted clicks per detector.
// Crosstalk phases are redrawn every gate in random_per_trial mode.
std::vector<std::uint64_t> simulate_clicks(const ArchitectureConfig& cfg, const ModeState& prepared,
                                           const std::vector<double>& bob_phases,
                                           std::uint64_t n_gates, std::uint64_t seed);

// Fraction of detection events surviving temporal post-selection:
// 1/d for time_bin, 1 otherwise.
double intrinsic_sift_transmission(Scheme scheme, int d);

// ---------------------------------------------------------------------------
// BB84 statistics
// ---------------------------------------------------------------------------

struct ProbabilityMatrixResult {
  Eigen::Matrix4d p;          // row = sent state, col = projected state
  Eigen::Matrix4d sigma;      // per-cell binomial standard error
  std::uint64_t gates_per_cell = 0;
  bool low_counts_warning = false;  // some cell had < 100 expected clicks
};

// Monte Carlo estimate of P(project i | sent j) for the four BB84 states.
// Cells are normalized per sent state within the measured basis.
ProbabilityMatrixResult probability_matrix(const ArchitectureConfig& cfg,
                                           std::uint64_t gates_per_cell, std::uint64_t seed);

// Matched-basis projection probability P(right detector | matched basis),
// averaged over the four BB84 states, dark counts included. This is the
// analytic counterpart of the probability-matrix diagonal.
double analytic_matched_diagonal(const ArchitectureConfig& cfg);

// Solve for the visibility V that makes analytic_matched_diagonal hit
// `target`. Throws if the target is unreachable even at V = 1.
double calibrate_visibility(ArchitectureConfig cfg, double target);

struct QberReport {
  std::vector<double> detector_click_prob;  // per gate, darks included
  double sifting_factor = 1.0;
  double qber = 0.0;
  double dark_share_points = 0.0;  // percentage points of the QBER due to darks
  double signal_per_gate = 0.0;    // sifted signal click probability S'
  double optical_error_rate = 0.0; // e_opt
  double dark_prob_total = 0.0;    // P_dc over sifted bins
};

// QBER under `added_loss_db` of extra channel attenuation:
//   QBER = (e_opt S' + 0.5 P_dc) / (S' + P_dc)
// with S' the sifted signal click probability per gate and P_dc the dark
// probability per sifted bin. `signal_override` pins the baseline S'(0)
// instead of deriving it from the device chain (used by the named fits).
QberReport qber_from_link(const ArchitectureConfig& cfg, double added_loss_db,
                          std::optional<double> signal_override = std::nullopt);

double binary_entropy(double p);

// Asymptotic BB84 key fraction max(0, 1 - 2 h2(q)).
double key_fraction(double qber);

// Fractional gain of the lantern scheme's detection stage (one lantern at
// Bob) over time-bin post-selection (factor 1/d):
//   10^((10 log10 d - L)/10) - 1.
double detection_gain_vs_timebin(int d, double lantern_loss_db);

}  // namespace qlink
