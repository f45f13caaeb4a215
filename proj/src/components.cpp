#include "qlink/components.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "qlink/rng.hpp"

namespace qlink {

LanternModel LanternModel::ideal(int dim) {
  LanternModel m;
  m.dim = dim;
  m.insertion_loss_db = 0.0;
  m.extinction_db.assign(static_cast<std::size_t>(dim),
                         -std::numeric_limits<double>::infinity());
  return m;
}

namespace {

double extinction_fraction(double extinction_db) {
  if (std::isinf(extinction_db) && extinction_db < 0) return 0.0;
  return std::pow(10.0, extinction_db / 10.0);
}

// Entry magnitudes of the induced matrix. The spectral norm of any phase
// assignment is bounded by the spectral norm of this nonnegative matrix,
// so passivity checked here holds for every trial.
Eigen::MatrixXd magnitude_matrix(const LanternModel& m) {
  const double t = db_to_power(m.insertion_loss_db);
  Eigen::MatrixXd a(m.dim, m.dim);
  for (int r = 0; r < m.dim; ++r) {
    const double eps = extinction_fraction(m.extinction_db[static_cast<std::size_t>(r)]);
    for (int c = 0; c < m.dim; ++c)
      a(r, c) = (r == c) ? std::sqrt(t * (1.0 - eps)) : std::sqrt(t * eps);
  }
  return a;
}

}  // namespace

void validate(const LanternModel& m) {
  if (m.dim < 2) throw std::invalid_argument("lantern: dim must be >= 2");
  if (m.insertion_loss_db < 0.0) throw std::invalid_argument("lantern: insertion loss must be >= 0 dB");
  if (m.extinction_db.size() != static_cast<std::size_t>(m.dim))
    throw std::invalid_argument("lantern: need one extinction value per output");
  for (double e : m.extinction_db)
    if (e > 0.0) throw std::invalid_argument("lantern: extinction must be <= 0 dB");
  const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(magnitude_matrix(m)).singularValues()(0);
  if (smax > 1.0 + kSpectralTol)
    throw std::invalid_argument("lantern: crosstalk/insertion combination is not passive (max singular value " +
                                std::to_string(smax) + ")");
}

TransferElement lantern_transfer(const LanternModel& m, std::optional<std::uint64_t> trial_seed) {
  validate(m);
  if (m.phase_mode == CrosstalkPhaseMode::random_per_trial && !trial_seed)
    throw std::invalid_argument("lantern: random_per_trial crosstalk needs a trial seed");

  std::mt19937_64 gen(trial_seed ? derive_seed(*trial_seed, 0x6c616e74u) : 0);
  const Eigen::MatrixXd mag = magnitude_matrix(m);
  Eigen::MatrixXcd out(m.dim, m.dim);
  for (int r = 0; r < m.dim; ++r)
    for (int c = 0; c < m.dim; ++c) {
      if (r == c) {
        out(r, c) = mag(r, c);
      } else {
        const double theta = m.phase_mode == CrosstalkPhaseMode::fixed
                                 ? m.fixed_phase_rad
                                 : 2.0 * std::numbers::pi * uniform_double(gen);
        out(r, c) = mag(r, c) * std::complex<double>(std::cos(theta), std::sin(theta));
      }
    }
  return TransferElement(std::move(out), "lantern");
}

void validate(const FiberSpan& span) {
  if (span.length_km < 0.0) throw std::invalid_argument("fiber: length must be >= 0 km");
  if (span.loss_coeff_db_per_km < 0.0) throw std::invalid_argument("fiber: loss coefficient must be >= 0 dB/km");
  if (span.excess_loss_db < 0.0) throw std::invalid_argument("fiber: excess loss must be >= 0 dB");
}

TransferElement fiber_transfer(const FiberSpan& span, double time_s, Eigen::Index dim) {
  validate(span);
  if (dim < 2) throw std::invalid_argument("fiber: dim must be >= 2");
  const double amplitude = db_to_amplitude(span.total_loss_db());
  const double phi = span.common_phase_drift ? span.common_phase_drift(time_s) : 0.0;
  const std::complex<double> factor =
      amplitude * std::complex<double>(std::cos(phi), std::sin(phi));
  // Same-core propagation: one scalar applied to every mode.
  Eigen::MatrixXcd mat = Eigen::MatrixXcd::Identity(dim, dim) * factor;
  return TransferElement(std::move(mat), "fiber");
}

void validate(const SourceModel& source) {
  if (source.mean_photon_number < 0.0)
    throw std::invalid_argument("source: mean photon number must be >= 0");
}

void validate(const DetectorModel& det) {
  if (det.efficiency < 0.0 || det.efficiency > 1.0)
    throw std::invalid_argument("detector: efficiency must lie in [0,1]");
  if (det.dark_count_prob < 0.0 || det.dark_count_prob > 1.0)
    throw std::invalid_argument("detector: dark count probability must lie in [0,1]");
  if (det.gate_width_ns <= 0.0) throw std::invalid_argument("detector: gate width must be positive");
  if (det.trigger_rate_hz <= 0.0) throw std::invalid_argument("detector: trigger rate must be positive");
}

double click_probability(double mu_at_detector, const DetectorModel& det) {
  if (mu_at_detector < 0.0) throw std::invalid_argument("click_probability: mu must be >= 0");
  validate(det);
  return 1.0 - (1.0 - det.dark_count_prob) * std::exp(-mu_at_detector * det.efficiency);
}

std::vector<std::uint64_t> sample_clicks(const std::vector<double>& per_detector_mu,
                                         const DetectorModel& det, std::uint64_t n_gates,
                                         std::uint64_t seed) {
  if (n_gates < 1) throw std::invalid_argument("sample_clicks: need at least one gate");
  std::vector<std::uint64_t> counts(per_detector_mu.size(), 0);
  for (std::size_t k = 0; k < per_detector_mu.size(); ++k) {
    const double p = click_probability(per_detector_mu[k], det);
    std::mt19937_64 gen(derive_seed(seed, k));
    std::uint64_t c = 0;
    for (std::uint64_t g = 0; g < n_gates; ++g)
      if (uniform_double(gen) < p) ++c;
    counts[k] = c;
  }
  return counts;
}

}  // namespace qlink
