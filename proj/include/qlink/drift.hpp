#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <numbers>

namespace qlink {

// Photodiode trace of the interferometer output, arbitrary units.
struct TimeSeries {
  double sample_rate_hz = 0.0;
  Eigen::VectorXd samples;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

enum class DriftModel { none, random_walk };

// Environmental phase drift. The walk is mean-reverting with time constant
// relaxation_time_s; an infinite relaxation time gives the pure Wiener walk.
struct DriftParams {
  DriftModel model = DriftModel::none;
  double sigma_rad_per_sqrt_s = 0.0;
  double relaxation_time_s = 0.5;
};

// trace(t) = 1/2 (1 + V cos(A sin(2 pi f_mod t) + bias + phi_drift(t)))
// The default bias sits the interferometer at quadrature so the modulation
// fundamental appears at f_mod (at zero bias only even harmonics survive).
struct SynthSpec {
  double duration_s = 1.0;
  double sample_rate_hz = 1000.0;
  double mod_freq_hz = 100.0;
  DriftParams drift;
  std::uint64_t seed = 0;
  double visibility = 1.0;
  double mod_depth_rad = 1.0;
  double bias_rad = std::numbers::pi / 2.0;
};

TimeSeries synthesize_drift_trace(const SynthSpec& spec);
TimeSeries synthesize_drift_trace(double duration_s, double sample_rate_hz, double mod_freq_hz,
                                  const DriftParams& drift, std::uint64_t seed);

enum class Window { rectangular, hann };

const char* to_string(Window w);

// One-sided amplitude spectrum, RMS-consistent: with a rectangular window
// the sum of squared magnitudes equals the time-domain mean-square power.
struct Spectrum {
  Eigen::VectorXd frequencies_hz;  // ascending from 0
  Eigen::VectorXd magnitudes;
  Window window = Window::rectangular;

  double bin_width_hz() const {
    return frequencies_hz.size() > 1 ? frequencies_hz(1) - frequencies_hz(0) : 0.0;
  }
};

// Two-sided unnormalized DFT coefficients (linear in the input).
Eigen::VectorXcd dft_coefficients(const TimeSeries& ts);

Spectrum fourier_spectrum(const TimeSeries& ts, Window window = Window::rectangular);

// Integrated squared magnitude over the band lo < f <= hi.
double band_power(const Spectrum& s, double lo_hz, double hi_hz);

struct BandComparison {
  double ratio = 0.0;        // band power of a over band power of b
  double threshold = 2.0;    // tau
  bool indistinguishable = false;  // ratio within [1/tau, tau]
};

BandComparison compare_band_power(const Spectrum& a, const Spectrum& b, double lo_hz,
                                  double hi_hz, double threshold = 2.0);

// CSV formats: TimeSeries has a `# sample_rate_hz=<r>` header and one sample
// per line; Spectrum has a `freq_hz,magnitude` header row.
void write_timeseries_csv(std::ostream& out, const TimeSeries& ts);
TimeSeries read_timeseries_csv(std::istream& in);
void write_spectrum_csv(std::ostream& out, const Spectrum& s);
Spectrum read_spectrum_csv(std::istream& in);

}  // namespace qlink
