#include "qlink/drift.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/rng.hpp"

namespace qlink {

namespace {
constexpr double kPi = std::numbers::pi;
}

const char* to_string(Window w) {
  return w == Window::rectangular ? "rectangular" : "hann";
}

TimeSeries synthesize_drift_trace(const SynthSpec& spec) {
  if (spec.duration_s <= 0.0) throw std::invalid_argument("synth: duration must be positive");
  if (spec.sample_rate_hz <= 0.0) throw std::invalid_argument("synth: sample rate must be positive");
  if (spec.sample_rate_hz <= 2.0 * spec.mod_freq_hz)
    throw std::invalid_argument("synth: sample rate violates Nyquist for the modulation frequency");
  if (spec.visibility < 0.0 || spec.visibility > 1.0)
    throw std::invalid_argument("synth: visibility must lie in [0,1]");
  if (spec.drift.model == DriftModel::random_walk && spec.drift.sigma_rad_per_sqrt_s < 0.0)
    throw std::invalid_argument("synth: drift sigma must be >= 0");

  const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate_hz));
  if (n < 1) throw std::invalid_argument("synth: trace has no samples");

  TimeSeries ts;
  ts.sample_rate_hz = spec.sample_rate_hz;
  ts.samples.resize(n);

  const double dt = 1.0 / spec.sample_rate_hz;
  std::mt19937_64 gen(derive_seed(spec.seed, 0x64726966ull));

  // Mean-reverting walk, exact one-step update; infinite relaxation time
  // degenerates to the Wiener increment sigma sqrt(dt).
  const bool walk = spec.drift.model == DriftModel::random_walk;
  const double tau = spec.drift.relaxation_time_s;
  double decay = 1.0, step_sd = spec.drift.sigma_rad_per_sqrt_s * std::sqrt(dt);
  if (walk && std::isfinite(tau)) {
    if (tau <= 0.0) throw std::invalid_argument("synth: relaxation time must be positive");
    decay = std::exp(-dt / tau);
    step_sd = spec.drift.sigma_rad_per_sqrt_s * std::sqrt(tau * (1.0 - decay * decay) / 2.0);
  }

  double phi = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double arg = spec.mod_depth_rad * std::sin(2.0 * kPi * spec.mod_freq_hz * t) +
                       spec.bias_rad + phi;
    ts.samples(i) = 0.5 * (1.0 + spec.visibility * std::cos(arg));
    if (walk) phi = decay * phi + step_sd * standard_normal(gen);
  }
  return ts;
}

TimeSeries synthesize_drift_trace(double duration_s, double sample_rate_hz, double mod_freq_hz,
                                  const DriftParams& drift, std::uint64_t seed) {
  SynthSpec spec;
  spec.duration_s = duration_s;
  spec.sample_rate_hz = sample_rate_hz;
  spec.mod_freq_hz = mod_freq_hz;
  spec.drift = drift;
  spec.seed = seed;
  return synthesize_drift_trace(spec);
}

Eigen::VectorXcd dft_coefficients(const TimeSeries& ts) {
  if (ts.samples.size() < 1) throw std::invalid_argument("dft: empty series");
  std::vector<double> in(ts.samples.data(), ts.samples.data() + ts.samples.size());
  std::vector<std::complex<double>> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  return Eigen::Map<Eigen::VectorXcd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Spectrum fourier_spectrum(const TimeSeries& ts, Window window) {
  const Eigen::Index n = ts.samples.size();
  if (n < 16) throw std::invalid_argument("fourier_spectrum: need at least 16 samples");
  if (ts.sample_rate_hz <= 0.0) throw std::invalid_argument("fourier_spectrum: bad sample rate");

  TimeSeries windowed = ts;
  double norm = static_cast<double>(n);
  if (window == Window::hann) {
    double wsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                             static_cast<double>(n - 1)));
      windowed.samples(i) *= w;
      wsum += w;
    }
    norm = wsum;  // coherent gain so tone amplitudes stay calibrated
  }

  const Eigen::VectorXcd coeff = dft_coefficients(windowed);
  const Eigen::Index half = n / 2;

  Spectrum s;
  s.window = window;
  s.frequencies_hz.resize(half + 1);
  s.magnitudes.resize(half + 1);
  const double df = ts.sample_rate_hz / static_cast<double>(n);
  for (Eigen::Index k = 0; k <= half; ++k) {
    s.frequencies_hz(k) = df * static_cast<double>(k);
    // sqrt(2) folds the conjugate half in, except at DC and (even n) Nyquist
    const bool unpaired = k == 0 || (n % 2 == 0 && k == half);
    s.magnitudes(k) = (unpaired ? 1.0 : std::numbers::sqrt2) * std::abs(coeff(k)) / norm;
  }
  return s;
}

double band_power(const Spectrum& s, double lo_hz, double hi_hz) {
  if (!(hi_hz > lo_hz)) throw std::invalid_argument("band_power: empty band");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.frequencies_hz.size(); ++k) {
    const double f = s.frequencies_hz(k);
    if (f > lo_hz && f <= hi_hz) acc += s.magnitudes(k) * s.magnitudes(k);
  }
  return acc;
}

BandComparison compare_band_power(const Spectrum& a, const Spectrum& b, double lo_hz,
                                  double hi_hz, double threshold) {
  if (threshold < 1.0) throw std::invalid_argument("compare_band_power: threshold must be >= 1");
  if (a.frequencies_hz.size() != b.frequencies_hz.size() ||
      (a.frequencies_hz - b.frequencies_hz).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("compare_band_power: spectra live on different frequency grids");

  BandComparison cmp;
  cmp.threshold = threshold;
  const double pa = band_power(a, lo_hz, hi_hz);
  const double pb = band_power(b, lo_hz, hi_hz);
  cmp.ratio = pb > 0.0 ? pa / pb : std::numeric_limits<double>::infinity();
  cmp.indistinguishable = cmp.ratio >= 1.0 / threshold && cmp.ratio <= threshold;
  return cmp;
}

void write_timeseries_csv(std::ostream& out, const TimeSeries& ts) {
  out << "# sample_rate_hz=" << ts.sample_rate_hz << "\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < ts.samples.size(); ++i) out << ts.samples(i) << "\n";
}

TimeSeries read_timeseries_csv(std::istream& in) {
  std::string header;
  std::getline(in, header);
  TimeSeries ts;
  if (std::sscanf(header.c_str(), "# sample_rate_hz=%lf", &ts.sample_rate_hz) != 1)
    throw std::runtime_error("time series: malformed header: " + header);
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    vals.push_back(std::stod(line));
  }
  ts.samples = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return ts;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& s) {
  out << "# window=" << to_string(s.window) << "\n";
  out << "freq_hz,magnitude\n";
  out.precision(17);
  for (Eigen::Index k = 0; k < s.frequencies_hz.size(); ++k)
    out << s.frequencies_hz(k) << ',' << s.magnitudes(k) << "\n";
}

Spectrum read_spectrum_csv(std::istream& in) {
  Spectrum s;
  std::string line;
  std::vector<double> freqs, mags;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# window=", 0) == 0) {
      s.window = line == "# window=hann" ? Window::hann : Window::rectangular;
      continue;
    }
    if (line == "freq_hz,magnitude") {
      saw_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("spectrum: malformed row: " + line);
    freqs.push_back(std::stod(line.substr(0, comma)));
    mags.push_back(std::stod(line.substr(comma + 1)));
  }
  if (!saw_header) throw std::runtime_error("spectrum: missing freq_hz,magnitude header");
  s.frequencies_hz = Eigen::Map<Eigen::VectorXd>(freqs.data(), static_cast<Eigen::Index>(freqs.size()));
  s.magnitudes = Eigen::Map<Eigen::VectorXd>(mags.data(), static_cast<Eigen::Index>(mags.size()));
  return s;
}

}  // namespace qlink
