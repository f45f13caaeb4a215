#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlink {

inline constexpr double kAlgebraTol = 1e-12;   // algebraic identities
inline constexpr double kSpectralTol = 1e-9;   // singular-value bounds

// ---------------------------------------------------------------------------
// ModeState: complex amplitude vector over d >= 2 path/spatial/temporal modes.
//
// The squared norm doubles as the power bookkeeping: a state that went
// through lossy elements has norm_tracked() < 1. Loss lives in the
// amplitudes themselves, so lossy and unitary elements compose uniformly.
// ---------------------------------------------------------------------------
template <typename Scalar>
class ModeStateT {
 public:
  using Complex = std::complex<Scalar>;
  using Vector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

  explicit ModeStateT(Vector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() < 2)
      throw std::invalid_argument("ModeState: dimension must be >= 2");
    if (norm_tracked() > Scalar(1) + Scalar(kAlgebraTol))
      throw std::invalid_argument("ModeState: squared norm exceeds 1");
  }

  ModeStateT(std::initializer_list<Complex> amplitudes)
      : ModeStateT(Eigen::Map<const Vector>(std::data(amplitudes),
                                            static_cast<Eigen::Index>(amplitudes.size()))) {}

  // |mode> basis vector.
  static ModeStateT basis(Eigen::Index dim, Eigen::Index mode) {
    if (dim < 2) throw std::invalid_argument("ModeState: dimension must be >= 2");
    if (mode < 0 || mode >= dim) throw std::invalid_argument("ModeState: mode index out of range");
    Vector v = Vector::Zero(dim);
    v(mode) = Complex(1, 0);
    return ModeStateT(std::move(v));
  }

  Eigen::Index dim() const { return amps_.size(); }
  const Vector& amplitudes() const { return amps_; }
  Complex amplitude(Eigen::Index k) const { return amps_(k); }

  // Squared norm; < 1 encodes accumulated loss.
  Scalar norm_tracked() const { return amps_.squaredNorm(); }

  // Per-mode power fractions |a_k|^2.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probabilities() const {
    return amps_.cwiseAbs2();
  }

 private:
  Vector amps_;
};

using ModeState = ModeStateT<double>;

// <a|b> with the first argument conjugated.
template <typename Scalar>
std::complex<Scalar> overlap(const ModeStateT<Scalar>& a, const ModeStateT<Scalar>& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("overlap: dimension mismatch");
  return a.amplitudes().dot(b.amplitudes());
}

// ---------------------------------------------------------------------------
// TransferElement: rows x cols complex amplitude-transfer matrix of a
// passive linear-optical component. Construction rejects gain: the largest
// singular value must not exceed 1 (+1e-9). A lossless element is unitary.
// ---------------------------------------------------------------------------
template <typename Scalar>
class TransferElementT {
 public:
  using Complex = std::complex<Scalar>;
  using Matrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

  TransferElementT(Matrix matrix, std::string label)
      : mat_(std::move(matrix)), label_(std::move(label)) {
    if (mat_.rows() < 1 || mat_.cols() < 1)
      throw std::invalid_argument(label_ + ": empty transfer matrix");
    singular_values_ = Eigen::JacobiSVD<Matrix>(mat_).singularValues();
    if (singular_values_(0) > Scalar(1) + Scalar(kSpectralTol))
      throw std::invalid_argument(label_ + ": passive element cannot have gain (max singular value " +
                                  std::to_string(static_cast<double>(singular_values_(0))) + ")");
  }

  Eigen::Index rows() const { return mat_.rows(); }
  Eigen::Index cols() const { return mat_.cols(); }
  const Matrix& matrix() const { return mat_; }
  const std::string& label() const { return label_; }

  Scalar max_singular_value() const { return singular_values_(0); }

  // Lossless = square with all singular values equal to 1.
  bool is_unitary(Scalar tol = Scalar(kSpectralTol)) const {
    if (mat_.rows() != mat_.cols()) return false;
    return (singular_values_.array() - Scalar(1)).abs().maxCoeff() <= tol;
  }

 private:
  Matrix mat_;
  std::string label_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> singular_values_;
};

using TransferElement = TransferElementT<double>;

// ---------------------------------------------------------------------------
// Element factories and composition
// ---------------------------------------------------------------------------

template <typename Scalar>
ModeStateT<Scalar> apply(const TransferElementT<Scalar>& element, const ModeStateT<Scalar>& state) {
  if (element.cols() != state.dim())
    throw std::invalid_argument(element.label() + ": shape mismatch, element expects dim " +
                                std::to_string(element.cols()) + " but state has dim " +
                                std::to_string(state.dim()));
  return ModeStateT<Scalar>(element.matrix() * state.amplitudes());
}

template <typename Scalar = double>
TransferElementT<Scalar> identity_element(Eigen::Index dim) {
  using M = typename TransferElementT<Scalar>::Matrix;
  return TransferElementT<Scalar>(M::Identity(dim, dim), "identity");
}

// Symmetric 50:50 fiber coupler, (1/sqrt2) [[1, i], [i, 1]].
// The i sits on the cross port; a two-coupler Mach-Zehnder then sends
// cos^2(dphi/2) of the power to the cross output.
template <typename Scalar = double>
TransferElementT<Scalar> coupler_50_50() {
  using C = std::complex<Scalar>;
  using M = typename TransferElementT<Scalar>::Matrix;
  const Scalar r = Scalar(1) / std::sqrt(Scalar(2));
  M m(2, 2);
  m << C(r, 0), C(0, r), C(0, r), C(r, 0);
  return TransferElementT<Scalar>(std::move(m), "coupler_50_50");
}

// d x d multiport beamsplitter with entries (1/sqrt d) exp(2*pi*i*j*k/d).
template <typename Scalar = double>
TransferElementT<Scalar> multiport_dft(Eigen::Index d) {
  if (d < 2) throw std::invalid_argument("multiport_dft: d must be >= 2");
  using C = std::complex<Scalar>;
  using M = typename TransferElementT<Scalar>::Matrix;
  const Scalar r = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  M m(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index k = 0; k < d; ++k) {
      const Scalar phase = Scalar(2) * std::numbers::pi_v<Scalar> *
                           static_cast<Scalar>(j * k) / static_cast<Scalar>(d);
      m(j, k) = r * C(std::cos(phase), std::sin(phase));
    }
  return TransferElementT<Scalar>(std::move(m), "multiport_dft");
}

// Diagonal unitary exp(i*phi_k) per mode.
template <typename Scalar = double>
TransferElementT<Scalar> phase_bank(std::span<const Scalar> phases) {
  using C = std::complex<Scalar>;
  using M = typename TransferElementT<Scalar>::Matrix;
  const auto d = static_cast<Eigen::Index>(phases.size());
  if (d < 1) throw std::invalid_argument("phase_bank: empty phase list");
  M m = M::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    m(k, k) = C(std::cos(phases[k]), std::sin(phases[k]));
  return TransferElementT<Scalar>(std::move(m), "phase_bank");
}

template <typename Scalar = double>
TransferElementT<Scalar> phase_bank(const std::vector<Scalar>& phases) {
  return phase_bank<Scalar>(std::span<const Scalar>(phases));
}

// Single phase modulator on one mode.
template <typename Scalar = double>
TransferElementT<Scalar> phase_shifter(Eigen::Index dim, Eigen::Index mode, Scalar phi) {
  if (mode < 0 || mode >= dim) throw std::invalid_argument("phase_shifter: mode index out of range");
  std::vector<Scalar> phases(static_cast<std::size_t>(dim), Scalar(0));
  phases[static_cast<std::size_t>(mode)] = phi;
  return phase_bank<Scalar>(phases);
}

// Uniform amplitude attenuation t on every mode (power t^2).
template <typename Scalar = double>
TransferElementT<Scalar> attenuator(Eigen::Index dim, Scalar amplitude) {
  if (amplitude < Scalar(0)) throw std::invalid_argument("attenuator: negative amplitude");
  using M = typename TransferElementT<Scalar>::Matrix;
  return TransferElementT<Scalar>(M::Identity(dim, dim) * amplitude, "attenuator");
}

template <typename Scalar>
TransferElementT<Scalar> adjoint(const TransferElementT<Scalar>& e) {
  return TransferElementT<Scalar>(e.matrix().adjoint(), e.label() + "_adjoint");
}

// Ordered product of a chain; elements are listed in application order,
// so compose({A, B}) acts as B*A on a state.
template <typename Scalar>
TransferElementT<Scalar> compose(std::span<const TransferElementT<Scalar>> elements) {
  if (elements.empty()) throw std::invalid_argument("compose: empty chain");
  typename TransferElementT<Scalar>::Matrix product = elements.front().matrix();
  std::string label = elements.front().label();
  for (std::size_t i = 1; i < elements.size(); ++i) {
    if (elements[i].cols() != static_cast<Eigen::Index>(product.rows()))
      throw std::invalid_argument("compose: shape mismatch between '" + elements[i - 1].label() +
                                  "' and '" + elements[i].label() + "'");
    product = (elements[i].matrix() * product).eval();
    label += ">" + elements[i].label();
  }
  return TransferElementT<Scalar>(std::move(product), label);
}

template <typename Scalar>
TransferElementT<Scalar> compose(const std::vector<TransferElementT<Scalar>>& elements) {
  return compose(std::span<const TransferElementT<Scalar>>(elements));
}

// ---------------------------------------------------------------------------
// Transverse intensity rendering for dim-2 states over the (LP11a, LP11b)
// basis. The mode fields are first-order Hermite-Gaussian approximants with
// unit waist:
//   F_a(x,y) ~ x exp(-(x^2+y^2))      F_b(x,y) ~ y exp(-(x^2+y^2))
// Equal-weight +-i superpositions give the ring-shaped OAM profiles.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct IntensityGridT {
  int resolution = 0;                                           // grid is N x N
  Scalar extent = Scalar(0);                                    // half-width, units of waist
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values; // row = y index, col = x index

  // Coordinate of grid line i in either axis, ascending from -extent.
  Scalar coord(Eigen::Index i) const {
    return -extent + static_cast<Scalar>(i) * (Scalar(2) * extent / static_cast<Scalar>(resolution - 1));
  }
};

using IntensityGrid = IntensityGridT<double>;

// Complex transverse field of a (LP11a, LP11b) superposition at one point.
template <typename Scalar>
std::complex<Scalar> lp11_field(const ModeStateT<Scalar>& state, Scalar x, Scalar y) {
  if (state.dim() != 2) throw std::invalid_argument("lp11_field: state must have dim 2");
  const Scalar envelope = std::exp(-(x * x + y * y));
  return state.amplitude(0) * (x * envelope) + state.amplitude(1) * (y * envelope);
}

template <typename Scalar>
IntensityGridT<Scalar> render_intensity(const ModeStateT<Scalar>& state, int resolution, Scalar extent) {
  if (state.dim() != 2) throw std::invalid_argument("render_intensity: state must have dim 2");
  if (resolution < 16) throw std::invalid_argument("render_intensity: resolution must be >= 16");
  if (extent <= Scalar(0)) throw std::invalid_argument("render_intensity: extent must be positive");
  if (state.norm_tracked() <= Scalar(0))
    throw std::invalid_argument("render_intensity: zero-norm state has nothing to render");

  IntensityGridT<Scalar> grid;
  grid.resolution = resolution;
  grid.extent = extent;
  grid.values.resize(resolution, resolution);
  for (Eigen::Index r = 0; r < resolution; ++r) {
    const Scalar y = grid.coord(r);
    for (Eigen::Index c = 0; c < resolution; ++c) {
      const Scalar x = grid.coord(c);
      grid.values(r, c) = std::norm(lp11_field(state, x, y));
    }
  }
  const Scalar peak = grid.values.maxCoeff();
  if (peak > Scalar(0)) grid.values /= peak;  // max-normalized, peak exactly 1
  return grid;
}

// Plain-text matrix file: header line `# resolution=<N> extent=<E>`, then one
// row per line, space-separated.
inline void write_intensity_grid(std::ostream& out, const IntensityGrid& grid) {
  out << "# resolution=" << grid.resolution << " extent=" << grid.extent << "\n";
  out.precision(17);
  for (Eigen::Index r = 0; r < grid.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.values.cols(); ++c) {
      if (c) out << ' ';
      out << grid.values(r, c);
    }
    out << '\n';
  }
}

inline IntensityGrid read_intensity_grid(std::istream& in) {
  std::string header;
  std::getline(in, header);
  IntensityGrid grid;
  if (std::sscanf(header.c_str(), "# resolution=%d extent=%lf", &grid.resolution, &grid.extent) != 2)
    throw std::runtime_error("intensity grid: malformed header: " + header);
  if (grid.resolution < 1) throw std::runtime_error("intensity grid: bad resolution");
  grid.values.resize(grid.resolution, grid.resolution);
  for (Eigen::Index r = 0; r < grid.resolution; ++r) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("intensity grid: truncated file");
    std::istringstream row(line);
    for (Eigen::Index c = 0; c < grid.resolution; ++c)
      if (!(row >> grid.values(r, c))) throw std::runtime_error("intensity grid: short row");
  }
  return grid;
}

}  // namespace qlink
