#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "qlink/modes.hpp"
#include "qlink/rng.hpp"

using namespace qlink;
using Cx = std::complex<double>;

namespace {
constexpr double pi = std::numbers::pi;
const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

ModeState random_state(std::mt19937_64& gen, int dim) {
  Eigen::VectorXcd v(dim);
  for (int i = 0; i < dim; ++i)
    v(i) = Cx(2.0 * uniform_double(gen) - 1.0, 2.0 * uniform_double(gen) - 1.0);
  v /= v.norm() * (1.0 + uniform_double(gen));  // norm in (0, 1]
  return ModeState(v);
}
}  // namespace

TEST_CASE("mode state basics") {
  ModeState s = ModeState::basis(2, 0);
  CHECK(s.dim() == 2);
  CHECK(s.norm_tracked() == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(ModeState::basis(1, 0), std::invalid_argument);
  // norm above 1 rejected
  Eigen::VectorXcd big(2);
  big << Cx(1.5, 0), Cx(0, 0);
  CHECK_THROWS_AS(ModeState(std::move(big)), std::invalid_argument);
}

TEST_CASE("apply: identity, phase shifter, attenuator") {
  const ModeState one_zero = ModeState::basis(2, 0);

  ModeState r = apply(identity_element(2), one_zero);
  CHECK(std::abs(r.amplitude(0) - Cx(1, 0)) < kAlgebraTol);
  CHECK(std::abs(r.amplitude(1)) < kAlgebraTol);
  CHECK(r.norm_tracked() == doctest::Approx(1.0).epsilon(1e-14));

  // e^{i pi} = -1 on mode 1
  ModeState plus({Cx(inv_sqrt2, 0), Cx(inv_sqrt2, 0)});
  ModeState flipped = apply(phase_shifter(2, 1, pi), plus);
  CHECK(std::abs(flipped.amplitude(0) - Cx(inv_sqrt2, 0)) < kAlgebraTol);
  CHECK(std::abs(flipped.amplitude(1) - Cx(-inv_sqrt2, 0)) < kAlgebraTol);

  ModeState att = apply(attenuator(2, 0.5), one_zero);
  CHECK(std::abs(att.amplitude(0) - Cx(0.5, 0)) < kAlgebraTol);
  CHECK(att.norm_tracked() == doctest::Approx(0.25).epsilon(1e-14));

  // shape mismatch rejected
  CHECK_THROWS_AS(apply(identity_element(3), one_zero), std::invalid_argument);
}

TEST_CASE("coupler_50_50") {
  const TransferElement c = coupler_50_50();
  const ModeState in = ModeState::basis(2, 0);

  ModeState out = apply(c, in);
  CHECK(std::abs(out.amplitude(0) - Cx(inv_sqrt2, 0)) < kAlgebraTol);
  CHECK(std::abs(out.amplitude(1) - Cx(0, inv_sqrt2)) < kAlgebraTol);
  CHECK(out.probabilities()(0) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(out.probabilities()(1) == doctest::Approx(0.5).epsilon(1e-13));

  // Oracle: direct 2x2 product by hand. C*C*(1,0)^T = (0, i)^T.
  const Cx r(inv_sqrt2, 0), i01(0, inv_sqrt2);
  const Cx m00 = r * r + i01 * i01;
  const Cx m10 = i01 * r + r * i01;
  CHECK(std::abs(m00) < kAlgebraTol);
  CHECK(std::abs(m10 - Cx(0, 1)) < kAlgebraTol);
  ModeState twice = apply(c, apply(c, in));
  CHECK(std::abs(twice.amplitude(0) - m00) < kAlgebraTol);
  CHECK(std::abs(twice.amplitude(1) - m10) < kAlgebraTol);

  // unitarity
  CHECK(c.is_unitary(1e-12));
  Eigen::Matrix2cd gram = c.matrix().adjoint() * c.matrix();
  CHECK((gram - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("multiport_dft") {
  ModeState out2 = apply(multiport_dft(2), ModeState::basis(2, 0));
  CHECK(std::abs(out2.amplitude(0) - Cx(inv_sqrt2, 0)) < kAlgebraTol);
  CHECK(std::abs(out2.amplitude(1) - Cx(inv_sqrt2, 0)) < kAlgebraTol);

  ModeState out4 = apply(multiport_dft(4), ModeState::basis(4, 0));
  for (int k = 0; k < 4; ++k)
    CHECK(out4.probabilities()(k) == doctest::Approx(0.25).epsilon(1e-13));

  const TransferElement f3 = multiport_dft(3);
  Eigen::MatrixXcd gram = f3.matrix().adjoint() * f3.matrix();
  CHECK((gram - Eigen::MatrixXcd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(multiport_dft(1), std::invalid_argument);

  // unitary for all d in [2, 16]
  for (int d = 2; d <= 16; ++d) CHECK(multiport_dft(d).is_unitary());
}

TEST_CASE("phase_bank") {
  ModeState plus({Cx(inv_sqrt2, 0), Cx(inv_sqrt2, 0)});

  // phases (0, pi/2) -> |OAM+> coefficients
  ModeState oam = apply(phase_bank(std::vector<double>{0.0, pi / 2}), plus);
  CHECK(std::abs(oam.amplitude(0) - Cx(inv_sqrt2, 0)) < kAlgebraTol);
  CHECK(std::abs(oam.amplitude(1) - Cx(0, inv_sqrt2)) < kAlgebraTol);

  // all-zero phases -> identity
  const TransferElement id = phase_bank(std::vector<double>{0.0, 0.0});
  CHECK((id.matrix() - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  // phases (0, pi) -> |LP-> coefficients
  ModeState lpm = apply(phase_bank(std::vector<double>{0.0, pi}), plus);
  CHECK(std::abs(lpm.amplitude(0) - Cx(inv_sqrt2, 0)) < kAlgebraTol);
  CHECK(std::abs(lpm.amplitude(1) - Cx(-inv_sqrt2, 0)) < kAlgebraTol);
}

TEST_CASE("compose") {
  const TransferElement c = coupler_50_50();
  const ModeState in = ModeState::basis(2, 0);

  const TransferElement cc = compose(std::vector<TransferElement>{c, c});
  ModeState composed = apply(cc, in);
  ModeState sequential = apply(c, apply(c, in));
  CHECK((composed.amplitudes() - sequential.amplitudes()).norm() < kAlgebraTol);
  CHECK(std::abs(composed.amplitude(1) - Cx(0, 1)) < kAlgebraTol);

  // compose(identity, X) == X
  const TransferElement x = phase_shifter(2, 1, 0.7);
  const TransferElement ix = compose(std::vector<TransferElement>{identity_element(2), x});
  CHECK((ix.matrix() - x.matrix()).cwiseAbs().maxCoeff() < 1e-15);

  // shape mismatch
  CHECK_THROWS_AS(compose(std::vector<TransferElement>{identity_element(3), x}),
                  std::invalid_argument);
}

TEST_CASE("compose properties: associativity and singular-value bound") {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + static_cast<int>(gen() % 4);
    auto random_passive = [&]() {
      Eigen::MatrixXcd m(d, d);
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col)
          m(r, col) = Cx(2 * uniform_double(gen) - 1, 2 * uniform_double(gen) - 1);
      const double smax = Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0);
      m /= smax * (1.0 + uniform_double(gen));
      return TransferElement(m, "rand");
    };
    const TransferElement a = random_passive(), b = random_passive(), c = random_passive();

    const TransferElement left =
        compose(std::vector<TransferElement>{a, compose(std::vector<TransferElement>{b, c})});
    const TransferElement right =
        compose(std::vector<TransferElement>{compose(std::vector<TransferElement>{a, b}), c});
    CHECK((left.matrix() - right.matrix()).cwiseAbs().maxCoeff() < 1e-12);

    const TransferElement ab = compose(std::vector<TransferElement>{a, b});
    CHECK(ab.max_singular_value() <=
          a.max_singular_value() * b.max_singular_value() + 1e-9);
  }
}

TEST_CASE("norm conservation and loss monotonicity") {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + static_cast<int>(gen() % 6);
    const ModeState s = random_state(gen, d);

    // random unitary via QR of a random complex matrix
    Eigen::MatrixXcd m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        m(r, c) = Cx(2 * uniform_double(gen) - 1, 2 * uniform_double(gen) - 1);
    Eigen::MatrixXcd q = Eigen::HouseholderQR<Eigen::MatrixXcd>(m).householderQ();
    const TransferElement u(q, "unitary");
    CHECK(u.is_unitary());
    CHECK(apply(u, s).norm_tracked() ==
          doctest::Approx(s.norm_tracked()).epsilon(1e-12));

    // passive element never increases the norm
    Eigen::MatrixXcd lossy = q * (0.2 + 0.8 * uniform_double(gen));
    const TransferElement l(lossy, "lossy");
    CHECK(apply(l, s).norm_tracked() <= s.norm_tracked() + 1e-9);
  }
}

TEST_CASE("transfer element rejects gain") {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity() * 1.01;
  CHECK_THROWS_AS(TransferElement(m, "gain"), std::invalid_argument);
}

TEST_CASE("render_intensity nodal structure") {
  const int n = 65;      // odd: x = 0 lies on the grid
  const double ext = 2.0;

  // |LP11a>: two lobes, dark on the x = 0 line
  IntensityGrid a = render_intensity(ModeState::basis(2, 0), n, ext);
  CHECK(a.values.maxCoeff() == 1.0);
  for (int r = 0; r < n; ++r) CHECK(a.values(r, (n - 1) / 2) < 1e-12);
  CHECK(a.values(32, 48) > 0.1);  // a lobe along x

  // |LP11b>: dark on y = 0
  IntensityGrid b = render_intensity(ModeState::basis(2, 1), n, ext);
  for (int c = 0; c < n; ++c) CHECK(b.values((n - 1) / 2, c) < 1e-12);

  // |LP+>: nodal line x + y = 0 (anti-diagonal of the grid)
  IntensityGrid p =
      render_intensity(ModeState({Cx(inv_sqrt2, 0), Cx(inv_sqrt2, 0)}), n, ext);
  for (int i = 0; i < n; ++i) CHECK(p.values(n - 1 - i, i) < 1e-12);

  // |LP->: nodal line x - y = 0 (main diagonal)
  IntensityGrid m =
      render_intensity(ModeState({Cx(inv_sqrt2, 0), Cx(-inv_sqrt2, 0)}), n, ext);
  for (int i = 0; i < n; ++i) CHECK(m.values(i, i) < 1e-12);
}

TEST_CASE("render_intensity OAM ring symmetry") {
  const ModeState oam({Cx(inv_sqrt2, 0), Cx(0, inv_sqrt2)});

  // Analytic: |x + i y|^2 = x^2 + y^2, so intensity on a centered circle is
  // constant. Sample a ring directly through the field.
  const double radius = 0.7;
  double lo = 1e300, hi = 0.0;
  for (int k = 0; k < 720; ++k) {
    const double th = 2 * pi * k / 720.0;
    const double val = std::norm(lp11_field(oam, radius * std::cos(th), radius * std::sin(th)));
    lo = std::min(lo, val);
    hi = std::max(hi, val);
  }
  CHECK((hi - lo) / hi < 1e-9);

  // Grid render is invariant under a 90-degree grid rotation
  IntensityGrid g = render_intensity(oam, 65, 2.0);
  for (int r = 0; r < 65; ++r)
    for (int c = 0; c < 65; ++c)
      CHECK(g.values(r, c) ==
            doctest::Approx(g.values(c, 65 - 1 - r)).epsilon(1e-9));
}

TEST_CASE("render_intensity errors") {
  CHECK_THROWS_AS(render_intensity(ModeState::basis(2, 0), 8, 2.0), std::invalid_argument);
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(2);
  CHECK_THROWS_AS(render_intensity(ModeState(zero), 32, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(render_intensity(ModeState::basis(3, 0), 32, 2.0), std::invalid_argument);
}

TEST_CASE("intensity grid file round trip") {
  IntensityGrid g = render_intensity(ModeState::basis(2, 0), 17, 1.5);
  std::stringstream buf;
  write_intensity_grid(buf, g);

  const std::string header = buf.str().substr(0, buf.str().find('\n'));
  CHECK(header == "# resolution=17 extent=1.5");

  IntensityGrid back = read_intensity_grid(buf);
  CHECK(back.resolution == g.resolution);
  CHECK(back.extent == doctest::Approx(g.extent));
  CHECK((back.values - g.values).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("overlap") {
  ModeState plus({Cx(inv_sqrt2, 0), Cx(inv_sqrt2, 0)});
  ModeState minus({Cx(inv_sqrt2, 0), Cx(-inv_sqrt2, 0)});
  CHECK(std::abs(overlap(plus, minus)) < kAlgebraTol);
  CHECK(std::norm(overlap(plus, plus)) == doctest::Approx(1.0).epsilon(1e-13));
}
