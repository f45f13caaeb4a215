#include "qlink/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "qlink/rng.hpp"

namespace qlink {

namespace {

constexpr double kPi = std::numbers::pi;

std::complex<double> unit_phase(double phi) {
  return {std::cos(phi), std::sin(phi)};
}

}  // namespace

double alice_phase(Bb84Label label) {
  switch (label) {
    case Bb84Label::lp_plus: return 0.0;
    case Bb84Label::lp_minus: return kPi;
    case Bb84Label::oam_plus: return kPi / 2.0;
    case Bb84Label::oam_minus: return 3.0 * kPi / 2.0;
  }
  throw std::invalid_argument("alice_phase: bad label");
}

Basis basis_of(Bb84Label label) {
  return (label == Bb84Label::lp_plus || label == Bb84Label::lp_minus) ? Basis::mub1 : Basis::mub2;
}

double basis_phase(Basis basis) { return basis == Basis::mub1 ? 0.0 : kPi / 2.0; }

const char* to_string(Bb84Label label) {
  switch (label) {
    case Bb84Label::lp_plus: return "LP+";
    case Bb84Label::lp_minus: return "LP-";
    case Bb84Label::oam_plus: return "OAM+";
    case Bb84Label::oam_minus: return "OAM-";
  }
  return "?";
}

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::long_mzi: return "long_mzi";
    case Scheme::time_bin: return "time_bin";
    case Scheme::fmf_lantern: return "fmf_lantern";
  }
  return "?";
}

ModeState prepare_bb84(Bb84Label label) {
  Eigen::Vector2cd v;
  v << std::complex<double>(1.0, 0.0), unit_phase(alice_phase(label));
  return ModeState(v / std::sqrt(2.0));
}

ModeState prepare_qudit(int d, const std::vector<double>& phases) {
  if (d < 2) throw std::invalid_argument("prepare_qudit: d must be >= 2");
  if (phases.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("prepare_qudit: need one phase per path");
  Eigen::VectorXcd v(d);
  const double r = 1.0 / std::sqrt(static_cast<double>(d));
  for (int n = 0; n < d; ++n) v(n) = r * unit_phase(phases[static_cast<std::size_t>(n)]);
  return ModeState(std::move(v));
}

void validate(const ArchitectureConfig& cfg) {
  if (cfg.dim < 2) throw std::invalid_argument("config: dim must be >= 2");
  if (cfg.visibility < 0.0 || cfg.visibility > 1.0)
    throw std::invalid_argument("config: visibility must lie in [0,1]");
  validate(cfg.source);
  validate(cfg.fiber);
  if (cfg.detectors.size() != static_cast<std::size_t>(cfg.dim))
    throw std::invalid_argument("config: need one detector per output port");
  for (const auto& det : cfg.detectors) validate(det);
  if (cfg.scheme == Scheme::fmf_lantern) {
    if (!cfg.lanterns) throw std::invalid_argument("config: fmf_lantern scheme needs a lantern pair");
    validate(cfg.lanterns->first);
    validate(cfg.lanterns->second);
    if (cfg.lanterns->first.dim != cfg.dim || cfg.lanterns->second.dim != cfg.dim)
      throw std::invalid_argument("config: lantern dimension mismatch");
  } else if (cfg.lanterns) {
    throw std::invalid_argument("config: only fmf_lantern uses lanterns");
  }
}

std::vector<double> bob_phase_bank(Scheme scheme, int dim, double phi_b) {
  if (dim != 2) throw std::invalid_argument("bob_phase_bank: use bob_projection_bank for d > 2");
  switch (scheme) {
    case Scheme::long_mzi:
    case Scheme::fmf_lantern:
      // pi/2 compensates the two cross-port i's of the symmetric coupler.
      return {0.0, kPi / 2.0 - phi_b};
    case Scheme::time_bin:
      // Both modulators sit in long arms; no offset needed.
      return {0.0, phi_b};
  }
  throw std::invalid_argument("bob_phase_bank: bad scheme");
}

std::vector<double> bob_projection_bank(Scheme scheme, int dim, const std::vector<double>& target) {
  if (target.size() != static_cast<std::size_t>(dim))
    throw std::invalid_argument("bob_projection_bank: need one phase per path");
  if (dim == 2) return bob_phase_bank(scheme, 2, target[1] - target[0]);
  std::vector<double> bank(static_cast<std::size_t>(dim));
  if (scheme == Scheme::time_bin) {
    // Arm m is delayed by m bins and meets Alice's bin d-1-m in the
    // central bin, so the projection phases enter reversed.
    for (int m = 0; m < dim; ++m) bank[static_cast<std::size_t>(m)] = -target[static_cast<std::size_t>(dim - 1 - m)];
  } else {
    for (int n = 0; n < dim; ++n) bank[static_cast<std::size_t>(n)] = -target[static_cast<std::size_t>(n)];
  }
  return bank;
}

double DetectionResult::sifted_mu(int detector) const {
  double mu = 0.0;
  for (int b = 0; b < bins(); ++b)
    if (sift_mask[static_cast<std::size_t>(b)]) mu += mean_photons(detector, b);
  return mu;
}

// ---------------------------------------------------------------------------
// Chain evaluation
// ---------------------------------------------------------------------------

namespace {

// Lantern prepared for fast per-gate evaluation: entry magnitudes plus the
// list of off-diagonal slots whose phase is redrawn each trial.
struct LanternEval {
  Eigen::MatrixXd mag;
  bool random = false;
  double fixed_phase = 0.0;
  std::vector<std::pair<int, int>> slots;  // nonzero off-diagonals (random mode)
};

LanternEval make_lantern_eval(const LanternModel& m) {
  validate(m);
  LanternEval le;
  le.random = m.phase_mode == CrosstalkPhaseMode::random_per_trial;
  le.fixed_phase = m.fixed_phase_rad;
  const double t = db_to_power(m.insertion_loss_db);
  le.mag.resize(m.dim, m.dim);
  for (int r = 0; r < m.dim; ++r) {
    double eps = m.extinction_db[static_cast<std::size_t>(r)];
    eps = (std::isinf(eps) && eps < 0) ? 0.0 : std::pow(10.0, eps / 10.0);
    for (int c = 0; c < m.dim; ++c) {
      le.mag(r, c) = (r == c) ? std::sqrt(t * (1.0 - eps)) : std::sqrt(t * eps);
      if (r != c && le.random && le.mag(r, c) > 0.0)
        le.slots.emplace_back(r, c);
    }
  }
  return le;
}

// One concrete complex matrix; random slots drawn from `gen` (must be
// non-null when slots exist), fixed slots use the configured phase.
Eigen::MatrixXcd lantern_matrix(const LanternEval& le, std::mt19937_64* gen) {
  Eigen::MatrixXcd m = le.mag.cast<std::complex<double>>();
  const int d = static_cast<int>(le.mag.rows());
  if (le.random) {
    for (const auto& [r, c] : le.slots) {
      const double theta = 2.0 * kPi * uniform_double(*gen);
      m(r, c) *= unit_phase(theta);
    }
  } else {
    const std::complex<double> f = unit_phase(le.fixed_phase);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        if (r != c) m(r, c) *= f;
  }
  return m;
}

// Decomposition L = T_0 + sum_s e^{i theta_s} T_s used for the exact
// average over independent uniform crosstalk phases: every cross term has
// zero mean, so E|amp|^2 = sum over terms of |amp_term|^2.
std::vector<Eigen::MatrixXcd> lantern_terms(const LanternEval& le) {
  std::vector<Eigen::MatrixXcd> terms;
  if (!le.random) {
    terms.push_back(lantern_matrix(le, nullptr));
    return terms;
  }
  Eigen::MatrixXcd diag = Eigen::MatrixXcd::Zero(le.mag.rows(), le.mag.cols());
  diag.diagonal() = le.mag.diagonal().cast<std::complex<double>>();
  terms.push_back(std::move(diag));
  for (const auto& [r, c] : le.slots) {
    Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(le.mag.rows(), le.mag.cols());
    t(r, c) = le.mag(r, c);
    terms.push_back(std::move(t));
  }
  return terms;
}

struct Context {
  Scheme scheme = Scheme::long_mzi;
  int dim = 2;
  Eigen::VectorXcd prepared;
  std::complex<double> fiber_scalar{1.0, 0.0};
  // Single-bin schemes: Bob's bank followed by the output mixer.
  Eigen::MatrixXcd post;
  std::optional<LanternEval> lantern_a, lantern_b;
  // time_bin: first splitter column, per-arm phases, second mixer.
  Eigen::VectorXcd first_col;
  Eigen::MatrixXcd second_mixer;
  std::vector<double> arm_phases;

  double visibility = 1.0;
  double mu_source = 0.0;
  int n_bins = 1;

  bool has_random_slots() const {
    return (lantern_a && lantern_a->random && !lantern_a->slots.empty()) ||
           (lantern_b && lantern_b->random && !lantern_b->slots.empty());
  }
};

// Bob's recombining element: the symmetric coupler for qubits, the inverse
// multiport for qudits (port k then projects onto the DFT-conjugate state k).
Eigen::MatrixXcd output_mixer(int dim) {
  if (dim == 2) return coupler_50_50().matrix();
  return multiport_dft(dim).matrix().adjoint();
}

Context build_context(const ArchitectureConfig& cfg, const ModeState& prepared,
                      const std::vector<double>& bob_phases) {
  validate(cfg);
  if (prepared.dim() != cfg.dim)
    throw std::invalid_argument("detection: prepared state dimension mismatch");
  if (bob_phases.size() != static_cast<std::size_t>(cfg.dim))
    throw std::invalid_argument("detection: need one Bob phase per path/arm");

  Context ctx;
  ctx.scheme = cfg.scheme;
  ctx.dim = cfg.dim;
  ctx.prepared = prepared.amplitudes();
  ctx.visibility = cfg.visibility;
  ctx.mu_source = cfg.source.mean_photon_number;
  ctx.fiber_scalar =
      db_to_amplitude(cfg.fiber.total_loss_db()) *
      unit_phase(cfg.fiber.common_phase_drift ? cfg.fiber.common_phase_drift(0.0) : 0.0);

  if (cfg.scheme == Scheme::time_bin) {
    ctx.n_bins = 2 * cfg.dim - 1;
    if (cfg.dim == 2) {
      const Eigen::MatrixXcd c = coupler_50_50().matrix();
      ctx.first_col = c.col(0);
      ctx.second_mixer = c;
    } else {
      const Eigen::MatrixXcd dft = multiport_dft(cfg.dim).matrix();
      ctx.first_col = dft.col(0);
      ctx.second_mixer = dft.adjoint();
    }
    ctx.arm_phases = bob_phases;
    return ctx;
  }

  ctx.n_bins = 1;
  Eigen::VectorXcd bank(cfg.dim);
  for (int k = 0; k < cfg.dim; ++k) bank(k) = unit_phase(bob_phases[static_cast<std::size_t>(k)]);
  ctx.post = output_mixer(cfg.dim) * bank.asDiagonal();

  if (cfg.scheme == Scheme::fmf_lantern) {
    ctx.lantern_a = make_lantern_eval(cfg.lanterns->first);
    ctx.lantern_b = make_lantern_eval(cfg.lanterns->second);
  }
  return ctx;
}

// Raw per-port, per-bin powers for one concrete draw of crosstalk phases.
Eigen::MatrixXd eval_powers(const Context& ctx, std::mt19937_64* gen) {
  if (ctx.scheme == Scheme::time_bin) {
    const int d = ctx.dim;
    Eigen::MatrixXcd amp = Eigen::MatrixXcd::Zero(d, ctx.n_bins);
    for (int n = 0; n < d; ++n) {
      const std::complex<double> in = ctx.prepared(n) * ctx.fiber_scalar;
      for (int m = 0; m < d; ++m) {
        const std::complex<double> arm =
            in * ctx.first_col(m) * unit_phase(ctx.arm_phases[static_cast<std::size_t>(m)]);
        const int bin = n + m;
        for (int p = 0; p < d; ++p) amp(p, bin) += ctx.second_mixer(p, m) * arm;
      }
    }
    return amp.cwiseAbs2();
  }

  Eigen::VectorXcd v = ctx.prepared;
  if (ctx.lantern_a) v = lantern_matrix(*ctx.lantern_a, gen) * v;
  v *= ctx.fiber_scalar;
  if (ctx.lantern_b) v = lantern_matrix(*ctx.lantern_b, gen) * v;
  v = ctx.post * v;
  return v.cwiseAbs2();
}

std::vector<Eigen::MatrixXcd> terms_or_identity(const std::optional<LanternEval>& le, int dim) {
  if (!le) return {Eigen::MatrixXcd::Identity(dim, dim)};
  return lantern_terms(*le);
}

// Exact expectation of eval_powers over the random crosstalk phases.
Eigen::MatrixXd expected_powers(const Context& ctx) {
  if (ctx.scheme == Scheme::time_bin || !ctx.has_random_slots())
    return eval_powers(ctx, nullptr);

  const auto terms_a = terms_or_identity(ctx.lantern_a, ctx.dim);
  const auto terms_b = terms_or_identity(ctx.lantern_b, ctx.dim);

  Eigen::MatrixXd powers = Eigen::MatrixXd::Zero(ctx.dim, 1);
  for (const auto& tb : terms_b) {
    for (const auto& ta : terms_a) {
      Eigen::VectorXcd v = ta * ctx.prepared;
      v *= ctx.fiber_scalar;
      v = tb * v;
      v = ctx.post * v;
      powers += v.cwiseAbs2();
    }
  }
  return powers;
}

// amp(theta) = sum over terms of vec * e^{i theta_a} * e^{i theta_b}; the
// decomposition makes the per-gate Monte Carlo loop allocation-free.
struct GateTerm {
  int a_slot = -1;  // -1 = deterministic part
  int b_slot = -1;
  Eigen::VectorXcd vec;
};

std::vector<GateTerm> build_gate_terms(const Context& ctx) {
  const auto terms_a = terms_or_identity(ctx.lantern_a, ctx.dim);
  const auto terms_b = terms_or_identity(ctx.lantern_b, ctx.dim);
  const bool a_random = ctx.lantern_a && ctx.lantern_a->random;
  const bool b_random = ctx.lantern_b && ctx.lantern_b->random;

  std::vector<GateTerm> terms;
  for (std::size_t ib = 0; ib < terms_b.size(); ++ib) {
    for (std::size_t ia = 0; ia < terms_a.size(); ++ia) {
      GateTerm t;
      t.a_slot = a_random && ia > 0 ? static_cast<int>(ia - 1) : -1;
      t.b_slot = b_random && ib > 0 ? static_cast<int>(ib - 1) : -1;
      Eigen::VectorXcd v = terms_a[ia] * ctx.prepared;
      v *= ctx.fiber_scalar;
      v = terms_b[ib] * v;
      t.vec = ctx.post * v;
      if (t.vec.squaredNorm() > 0.0) terms.push_back(std::move(t));
    }
  }
  return terms;
}

// Visibility: interference contrast is reduced by mixing each arrival bin
// with a flat background, preserving the bin totals.
void mix_visibility(Eigen::MatrixXd& powers, double visibility) {
  if (visibility >= 1.0) return;
  const auto n_det = static_cast<double>(powers.rows());
  for (Eigen::Index b = 0; b < powers.cols(); ++b) {
    const double flat = powers.col(b).sum() / n_det;
    powers.col(b) = visibility * powers.col(b) +
                    (1.0 - visibility) * Eigen::VectorXd::Constant(powers.rows(), flat);
  }
}

// Ports -> detectors. Detector 0 is the matched projector: the cross port
// for the 2x2 coupler, port 0 for the inverse multiport.
Eigen::MatrixXd to_detector_order(const Context& ctx, Eigen::MatrixXd powers) {
  if (ctx.dim == 2) powers.row(0).swap(powers.row(1));
  return powers;
}

DetectionResult finish(const Context& ctx, Eigen::MatrixXd powers) {
  mix_visibility(powers, ctx.visibility);
  DetectionResult out;
  out.mean_photons = ctx.mu_source * to_detector_order(ctx, std::move(powers));
  out.sift_mask.assign(static_cast<std::size_t>(ctx.n_bins), 1);
  if (ctx.scheme == Scheme::time_bin) {
    std::fill(out.sift_mask.begin(), out.sift_mask.end(), 0);
    out.sift_mask[static_cast<std::size_t>(ctx.dim - 1)] = 1;  // central bin only
  }
  return out;
}

}  // namespace

DetectionResult detection_probabilities(const ArchitectureConfig& cfg, const ModeState& prepared,
                                        const std::vector<double>& bob_phases,
                                        std::optional<std::uint64_t> trial_seed) {
  Context ctx = build_context(cfg, prepared, bob_phases);
  std::optional<std::mt19937_64> gen;
  if (ctx.has_random_slots()) {
    if (!trial_seed)
      throw std::invalid_argument("detection: random_per_trial crosstalk needs a trial seed");
    gen.emplace(derive_seed(*trial_seed, 0x7472u));
  }
  return finish(ctx, eval_powers(ctx, gen ? &*gen : nullptr));
}

DetectionResult expected_detection(const ArchitectureConfig& cfg, const ModeState& prepared,
                                   const std::vector<double>& bob_phases) {
  Context ctx = build_context(cfg, prepared, bob_phases);
  return finish(ctx, expected_powers(ctx));
}

std::vector<std::uint64_t> simulate_clicks(const ArchitectureConfig& cfg, const ModeState& prepared,
                                           const std::vector<double>& bob_phases,
                                           std::uint64_t n_gates, std::uint64_t seed) {
  if (n_gates < 1) throw std::invalid_argument("simulate_clicks: need at least one gate");
  Context ctx = build_context(cfg, prepared, bob_phases);
  const int n_det = ctx.dim;
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_det), 0);
  std::mt19937_64 gen(derive_seed(seed, 0x636c69636bull));

  std::vector<int> sifted_bins;
  if (ctx.scheme == Scheme::time_bin)
    sifted_bins = {ctx.dim - 1};
  else
    sifted_bins = {0};

  // Per-detector click probability for the sifted bins of one gate.
  auto click_probs = [&](const Eigen::MatrixXd& raw) {
    Eigen::MatrixXd p = raw;
    mix_visibility(p, ctx.visibility);
    p = to_detector_order(ctx, std::move(p));
    Eigen::VectorXd probs(n_det);
    for (int k = 0; k < n_det; ++k) {
      double mu = 0.0;
      for (int b : sifted_bins) mu += ctx.mu_source * p(k, b);
      const auto& det = cfg.detectors[static_cast<std::size_t>(k)];
      probs(k) = 1.0 - (1.0 - det.dark_count_prob) * std::exp(-mu * det.efficiency);
    }
    return probs;
  };

  if (!ctx.has_random_slots()) {
    const Eigen::VectorXd probs = click_probs(eval_powers(ctx, nullptr));
    for (std::uint64_t g = 0; g < n_gates; ++g)
      for (int k = 0; k < n_det; ++k)
        if (uniform_double(gen) < probs(k)) ++counts[static_cast<std::size_t>(k)];
    return counts;
  }

  // Crosstalk phases are redrawn every gate: lantern A slots first, then
  // lantern B slots, in slot order.
  const std::vector<GateTerm> terms = build_gate_terms(ctx);
  const std::size_t na = ctx.lantern_a && ctx.lantern_a->random ? ctx.lantern_a->slots.size() : 0;
  const std::size_t nb = ctx.lantern_b && ctx.lantern_b->random ? ctx.lantern_b->slots.size() : 0;
  std::vector<std::complex<double>> pa(na), pb(nb);
  Eigen::VectorXcd amp(n_det);
  Eigen::VectorXd power(n_det);

  const double vis = ctx.visibility;
  for (std::uint64_t g = 0; g < n_gates; ++g) {
    for (std::size_t j = 0; j < na; ++j) pa[j] = unit_phase(2.0 * kPi * uniform_double(gen));
    for (std::size_t j = 0; j < nb; ++j) pb[j] = unit_phase(2.0 * kPi * uniform_double(gen));
    amp.setZero();
    for (const GateTerm& t : terms) {
      std::complex<double> f(1.0, 0.0);
      if (t.a_slot >= 0) f *= pa[static_cast<std::size_t>(t.a_slot)];
      if (t.b_slot >= 0) f *= pb[static_cast<std::size_t>(t.b_slot)];
      amp.noalias() += t.vec * f;
    }
    power = amp.cwiseAbs2();
    const double flat = power.sum() / static_cast<double>(n_det);
    for (int k = 0; k < n_det; ++k) {
      const int port = n_det == 2 ? 1 - k : k;  // detector 0 = matched projector
      const double mu = ctx.mu_source * (vis * power(port) + (1.0 - vis) * flat);
      const auto& det = cfg.detectors[static_cast<std::size_t>(k)];
      const double p = 1.0 - (1.0 - det.dark_count_prob) * std::exp(-mu * det.efficiency);
      if (uniform_double(gen) < p) ++counts[static_cast<std::size_t>(k)];
    }
  }
  return counts;
}

double intrinsic_sift_transmission(Scheme scheme, int d) {
  if (d < 2) throw std::invalid_argument("intrinsic_sift_transmission: d must be >= 2");
  return scheme == Scheme::time_bin ? 1.0 / static_cast<double>(d) : 1.0;
}

// ---------------------------------------------------------------------------
// BB84 statistics
// ---------------------------------------------------------------------------

namespace {

// Column of the probability matrix holding detector `det` of basis `b`.
int matrix_column(Basis b, int det) { return (b == Basis::mub1 ? 0 : 2) + det; }

// Detector index that a matched-basis measurement assigns to `label`.
int matched_detector(Bb84Label label) {
  return (label == Bb84Label::lp_plus || label == Bb84Label::oam_plus) ? 0 : 1;
}

}  // namespace

ProbabilityMatrixResult probability_matrix(const ArchitectureConfig& cfg,
                                           std::uint64_t gates_per_cell, std::uint64_t seed) {
  validate(cfg);
  if (cfg.dim != 2) throw std::invalid_argument("probability_matrix: needs dim 2");
  if (gates_per_cell < 1) throw std::invalid_argument("probability_matrix: need at least one gate");

  ProbabilityMatrixResult out;
  out.gates_per_cell = gates_per_cell;
  out.p.setZero();
  out.sigma.setZero();

  for (int j = 0; j < 4; ++j) {
    const Bb84Label sent = kBb84Labels[static_cast<std::size_t>(j)];
    const ModeState prepared = prepare_bb84(sent);
    for (Basis b : {Basis::mub1, Basis::mub2}) {
      const std::vector<double> bank = bob_phase_bank(cfg.scheme, 2, basis_phase(b));
      const std::uint64_t cell_seed = derive_seed(seed, static_cast<std::uint64_t>(j) * 2u +
                                                            (b == Basis::mub2 ? 1u : 0u));
      const auto counts = simulate_clicks(cfg, prepared, bank, gates_per_cell, cell_seed);
      const double total = static_cast<double>(counts[0] + counts[1]);

      // Every cell of this run shares the click total as its denominator, so
      // fewer than 100 expected clicks leaves the cells unresolved.
      const DetectionResult exp = expected_detection(cfg, prepared, bank);
      double expected_clicks = 0.0;
      for (int det = 0; det < 2; ++det) {
        const auto& dm = cfg.detectors[static_cast<std::size_t>(det)];
        expected_clicks +=
            (1.0 - (1.0 - dm.dark_count_prob) * std::exp(-exp.sifted_mu(det) * dm.efficiency)) *
            static_cast<double>(gates_per_cell);
      }
      if (expected_clicks < 100.0) out.low_counts_warning = true;

      for (int det = 0; det < 2; ++det) {
        const int col = matrix_column(b, det);
        if (total <= 0.0) {
          out.p(j, col) = 0.5;
          out.sigma(j, col) = 0.5;
          out.low_counts_warning = true;
        } else {
          const double p = static_cast<double>(counts[static_cast<std::size_t>(det)]) / total;
          out.p(j, col) = p;
          out.sigma(j, col) = std::sqrt(std::max(p * (1.0 - p), 1.0 / total) / total);
        }
      }
    }
  }
  return out;
}

double analytic_matched_diagonal(const ArchitectureConfig& cfg) {
  validate(cfg);
  if (cfg.dim != 2) throw std::invalid_argument("analytic_matched_diagonal: needs dim 2");
  double mean = 0.0;
  for (Bb84Label label : kBb84Labels) {
    const std::vector<double> bank = bob_phase_bank(cfg.scheme, 2, basis_phase(basis_of(label)));
    const DetectionResult exp = expected_detection(cfg, prepare_bb84(label), bank);
    const int right = matched_detector(label);
    double p[2];
    for (int det = 0; det < 2; ++det) {
      const auto& dm = cfg.detectors[static_cast<std::size_t>(det)];
      p[det] = 1.0 - (1.0 - dm.dark_count_prob) * std::exp(-exp.sifted_mu(det) * dm.efficiency);
    }
    const double total = p[0] + p[1];
    mean += total > 0.0 ? p[right] / total : 0.5;
  }
  return mean / 4.0;
}

double calibrate_visibility(ArchitectureConfig cfg, double target) {
  if (target < 0.5 || target > 1.0)
    throw std::invalid_argument("calibrate_visibility: target diagonal must lie in [0.5, 1]");
  auto diagonal_at = [&cfg, target](double v) {
    cfg.visibility = v;
    return analytic_matched_diagonal(cfg) - target;
  };
  if (diagonal_at(1.0) < -1e-9)
    throw std::invalid_argument("calibrate_visibility: target diagonal unreachable at V = 1");
  double lo = 0.0, hi = 1.0;
  if (diagonal_at(lo) > 0.0) return 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (diagonal_at(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

QberReport qber_from_link(const ArchitectureConfig& cfg, double added_loss_db,
                          std::optional<double> signal_override) {
  validate(cfg);
  if (added_loss_db < 0.0) throw std::invalid_argument("qber_from_link: added loss must be >= 0 dB");
  const double scale = std::pow(10.0, -added_loss_db / 10.0);

  // Matched-basis sent states: the four BB84 states for qubits, the
  // flat-phase qudit state otherwise.
  struct Case {
    ModeState state;
    std::vector<double> bank;
    int right;
  };
  std::vector<Case> cases;
  if (cfg.dim == 2) {
    for (Bb84Label label : kBb84Labels)
      cases.push_back({prepare_bb84(label),
                       bob_phase_bank(cfg.scheme, 2, basis_phase(basis_of(label))),
                       matched_detector(label)});
  } else {
    const std::vector<double> zeros(static_cast<std::size_t>(cfg.dim), 0.0);
    cases.push_back({prepare_qudit(cfg.dim, zeros),
                     bob_projection_bank(cfg.scheme, cfg.dim, zeros), 0});
  }

  double s_right = 0.0, s_wrong = 0.0;
  std::vector<double> click_with_darks(static_cast<std::size_t>(cfg.dim), 0.0);
  int n_sifted_bins = 0;
  for (const Case& c : cases) {
    const DetectionResult exp = expected_detection(cfg, c.state, c.bank);
    n_sifted_bins = static_cast<int>(
        std::count(exp.sift_mask.begin(), exp.sift_mask.end(), std::uint8_t{1}));
    for (int det = 0; det < cfg.dim; ++det) {
      const auto& dm = cfg.detectors[static_cast<std::size_t>(det)];
      const double mu = exp.sifted_mu(det) * scale;
      const double p_signal = 1.0 - std::exp(-mu * dm.efficiency);
      (det == c.right ? s_right : s_wrong) += p_signal / static_cast<double>(cases.size());
      click_with_darks[static_cast<std::size_t>(det)] +=
          (1.0 - (1.0 - dm.dark_count_prob) * std::exp(-mu * dm.efficiency)) /
          static_cast<double>(cases.size());
    }
  }

  const double s_chain = s_right + s_wrong;
  const double e_opt = s_chain > 0.0 ? s_wrong / s_chain : 0.0;

  double mean_dark = 0.0;
  for (const auto& dm : cfg.detectors) mean_dark += dm.dark_count_prob;
  mean_dark /= static_cast<double>(cfg.detectors.size());
  // One dark probability per sifted time bin (system-level accounting).
  const double p_dc_total = mean_dark * static_cast<double>(n_sifted_bins);

  QberReport rep;
  rep.detector_click_prob = std::move(click_with_darks);
  rep.sifting_factor = intrinsic_sift_transmission(cfg.scheme, cfg.dim);
  rep.signal_per_gate = signal_override ? (*signal_override * scale) : s_chain;
  rep.optical_error_rate = e_opt;
  rep.dark_prob_total = p_dc_total;
  const double denom = rep.signal_per_gate + p_dc_total;
  rep.qber = denom > 0.0 ? (e_opt * rep.signal_per_gate + 0.5 * p_dc_total) / denom : 0.0;
  rep.dark_share_points = denom > 0.0 ? 100.0 * 0.5 * p_dc_total / denom : 0.0;
  return rep;
}

double binary_entropy(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("binary_entropy: p must lie in [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double key_fraction(double qber) {
  if (qber < 0.0 || qber > 0.5) throw std::invalid_argument("key_fraction: qber must lie in [0, 0.5]");
  return std::max(0.0, 1.0 - 2.0 * binary_entropy(qber));
}

double detection_gain_vs_timebin(int d, double lantern_loss_db) {
  if (d < 2) throw std::invalid_argument("detection_gain_vs_timebin: d must be >= 2");
  if (lantern_loss_db < 0.0)
    throw std::invalid_argument("detection_gain_vs_timebin: lantern loss must be >= 0 dB");
  return std::pow(10.0, (10.0 * std::log10(static_cast<double>(d)) - lantern_loss_db) / 10.0) - 1.0;
}

}  // namespace qlink
