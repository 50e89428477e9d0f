#pragma once

// Hamiltonians and special states: Rabi model, driven Kerr resonator,
// dispersive-type coupling J sigma_z b^dag b, the low-energy two-level
// reduction and the adiabatic (displaced-Fock) eigenstructure.
//
// Units: angular frequencies in rad/ns, times in ns.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "uscsim/tensor_core.hpp"

namespace uscsim {

// ---------------------------------------------------------------------------
// Parameter records

struct RabiParams {
  double omega_q = 0.0;  ///< qubit splitting
  double g = 0.0;        ///< qubit-cavity coupling
  double omega_r = 1.0;  ///< cavity frequency

  double alpha() const { return g / omega_r; }

  void validate() const {
    if (!(omega_q >= 0.0) || !(g >= 0.0) || !(omega_r > 0.0))
      throw ConfigError("Rabi parameters require omega_q >= 0, g >= 0, omega_r > 0");
  }
};

struct ResonatorParams {
  double delta = 0.0;    ///< drive detuning
  double chi = 0.0;      ///< Kerr coefficient, enters as -chi (b^dag b)^2
  double f = 0.0;        ///< drive amplitude
  double omega_d = 0.0;  ///< drive frequency (lab frame only)
  double kappa = 0.0;    ///< photon loss rate
  double J = 0.0;        ///< qubit-resonator coupling

  void validate() const {
    if (!(kappa >= 0.0)) throw ConfigError("resonator kappa must be >= 0");
    if (!(chi >= 0.0)) throw ConfigError("resonator chi must be >= 0");
    if (!std::isfinite(delta) || !std::isfinite(f) || !std::isfinite(J) || !std::isfinite(omega_d))
      throw ConfigError("resonator parameters must be finite");
  }
};

struct TwoLevelParams {
  double omega_eff = 0.0;
  double J = 0.0;
};

struct UscLossParams {
  double gamma1 = 0.0;  ///< relaxation |E> -> |G>
  double gamma2 = 0.0;  ///< pure dephasing

  void validate() const {
    if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) throw ConfigError("USC loss rates must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Standard layouts

inline HilbertLayout usc_layout(int cavity_cut) { return {{2, cavity_cut}, {"qubit", "cavity"}}; }

inline HilbertLayout full_layout(int cavity_cut, int resonator_cut) {
  return {{2, cavity_cut, resonator_cut}, {"qubit", "cavity", "resonator"}};
}

/// Reduced USC system (two or more dressed levels) coupled to the readout resonator.
inline HilbertLayout dressed_layout(int usc_levels, int resonator_cut) {
  return {{usc_levels, resonator_cut}, {"usc", "resonator"}};
}

inline HilbertLayout two_level_layout(int resonator_cut) { return dressed_layout(2, resonator_cut); }

// ---------------------------------------------------------------------------
// Rabi model

/// (w_q/2) sigma_x + g (a + a^dag) sigma_z + w_r a^dag a on the layout's qubit and cavity factors.
inline Operator rabi_hamiltonian(const RabiParams& p, const HilbertLayout& layout) {
  p.validate();
  const int q = layout.find("qubit");
  const int c = layout.find("cavity");
  if (q < 0 || c < 0) throw DimensionError("rabi_hamiltonian: layout needs qubit and cavity factors");
  const int nc = layout.dim(c);
  const Matrix a = destroy(nc);
  Operator h = 0.5 * p.omega_q * embed(sigma_x(), layout, q);
  h += p.g * (embed(sigma_z(), layout, q) * embed(Matrix(a + a.adjoint()), layout, c));
  h += p.omega_r * embed(number_op(nc), layout, c);
  return h;
}

/// Parity operator sigma_x (x) (-1)^{a^dag a}; commutes with the Rabi Hamiltonian.
inline Matrix rabi_parity(int cavity_cut) {
  Matrix phase = Matrix::Zero(cavity_cut, cavity_cut);
  for (int n = 0; n < cavity_cut; ++n) phase(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
  return kron(sigma_x(), phase);
}

struct RabiSpectrum {
  HilbertLayout layout;
  RealVector energies;      ///< ascending
  Matrix vectors;           ///< columns in the [qubit, cavity] Fock basis
  std::vector<int> parity;  ///< +1 / -1 per eigenvector
};

/// Exact eigenstructure of the truncated Rabi model, diagonalized per parity sector so that
/// degenerate doublets (w_q = 0) still come out as parity eigenstates. Exact ties are ordered
/// odd parity first, which keeps the ground state continuous with w_q > 0.
/// Phases: largest component real-positive, except the first excited state, which is
/// rotated so that <G|sigma_z|E> > 0.
inline RabiSpectrum rabi_spectrum(const RabiParams& p, int cavity_cut) {
  const HilbertLayout layout = usc_layout(cavity_cut);
  const Matrix h = rabi_hamiltonian(p, layout).matrix();
  const Index nc = cavity_cut;

  std::vector<double> energy;
  std::vector<Vector> vecs;
  std::vector<int> par;
  for (int sign : {-1, +1}) {
    // |L,n> + sign (-1)^n |R,n>, L index 0, R index 1.
    Matrix b = Matrix::Zero(2 * nc, nc);
    for (Index n = 0; n < nc; ++n) {
      const double s = sign * ((n % 2 == 0) ? 1.0 : -1.0);
      b(n, n) = 1.0 / std::sqrt(2.0);
      b(nc + n, n) = s / std::sqrt(2.0);
    }
    Matrix hs = b.adjoint() * h * b;
    hs = 0.5 * (hs + hs.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(hs);
    if (es.info() != Eigen::Success) throw NumericalError("rabi_spectrum: solver failed");
    for (Index k = 0; k < nc; ++k) {
      energy.push_back(es.eigenvalues()(k));
      vecs.emplace_back(b * es.eigenvectors().col(k));
      par.push_back(sign);
    }
  }

  const double tie = 1e-12 * std::max(1.0, std::abs(p.omega_r) + std::abs(p.g) + std::abs(p.omega_q));
  std::vector<std::size_t> order(energy.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (std::abs(energy[x] - energy[y]) <= tie) return par[x] < par[y];
    return energy[x] < energy[y];
  });

  RabiSpectrum out;
  out.layout = layout;
  out.energies.resize(2 * nc);
  out.vectors.resize(2 * nc, 2 * nc);
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.energies(k) = energy[order[k]];
    out.vectors.col(k) = vecs[order[k]];
    out.parity.push_back(par[order[k]]);
  }
  fix_phases(out.vectors);
  const Matrix sz = kron(sigma_z(), identity(cavity_cut));
  const cplx m01 = out.vectors.col(0).dot(sz * out.vectors.col(1));
  if (std::abs(m01) > 1e-14) out.vectors.col(1) *= std::abs(m01) / m01;
  return out;
}

/// Population of the top `levels` Fock states of `slot` in a pure state.
inline double edge_population(const Vector& psi, const HilbertLayout& layout, std::size_t slot, int levels = 2) {
  const Index stride = layout.strides()[slot];
  const int d = layout.dim(slot);
  double pop = 0.0;
  for (Index f = 0; f < psi.size(); ++f) {
    const int digit = static_cast<int>((f / stride) % d);
    if (digit >= d - levels) pop += std::norm(psi(f));
  }
  return pop;
}

/// The lowest `levels` Rabi eigenstates used as the USC factor in dressed dynamics.
struct DressedUsc {
  RabiParams params;
  int cavity_cut = 0;
  RealVector energies;        ///< relative to the ground state
  Matrix basis;               ///< 2 N_c x K
  Matrix sigma_z;             ///< K x K, projected
  Matrix sigma_x;             ///< K x K
  Matrix position;            ///< a + a^dag projected, K x K
  double edge_population = 0;  ///< worst top-two-level cavity population over kept states

  int levels() const { return static_cast<int>(energies.size()); }

  /// Dressed coordinates of a [qubit, cavity] state, with the lost norm.
  std::pair<Vector, double> project(const Vector& psi) const {
    Vector c = basis.adjoint() * psi;
    return {c, psi.squaredNorm() - c.squaredNorm()};
  }

  /// Lift a K x K operator / state back to the [qubit, cavity] Fock space.
  Matrix lift(const Matrix& m) const { return basis * m * basis.adjoint(); }
};

inline DressedUsc dressed_usc(const RabiParams& p, int cavity_cut, int levels, double edge_tol = 1e-6) {
  if (levels < 2 || levels > 2 * cavity_cut)
    throw DimensionError("dressed_usc: need 2 <= levels <= 2 * cavity_cut");
  const RabiSpectrum spec = rabi_spectrum(p, cavity_cut);
  DressedUsc d;
  d.params = p;
  d.cavity_cut = cavity_cut;
  d.energies = spec.energies.head(levels).array() - spec.energies(0);
  d.basis = spec.vectors.leftCols(levels);
  const Matrix a = destroy(cavity_cut);
  d.sigma_z = d.basis.adjoint() * kron(sigma_z(), identity(cavity_cut)) * d.basis;
  d.sigma_x = d.basis.adjoint() * kron(sigma_x(), identity(cavity_cut)) * d.basis;
  d.position = d.basis.adjoint() * kron(identity(2), Matrix(a + a.adjoint())) * d.basis;
  for (int k = 0; k < levels; ++k)
    d.edge_population = std::max(d.edge_population, edge_population(d.basis.col(k), spec.layout, 1));
  if (d.edge_population > edge_tol)
    throw TruncationError("dressed USC states reach the cavity cut " + std::to_string(cavity_cut),
                          d.edge_population);
  return d;
}

// ---------------------------------------------------------------------------
// Approximate ground / excited states

struct StatePair {
  Vector ground;
  Vector excited;
  std::vector<std::string> warnings;
};

/// (|R>|a> -/+ |L>|-a>)/sqrt(2) on a [qubit, cavity] layout.
inline StatePair approx_ground_excited(const RabiParams& p, const HilbertLayout& layout) {
  p.validate();
  if (layout.factors() != 2 || layout.labels()[0] != "qubit" || layout.labels()[1] != "cavity")
    throw DimensionError("approx_ground_excited: layout must be [qubit, cavity]");
  const int nc = layout.dim(1);
  const double a = p.alpha();
  const Vector right = kron(basis(2, 1), coherent_state(a, nc));
  const Vector left = kron(basis(2, 0), coherent_state(-a, nc));
  StatePair out;
  out.ground = (right - left).normalized();
  out.excited = (right + left).normalized();
  if (p.omega_q > 0.2 * p.omega_r)
    out.warnings.push_back("omega_q/omega_r > 0.2: adiabatic approximant is unreliable");
  return out;
}

// ---------------------------------------------------------------------------
// Readout resonator

enum class Frame { Lab, Rotating };

/// Lab: (delta + w_d) n - chi n^2 - f cos(w_d t)(b + b^dag).
/// Rotating (RWA): delta n - chi n^2 - (f/2)(b + b^dag).
inline Operator nonlinear_resonator_hamiltonian(const ResonatorParams& p, const HilbertLayout& layout,
                                                Frame frame, std::optional<double> t = std::nullopt) {
  p.validate();
  const int r = layout.find("resonator");
  const std::size_t slot = r >= 0 ? static_cast<std::size_t>(r) : 0;
  if (r < 0 && layout.factors() != 1)
    throw DimensionError("nonlinear_resonator_hamiltonian: layout has no resonator factor");
  const int nb = layout.dim(slot);
  const Matrix b = destroy(nb);
  const Matrix n = number_op(nb);
  const Matrix quad = b + b.adjoint();
  Matrix h;
  if (frame == Frame::Rotating) {
    if (t) throw ConfigError("rotating-frame Hamiltonian is time independent; do not pass t");
    h = p.delta * n - p.chi * n * n - 0.5 * p.f * quad;
  } else {
    if (!t) throw ConfigError("lab-frame Hamiltonian needs a time");
    if (!(p.omega_d > 0.0)) throw ConfigError("lab-frame Hamiltonian needs omega_d > 0");
    h = (p.delta + p.omega_d) * n - p.chi * n * n - p.f * std::cos(p.omega_d * *t) * quad;
  }
  return embed(h, layout, slot);
}

/// J sigma_z (x) b^dag b.
inline Operator interaction_hamiltonian(double J, const HilbertLayout& layout) {
  const int q = layout.find("qubit");
  const int r = layout.find("resonator");
  if (q < 0 || r < 0) throw DimensionError("interaction_hamiltonian: layout needs qubit and resonator");
  return J * (embed(sigma_z(), layout, q) * embed(number_op(layout.dim(r)), layout, r));
}

// ---------------------------------------------------------------------------
// Two-level reduction. Basis of the "usc" factor: index 0 = |G>, index 1 = |E>.

inline Matrix sigma_z_prime() {
  Matrix m(2, 2);
  m << -1, 0, 0, 1;
  return m;
}
inline Matrix sigma_x_prime() { return sigma_x(); }

namespace detail {
/// sum_{N>=1} (4a^2)^N / (N^2 N!), summed until the relative tail is below 1e-16.
inline double adiabatic_series(double alpha) {
  const double x = 4.0 * alpha * alpha;
  if (x == 0.0) return 0.0;
  double term_base = 1.0;  // x^N / N!
  double sum = 0.0;
  for (int n = 1; n < 10000; ++n) {
    term_base *= x / n;
    const double term = term_base / (static_cast<double>(n) * n);
    sum += term;
    if (n > x && term < 1e-16 * sum) break;
  }
  return sum;
}
}  // namespace detail

inline double effective_splitting(const RabiParams& p) {
  const double a = p.alpha();
  return p.omega_q * std::exp(-2.0 * a * a);
}

struct TwoLevelReduction {
  TwoLevelParams params;
  std::vector<std::string> warnings;
};

inline TwoLevelReduction effective_two_level(const RabiParams& p, double J) {
  p.validate();
  TwoLevelReduction out{{effective_splitting(p), J}, {}};
  const double a = p.alpha();
  const double f = p.omega_q * p.omega_q / (4.0 * p.omega_r * p.omega_r) * std::exp(-4.0 * a * a) *
                   detail::adiabatic_series(a);
  if (f > 0.05) out.warnings.push_back("infidelity " + std::to_string(f) + " > 0.05: two-level reduction is poor");
  return out;
}

/// (w_eff/2) sigma_z' on the layout's "usc" factor.
inline Operator two_level_rabi(const TwoLevelParams& tl, const HilbertLayout& layout) {
  return 0.5 * tl.omega_eff * embed(sigma_z_prime(), layout, "usc");
}

/// J sigma_x' (x) b^dag b.
inline Operator two_level_interaction(const TwoLevelParams& tl, const HilbertLayout& layout) {
  const int r = layout.slot("resonator");
  return tl.J * (embed(sigma_x_prime(), layout, "usc") * embed(number_op(layout.dim(r)), layout, r));
}

struct StaticTwoLevel {
  Operator hamiltonian;
  Vector ground;
  double sigma_x = 0.0;  ///< <sigma_x'> in the ground state
  double sigma_z = 0.0;  ///< <sigma_z'> in the ground state
};

/// J nbar sigma_x' + (w_eff/2) sigma_z' with its ground state in closed form.
inline StaticTwoLevel effective_static_hamiltonian(const TwoLevelParams& tl, double nbar) {
  if (!(nbar >= 0.0)) throw ConfigError("effective_static_hamiltonian: nbar must be >= 0");
  const double x = tl.J * nbar;
  const double z = 0.5 * tl.omega_eff;
  const double r = std::hypot(x, z);
  StaticTwoLevel out;
  out.hamiltonian = Operator(HilbertLayout({2}, {"usc"}), Matrix(x * sigma_x_prime() + z * sigma_z_prime()));
  if (r == 0.0) {
    out.ground = basis(2, 0);
    out.sigma_x = 0.0;
    out.sigma_z = -1.0;
    return out;
  }
  out.sigma_x = -x / r;
  out.sigma_z = -z / r;
  // Bloch vector (-x, -z)/r in the (sigma_x', sigma_z') plane; sigma_z' = -1 is |G> (index 0).
  const double theta = std::acos(std::clamp(-out.sigma_z, -1.0, 1.0));  // angle from |G>
  Vector g(2);
  g(0) = std::cos(0.5 * theta);
  g(1) = (out.sigma_x >= 0 ? 1.0 : -1.0) * std::sin(0.5 * theta);
  out.ground = g;
  return out;
}

// ---------------------------------------------------------------------------
// Adiabatic eigenstructure

struct Displacement {
  Matrix op;                     ///< n x n truncation of D(alpha)
  std::vector<double> deficit;   ///< per column: norm lost to the cut
};

/// D(alpha) = exp(alpha a^dag - alpha* a), evaluated in a padded space through the
/// eigendecomposition of the Hermitian generator i(alpha a^dag - alpha* a), then truncated.
inline Displacement displacement(cplx alpha, int n, int pad = 40) {
  if (n < 1) throw DimensionError("displacement: dimension must be >= 1");
  const int m = n + pad;
  const Matrix a = destroy(m);
  const Matrix gen = alpha * a.adjoint() - std::conj(alpha) * a;
  Matrix herm = kI * gen;
  herm = 0.5 * (herm + herm.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
  Vector phase(m);
  for (int k = 0; k < m; ++k) phase(k) = std::exp(-kI * es.eigenvalues()(k));
  const Matrix full = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
  Displacement d;
  d.op = full.topLeftCorner(n, n);
  for (int c = 0; c < n; ++c) d.deficit.push_back(1.0 - d.op.col(c).squaredNorm());
  return d;
}

struct AdiabaticState {
  Vector plus, minus;  ///< psi_N^+, psi_N^-
  double energy_plus = 0, energy_minus = 0;
  double overlap = 0;  ///< <N-|N+>
};

/// psi_N^{+-} = (|L> D(-a)|N> +- |R> D(a)|N>)/sqrt(2) for N = 0..n_max.
inline std::vector<AdiabaticState> adiabatic_states(const RabiParams& p, int n_max, const HilbertLayout& layout,
                                                    double max_deficit = 1e-8) {
  p.validate();
  if (layout.factors() != 2 || layout.labels()[0] != "qubit" || layout.labels()[1] != "cavity")
    throw DimensionError("adiabatic_states: layout must be [qubit, cavity]");
  const int nc = layout.dim(1);
  if (n_max < 0 || n_max >= nc) throw DimensionError("adiabatic_states: level beyond cavity cut");
  const double a = p.alpha();
  const Displacement dm = displacement(-a, nc);
  const Displacement dp = displacement(a, nc);
  std::vector<AdiabaticState> out;
  for (int n = 0; n <= n_max; ++n) {
    const double deficit = std::max(dm.deficit[n], dp.deficit[n]);
    if (deficit > max_deficit)
      throw TruncationError("displaced Fock state " + std::to_string(n) + " exceeds cavity cut", deficit);
    const Vector minus_n = dm.op.col(n);  // |N->
    const Vector plus_n = dp.op.col(n);   // |N+>
    const Vector left = kron(basis(2, 0), minus_n);
    const Vector right = kron(basis(2, 1), plus_n);
    AdiabaticState s;
    s.plus = (left + right) / std::sqrt(2.0);
    s.minus = (left - right) / std::sqrt(2.0);
    s.overlap = minus_n.dot(plus_n).real();
    const double base = p.omega_r * (n - a * a);
    s.energy_plus = base + 0.5 * p.omega_q * s.overlap;
    s.energy_minus = base - 0.5 * p.omega_q * s.overlap;
    out.push_back(std::move(s));
  }
  return out;
}

struct PerturbativePair {
  Vector ground, excited;
  double normalization = 1.0;  ///< 1 + sum_N c_N^2
  int terms = 0;               ///< highest N used
};

/// Lowest-order corrections to psi_0^{-+} from the off-diagonal part of (w_q/2) sigma_x:
/// c_N = (w_q/2) e^{-2a^2} (2a)^N / (w_r N sqrt(N!)), even N on the psi^- (psi^+) tower and
/// odd N on psi^+ (psi^-) for |G> (|E>, with opposite sign).
inline PerturbativePair perturbative_ground_excited(const RabiParams& p, const HilbertLayout& layout) {
  p.validate();
  const int nc = layout.dim(1);
  const double a = p.alpha();
  const double pref = 0.5 * p.omega_q * std::exp(-2.0 * a * a) / p.omega_r;

  // Highest N whose displaced Fock states still fit the cut.
  const Displacement dp = displacement(a, nc);
  int n_fit = 0;
  while (n_fit + 1 < nc && dp.deficit[n_fit + 1] <= 1e-8) ++n_fit;

  std::vector<double> c{0.0};
  double pow_over_fact = 1.0;  // (2a)^N / sqrt(N!)
  for (int n = 1; n <= n_fit; ++n) {
    pow_over_fact *= 2.0 * a / std::sqrt(static_cast<double>(n));
    const double cn = pref * pow_over_fact / n;
    c.push_back(cn);
    if (cn == 0.0 || (n > 4.0 * a * a && cn < 1e-14)) break;
  }
  const int n_series = static_cast<int>(c.size()) - 1;
  const auto states = adiabatic_states(p, n_series, layout);

  PerturbativePair out;
  out.ground = states[0].minus;
  out.excited = states[0].plus;
  double sum_sq = 0.0;
  for (int n = 1; n <= n_series; ++n) {
    const bool even = n % 2 == 0;
    out.ground += c[n] * (even ? states[n].minus : states[n].plus);
    out.excited -= c[n] * (even ? states[n].plus : states[n].minus);
    sum_sq += c[n] * c[n];
  }
  out.normalization = 1.0 + sum_sq;
  out.ground /= std::sqrt(out.normalization);
  out.excited /= std::sqrt(out.normalization);
  out.terms = n_series;
  return out;
}

}  // namespace uscsim
