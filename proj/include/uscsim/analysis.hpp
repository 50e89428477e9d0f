#pragma once

// Analytic checks of the two-level reduction and the positive/negative frequency split of the
// USC cavity field.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uscsim/metrics.hpp"
#include "uscsim/models.hpp"
#include "uscsim/tensor_core.hpp"

namespace uscsim {

// ---------------------------------------------------------------------------
// X^+ / X^-

struct FrequencyDecomposition {
  Operator X_plus;    ///< lowering part: sum_{E_j < E_k} |j><j| X |k><k|
  Operator X_minus;   ///< raising part, X_plus^dag
  Operator X_static;  ///< elements between (quasi-)degenerate levels, assigned to neither
  RealVector energies;
  std::vector<std::pair<int, int>> degenerate_pairs;  ///< (j, k), j < k, with a nonzero static element
};

/// Splits `op` by the sign of the Bohr frequency of each transition in the eigenbasis of `h`.
/// Pairs with |E_j - E_k| <= tol go to X_static; tol < 0 selects 1e-9 * max|E|.
inline FrequencyDecomposition frequency_split(const Operator& op, const Operator& h, double tol = -1.0) {
  if (op.layout() != h.layout()) throw DimensionError("frequency_split: layout mismatch");
  const EigenSystem es = eig_hermitian(h);
  const Index n = h.dim();
  if (tol < 0.0) tol = 1e-9 * std::max(1.0, es.values.cwiseAbs().maxCoeff());
  const Matrix m = es.vectors.adjoint() * op.matrix() * es.vectors;
  Matrix lo = Matrix::Zero(n, n), hi = Matrix::Zero(n, n), st = Matrix::Zero(n, n);
  FrequencyDecomposition out{op, op, op, es.values, {}};
  for (Index k = 0; k < n; ++k)
    for (Index j = 0; j < n; ++j) {
      const double d = es.values(k) - es.values(j);
      if (d > tol)
        lo(j, k) = m(j, k);
      else if (d < -tol)
        hi(j, k) = m(j, k);
      else {
        st(j, k) = m(j, k);
        if (j < k && std::abs(m(j, k)) > 1e-12) out.degenerate_pairs.emplace_back(static_cast<int>(j), static_cast<int>(k));
      }
    }
  const auto back = [&](const Matrix& x) { return Operator(op.layout(), es.vectors * x * es.vectors.adjoint()); };
  out.X_plus = back(lo);
  out.X_minus = back(hi);
  out.X_static = back(st);
  return out;
}

/// x' = (X^+ + X^-)/2 for an operator already expressed in an energy eigenbasis with the given
/// (ascending) energies: the off-diagonal, non-degenerate part of x, halved.
inline Matrix eigenbasis_x_prime(const Matrix& x, const RealVector& energies, double tol) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index k = 0; k < x.cols(); ++k)
    for (Index j = 0; j < x.rows(); ++j)
      if (std::abs(energies(k) - energies(j)) > tol) out(j, k) = 0.5 * x(j, k);
  return out;
}

// ---------------------------------------------------------------------------
// Adiabatic-regime validation

/// sum_{N>=1} (4a^2)^N / (N^2 N!) with relative tail < 1e-14.
inline double adiabatic_sum(double alpha) { return detail::adiabatic_series(alpha); }

struct InfidelityCandidates {
  double quarter = 0.0;  ///< (w_q^2 / 4 w_r^2) e^{-4a^2} S
  double full = 0.0;     ///< (w_q^2 / w_r^2) e^{-4a^2} S, i.e. 4 x quarter
};

inline InfidelityCandidates infidelity_candidates(const RabiParams& p) {
  p.validate();
  const double a = p.alpha();
  const double base = std::exp(-4.0 * a * a) * adiabatic_sum(a) * p.omega_q * p.omega_q / (p.omega_r * p.omega_r);
  return {0.25 * base, base};
}

/// Infidelity f of psi_0^- as an approximation of |G>. The w_q^2 / 4 w_r^2 prefactor is the one
/// consistent with the perturbative coefficients and with exact diagonalization (F = 1/(1+f));
/// the w_q^2 / w_r^2 variant overestimates 1 - F by a factor 4 (see infidelity_candidates).
inline double infidelity_series(const RabiParams& p) { return infidelity_candidates(p).quarter; }

struct ExactFidelity {
  double ground = 0.0;   ///< |<psi_0^-|G>|^2
  double excited = 0.0;  ///< |<psi_0^+|E>|^2
};

inline ExactFidelity exact_fidelity(const RabiParams& p, int cavity_cut) {
  const RabiSpectrum spec = rabi_spectrum(p, cavity_cut);
  const auto ad = adiabatic_states(p, 0, spec.layout);
  return {std::norm(ad[0].minus.dot(spec.vectors.col(0))), std::norm(ad[0].plus.dot(spec.vectors.col(1)))};
}

/// h_j = |<phi_j|sigma_z|G>|^2 for exact eigenstates phi_j. Levels whose cavity edge population
/// exceeds 1e-6 are considered unreliable and raise TruncationError.
inline double leakage(const RabiParams& p, int cavity_cut, int j) {
  const RabiSpectrum spec = rabi_spectrum(p, cavity_cut);
  if (j < 0 || j >= spec.vectors.cols()) throw DimensionError("leakage: level index out of range");
  const double edge = edge_population(spec.vectors.col(j), spec.layout, 1);
  if (edge > 1e-6) throw TruncationError("leakage: level " + std::to_string(j) + " touches the cavity cut", edge);
  const Matrix sz = kron(sigma_z(), identity(cavity_cut));
  return std::norm(spec.vectors.col(j).dot(sz * spec.vectors.col(0)));
}

// ---------------------------------------------------------------------------
// Full vs two-level comparison

/// Conditional expectation values on both outcome branches.
struct BranchSeries {
  std::vector<double> times;
  std::vector<double> ge, lt;
};

struct TwoLevelComparison {
  double max_dev_ge = 0.0;
  double max_dev_lt = 0.0;
  double max_dev = 0.0;
  double t_of_max = 0.0;
};

/// Max |<sigma_z>_full - <sigma_x'>_two-level| over matching output times on both branches.
inline TwoLevelComparison two_level_comparison(const BranchSeries& full_sigma_z, const BranchSeries& reduced_sigma_xp) {
  const auto& a = full_sigma_z;
  const auto& b = reduced_sigma_xp;
  if (a.times.size() != b.times.size() || a.ge.size() != a.times.size() || b.ge.size() != b.times.size() ||
      a.lt.size() != a.times.size() || b.lt.size() != b.times.size())
    throw DimensionError("two_level_comparison: series lengths differ");
  TwoLevelComparison out;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k])))
      throw DimensionError("two_level_comparison: time grids differ");
    const double dg = std::abs(a.ge[k] - b.ge[k]);
    const double dl = std::abs(a.lt[k] - b.lt[k]);
    out.max_dev_ge = std::max(out.max_dev_ge, dg);
    out.max_dev_lt = std::max(out.max_dev_lt, dl);
    if (std::max(dg, dl) > out.max_dev) {
      out.max_dev = std::max(dg, dl);
      out.t_of_max = a.times[k];
    }
  }
  return out;
}

struct StarkTracking {
  std::vector<double> sx_high, sx_low;  ///< closed-form ground-state <sigma_x'> from n_H, n_L
  std::vector<double> sz_high, sz_low;  ///< closed-form <sigma_z'>
  double max_dev = 0.0;                 ///< vs simulated <sigma_x'> on both branches, t >= t_from
};

/// Closed-form ground state of J n sigma_x' + (w_eff/2) sigma_z' with n = n_H(t), n_L(t),
/// compared with simulated high/low-branch <sigma_x'> after t_from.
inline StarkTracking stark_tracking(const TwoLevelParams& tl, const std::vector<double>& times,
                                    const std::vector<double>& n_high, const std::vector<double>& n_low,
                                    const std::vector<double>& sx_high_sim, const std::vector<double>& sx_low_sim,
                                    double t_from = 100.0) {
  const std::size_t n = times.size();
  if (n_high.size() != n || n_low.size() != n || sx_high_sim.size() != n || sx_low_sim.size() != n)
    throw DimensionError("stark_tracking: series lengths differ");
  StarkTracking out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto h = effective_static_hamiltonian(tl, std::max(0.0, n_high[k]));
    const auto l = effective_static_hamiltonian(tl, std::max(0.0, n_low[k]));
    out.sx_high.push_back(h.sigma_x);
    out.sx_low.push_back(l.sigma_x);
    out.sz_high.push_back(h.sigma_z);
    out.sz_low.push_back(l.sigma_z);
    if (times[k] >= t_from)
      out.max_dev = std::max({out.max_dev, std::abs(h.sigma_x - sx_high_sim[k]), std::abs(l.sigma_x - sx_low_sim[k])});
  }
  return out;
}

}  // namespace uscsim
