#pragma once

// State characterization: Husimi Q function, von Neumann entropy (bits), negativity, quantum
// discord with projective measurements on a qubit factor, pure-state fidelity.

#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "uscsim/tensor_core.hpp"

namespace uscsim {

// ---------------------------------------------------------------------------
// Q function

struct QGridSpec {
  double re_min = -6.0, re_max = 6.0;
  double im_min = -6.0, im_max = 6.0;
  int n_re = 61, n_im = 61;

  void validate() const {
    if (n_re < 2 || n_im < 2) throw ConfigError("Q grid needs at least 2 points per axis");
    if (!(re_max > re_min) || !(im_max > im_min)) throw ConfigError("Q grid ranges must be increasing");
  }
  double re(int i) const { return re_min + (re_max - re_min) * i / (n_re - 1); }
  double im(int j) const { return im_min + (im_max - im_min) * j / (n_im - 1); }
};

struct QGrid {
  QGridSpec spec;
  Eigen::MatrixXd values;  ///< values(j, i) = Q(re(i) + i im(j)); rows follow the imaginary axis

  /// Riemann sum of Q over the grid.
  double integral() const {
    const double dre = (spec.re_max - spec.re_min) / (spec.n_re - 1);
    const double dim = (spec.im_max - spec.im_min) / (spec.n_im - 1);
    return values.sum() * dre * dim;
  }
};

/// Q(beta) = <beta|rho|beta> / pi for a single bosonic factor. Coherent vectors are the exact
/// (unrenormalized) Fock amplitudes, so Q is exact for the represented state at any |beta|:
/// amplitudes above the cut would only multiply zero matrix elements.
inline QGrid q_function(const Matrix& rho, const QGridSpec& spec) {
  spec.validate();
  const int n = static_cast<int>(rho.rows());
  QGrid out{spec, Eigen::MatrixXd(spec.n_im, spec.n_re)};
  for (int j = 0; j < spec.n_im; ++j)
    for (int i = 0; i < spec.n_re; ++i) {
      const Vector c = coherent_amplitudes(cplx(spec.re(i), spec.im(j)), n);
      out.values(j, i) = c.dot(rho * c).real() / kPi;
    }
  return out;
}

inline QGrid q_function(const DensityMatrix& rho, const QGridSpec& spec) {
  if (rho.layout().factors() != 1) throw DimensionError("q_function: expects a single-factor state");
  return q_function(rho.matrix(), spec);
}

// ---------------------------------------------------------------------------
// Entropy and entanglement

/// -sum lambda log2 lambda, eigenvalues below 1e-12 treated as zero.
inline double von_neumann_entropy(const Matrix& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double l = es.eigenvalues()(k);
    if (l > 1e-12) s -= l * std::log2(l);
  }
  return s;
}

inline double von_neumann_entropy(const DensityMatrix& rho) { return von_neumann_entropy(rho.matrix()); }

inline double trace_norm_hermitian(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

/// (||rho^{T_A}||_1 - 1)/2, i.e. the summed magnitude of the negative eigenvalues of the partial
/// transpose over factor `a`.
inline double negativity(const DensityMatrix& rho, std::size_t a = 0) {
  if (rho.layout().factors() != 2) throw DimensionError("negativity: expects a bipartite state");
  const Matrix pt = partial_transpose_matrix(rho.matrix(), rho.layout(), a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (pt + pt.adjoint()), Eigen::EigenvaluesOnly);
  double neg = 0.0;
  for (Index k = 0; k < es.eigenvalues().size(); ++k) neg += std::max(0.0, -es.eigenvalues()(k));
  return neg;
}

inline double fidelity_pure(const Vector& psi, const Matrix& rho) {
  if (std::abs(psi.squaredNorm() - 1.0) > 1e-8) throw ConfigError("fidelity_pure: psi must be normalized");
  return psi.dot(rho * psi).real();
}

inline double fidelity_pure(const Vector& psi, const DensityMatrix& rho) { return fidelity_pure(psi, rho.matrix()); }

// ---------------------------------------------------------------------------
// Quantum discord

struct DiscordOptions {
  int grid = 64;          ///< theta and phi samples
  bool refine = true;     ///< Nelder-Mead polish from the best grid point
  double nm_tol = 1e-10;  ///< simplex size at which refinement stops
  int nm_max_iter = 500;
};

struct DiscordResult {
  double discord = 0.0;              ///< bits
  double theta = 0.0, phi = 0.0;     ///< optimal basis
  double conditional_entropy = 0.0;  ///< min S(rho_{B|M})
  double grid_minimum = 0.0;         ///< best conditional entropy on the grid
  double mutual_information = 0.0;
};

namespace detail {

/// Conditional-entropy objective for projective measurements on a qubit factor A of a 2 x N
/// state. The B blocks are compressed to the support of rho_B, which contains the support of
/// every conditional state.
class DiscordObjective {
 public:
  explicit DiscordObjective(const DensityMatrix& rho) {
    const auto& layout = rho.layout();
    if (layout.factors() != 2 || layout.dim(0) != 2)
      throw DimensionError("quantum_discord: expects a 2 x N bipartite state with the qubit first");
    const Index nb = layout.dim(1);
    const Matrix& m = rho.matrix();
    Matrix rb = m.topLeftCorner(nb, nb) + m.bottomRightCorner(nb, nb);
    rb = 0.5 * (rb + rb.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(rb);
    const double cut = 1e-14 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    std::vector<Index> keep;
    for (Index k = 0; k < nb; ++k)
      if (es.eigenvalues()(k) > cut) keep.push_back(k);
    Matrix v(nb, static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) v.col(static_cast<Index>(k)) = es.eigenvectors().col(keep[k]);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) blocks_[a][b] = v.adjoint() * m.block(a * nb, b * nb, nb, nb) * v;
  }

  /// sum_k p_k S(rho_{B|k}) for |phi_1> = cos(t/2)|0> + e^{i p} sin(t/2)|1>, |phi_2> orthogonal.
  double operator()(double theta, double phi) const {
    const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
    const cplx e = std::polar(1.0, phi);
    double total = 0.0;
    for (int k = 0; k < 2; ++k) {
      // |phi_2> = -sin(t/2)|0> + e^{i p} cos(t/2)|1>
      const cplx u0 = k == 0 ? cplx(c) : cplx(-s);
      const cplx u1 = k == 0 ? e * s : e * c;
      Matrix cond = std::norm(u0) * blocks_[0][0] + std::conj(u0) * u1 * blocks_[0][1] +
                    std::conj(u1) * u0 * blocks_[1][0] + std::norm(u1) * blocks_[1][1];
      cond = 0.5 * (cond + cond.adjoint()).eval();
      const double p = cond.trace().real();
      if (p < 1e-12) continue;
      total += p * von_neumann_entropy(Matrix(cond / p));
    }
    return total;
  }

 private:
  std::array<std::array<Matrix, 2>, 2> blocks_;
};

inline void canonical_angles(double& theta, double& phi) {
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta < 0) theta += 2.0 * kPi;
  if (theta > kPi) {
    theta = 2.0 * kPi - theta;
    phi += kPi;
  }
  phi = std::fmod(phi, 2.0 * kPi);
  if (phi < 0) phi += 2.0 * kPi;
}

inline double nm_trampoline(const gsl_vector* x, void* params) {
  const auto& f = *static_cast<const std::function<double(double, double)>*>(params);
  return f(gsl_vector_get(x, 0), gsl_vector_get(x, 1));
}

/// Local Nelder-Mead minimization (GSL nmsimplex2) from (x0, y0).
inline std::pair<std::array<double, 2>, double> nelder_mead(const std::function<double(double, double)>& f,
                                                            double x0, double y0, double step, double tol,
                                                            int max_iter) {
  gsl_multimin_function fn{&nm_trampoline, 2, const_cast<void*>(static_cast<const void*>(&f))};
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(2), &gsl_vector_free);
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> ss(gsl_vector_alloc(2), &gsl_vector_free);
  gsl_vector_set(x.get(), 0, x0);
  gsl_vector_set(x.get(), 1, y0);
  gsl_vector_set_all(ss.get(), step);
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2), &gsl_multimin_fminimizer_free);
  gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), ss.get());
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), tol) == GSL_SUCCESS) break;
  }
  const gsl_vector* best = gsl_multimin_fminimizer_x(m.get());
  return {{gsl_vector_get(best, 0), gsl_vector_get(best, 1)}, gsl_multimin_fminimizer_minimum(m.get())};
}

}  // namespace detail

/// Q = S(rho_A) - S(rho_AB) + min_M sum_k p_k S(rho_{B|k}), minimized over rank-1 projective
/// measurements on the qubit factor A (factor 0). Grid over theta in [0, pi] (inclusive) and
/// phi in [0, 2 pi); ties go to the lexicographically smallest (theta, phi).
inline DiscordResult quantum_discord(const DensityMatrix& rho, const DiscordOptions& opt = {}) {
  if (opt.grid < 2) throw ConfigError("quantum_discord: grid must have at least 2 points");
  const detail::DiscordObjective objective(rho);
  const Matrix ra = partial_trace_matrix(rho.matrix(), rho.layout(), {0});
  const Matrix rb = partial_trace_matrix(rho.matrix(), rho.layout(), {1});
  const double sa = von_neumann_entropy(ra), sb = von_neumann_entropy(rb), sab = von_neumann_entropy(rho);

  DiscordResult out;
  double best = std::numeric_limits<double>::infinity();
  const double dtheta = kPi / (opt.grid - 1), dphi = 2.0 * kPi / opt.grid;
  for (int i = 0; i < opt.grid; ++i)
    for (int j = 0; j < opt.grid; ++j) {
      const double th = i * dtheta, ph = j * dphi;
      const double v = objective(th, ph);
      if (v < best - 1e-15) {
        best = v;
        out.theta = th;
        out.phi = ph;
      }
    }
  out.grid_minimum = best;
  out.conditional_entropy = best;
  if (opt.refine) {
    const std::function<double(double, double)> f = [&objective](double t, double p) { return objective(t, p); };
    auto [x, v] = detail::nelder_mead(f, out.theta, out.phi, 0.5 * std::min(dtheta, dphi), opt.nm_tol, opt.nm_max_iter);
    if (v < best) {
      double t = x[0], p = x[1];
      detail::canonical_angles(t, p);
      out.theta = t;
      out.phi = p;
      out.conditional_entropy = v;
    }
  }
  out.mutual_information = sa + sb - sab;
  out.discord = sa - sab + out.conditional_entropy;
  return out;
}

}  // namespace uscsim
