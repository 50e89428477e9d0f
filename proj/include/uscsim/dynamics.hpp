#pragma once

// Lindblad master-equation integration.
//
// The generator stores H_eff = H - (i/2) sum_k r_k L_k^dag L_k and sqrt(r_k) L_k as sparse
// matrices and applies them to a dense rho, so memory stays O(dim^2):
//   d rho/dt = -i H_eff rho + i (H_eff rho)^dag + sum_k (sqrt(r_k) L_k) rho (sqrt(r_k) L_k)^dag.
// Time stepping is Dormand-Prince 5(4) with per-step error control; steps are clipped to land
// exactly on output times. The trace is never renormalized; drift is reported as an error.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "uscsim/models.hpp"
#include "uscsim/tensor_core.hpp"

namespace uscsim {

struct CollapseOp {
  Operator op;
  double rate = 0.0;
};

class LindbladGenerator {
 public:
  using Sparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;

  LindbladGenerator(Operator hamiltonian, std::vector<CollapseOp> collapse = {})
      : h_(std::move(hamiltonian)), collapse_(std::move(collapse)) {
    h_.require_hermitian();
    Matrix heff = h_.matrix();
    for (const auto& c : collapse_) {
      if (c.op.layout() != h_.layout()) throw DimensionError("collapse operator layout mismatch");
      if (!(c.rate >= 0.0)) throw ConfigError("collapse rates must be non-negative");
      if (c.rate == 0.0) continue;
      const Matrix l = std::sqrt(c.rate) * c.op.matrix();
      heff -= 0.5 * kI * (l.adjoint() * l);
      jumps_.push_back(to_sparse(l));
    }
    heff_ = to_sparse(heff);
  }

  const Operator& hamiltonian() const noexcept { return h_; }
  const std::vector<CollapseOp>& collapse_ops() const noexcept { return collapse_; }
  const HilbertLayout& layout() const noexcept { return h_.layout(); }
  Index dim() const noexcept { return h_.dim(); }

  /// out = L(rho) for Hermitian rho. The result is exactly Hermitian in floating point: the
  /// shortcut -iA + iA^dag is only the Lindblad map on Hermitian input, so any rounding-level
  /// anti-Hermitian part left in a stage value would be propagated by a wrong (unstable) map.
  void apply(const Matrix& rho, Matrix& out) const {
    if (rho.rows() != dim() || rho.cols() != dim()) throw DimensionError("generator/state size mismatch");
    Matrix a = heff_ * rho;
    out.noalias() = -kI * a;
    out.noalias() += kI * a.adjoint();
    if (jumps_.empty()) return;
    Matrix jump = Matrix::Zero(dim(), dim());
    for (const auto& l : jumps_) {
      a.noalias() = l * rho;
      Matrix at = a.adjoint();
      jump.noalias() += l * at;
    }
    // Symmetrize before adding: two sequential half-term updates round differently at (j,k)
    // and (k,j).
    out += Matrix(0.5 * (jump + jump.adjoint()));
  }

 private:
  static Sparse to_sparse(const Matrix& m) {
    const double cut = 1e-15 * std::max(1.0, max_abs(m));
    Sparse s = m.sparseView(1.0, cut);
    s.makeCompressed();
    return s;
  }

  Operator h_;
  std::vector<CollapseOp> collapse_;
  Sparse heff_;
  std::vector<Sparse> jumps_;
};

/// -i[H, rho] + sum r (L rho L^dag - {L^dag L, rho}/2)
inline Operator lindblad_rhs(const LindbladGenerator& gen, const Operator& rho) {
  if (rho.layout() != gen.layout()) throw DimensionError("lindblad_rhs: layout mismatch");
  Matrix out(gen.dim(), gen.dim());
  gen.apply(rho.matrix(), out);
  return {gen.layout(), std::move(out)};
}

inline Operator lindblad_rhs(const LindbladGenerator& gen, const DensityMatrix& rho) {
  return lindblad_rhs(gen, rho.op());
}

// ---------------------------------------------------------------------------

struct TimeGrid {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> outputs;
  double rtol = 1e-8;
  double atol = 1e-10;

  static TimeGrid uniform(double t0, double t1, double dt, double rtol = 1e-8, double atol = 1e-10) {
    if (!(dt > 0.0) || !(t1 >= t0)) throw ConfigError("time grid needs dt > 0 and t_end >= t_start");
    TimeGrid g{t0, t1, {}, rtol, atol};
    const long n = std::lround((t1 - t0) / dt);
    for (long k = 0; k <= n; ++k) g.outputs.push_back(std::min(t1, t0 + k * dt));
    if (g.outputs.back() < t1) g.outputs.push_back(t1);
    return g;
  }

  void validate() const {
    if (!(t_end >= t_start)) throw ConfigError("time grid: t_end < t_start");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("time grid: tolerances must be positive");
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      if (outputs[k] < t_start || outputs[k] > t_end) throw ConfigError("time grid: output outside span");
      if (k > 0 && !(outputs[k] > outputs[k - 1])) throw ConfigError("time grid: outputs not increasing");
    }
  }
};

/// Tolerances applied to states produced by time stepping.
inline constexpr StateTolerances kEvolvedStateTolerances{1e-7, 1e-9, -1e-7};

struct EvolveOptions {
  double trace_tol = 1e-7;
  double leakage_tol = 1e-6;
  /// Bosonic factors whose top two Fock levels are monitored. Empty: every factor labelled
  /// "resonator" or "cavity".
  std::vector<int> monitored_slots;
  double max_step = std::numeric_limits<double>::infinity();
  double min_step = 1e-12;
  long max_steps = 50'000'000;
  bool store_states = true;
  bool validate_states = true;
};

struct EvolveStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
  double max_trace_drift = 0.0;
  double max_leakage = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;  ///< empty when store_states = false
  EvolveStats stats;
};

using Observer = std::function<void(double, const DensityMatrix&)>;

namespace detail {

/// Indices (flattened) belonging to the top two Fock levels of any monitored slot.
inline std::vector<Index> edge_indices(const HilbertLayout& layout, std::vector<int> slots) {
  if (slots.empty())
    for (std::size_t k = 0; k < layout.factors(); ++k)
      if (layout.labels()[k] == "resonator" || layout.labels()[k] == "cavity") slots.push_back(static_cast<int>(k));
  const auto strides = layout.strides();
  std::vector<Index> out;
  for (Index f = 0; f < layout.total(); ++f) {
    for (int s : slots) {
      const int d = layout.dim(s);
      if (d < 3) continue;
      const int digit = static_cast<int>((f / strides[s]) % d);
      if (digit >= d - 2) {
        out.push_back(f);
        break;
      }
    }
  }
  return out;
}

inline double edge_population(const Matrix& rho, const std::vector<Index>& idx) {
  double p = 0.0;
  for (Index f : idx) p += rho(f, f).real();
  return p;
}

struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

/// Max-norm of err / (atol + rtol max(|y0|, |y1|)). A root-mean-square norm over dim^2 entries
/// lets stiff, nearly-empty Fock coherences drift up to ~dim * atol before they register.
inline double scaled_error(const Matrix& err, const Matrix& y0, const Matrix& y1, double atol, double rtol) {
  const auto mag = y0.cwiseAbs2().cwiseMax(y1.cwiseAbs2()).cwiseSqrt().array();
  return std::sqrt((err.cwiseAbs2().array() / (atol + rtol * mag).square()).maxCoeff());
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

/// Integrates the master equation from grid.t_start to grid.t_end, emitting states at
/// grid.outputs. Throws NumericalError on step-size underflow or trace drift and
/// TruncationError when the monitored Fock edge population exceeds opts.leakage_tol.
inline Trajectory evolve(const LindbladGenerator& gen, const DensityMatrix& rho0, const TimeGrid& grid,
                         const EvolveOptions& opts = {}, const Observer& observer = {}) {
  grid.validate();
  if (rho0.layout() != gen.layout()) throw DimensionError("evolve: state/generator layout mismatch");
  using RK = detail::Dopri5;
  const auto edges = detail::edge_indices(gen.layout(), opts.monitored_slots);
  const Index n = gen.dim();

  Trajectory traj;
  Matrix y = 0.5 * (rho0.matrix() + rho0.matrix().adjoint());
  double t = grid.t_start;
  std::size_t next_out = 0;

  auto emit = [&](double time) {
    Matrix sym = 0.5 * (y + y.adjoint());
    const StateTolerances tol =
        opts.validate_states ? kEvolvedStateTolerances : StateTolerances{1e300, 1e300, -1e300};
    DensityMatrix state(gen.layout(), std::move(sym), tol);
    if (observer) observer(time, state);
    traj.times.push_back(time);
    if (opts.store_states) traj.states.push_back(std::move(state));
  };
  auto check_state = [&](double time) {
    const double drift = std::abs(y.trace() - 1.0);
    traj.stats.max_trace_drift = std::max(traj.stats.max_trace_drift, drift);
    if (drift > opts.trace_tol)
      throw NumericalError("trace drift " + detail::sci(drift) + " at t = " + std::to_string(time) + " ns");
    const double leak = detail::edge_population(y, edges);
    traj.stats.max_leakage = std::max(traj.stats.max_leakage, leak);
    if (leak > opts.leakage_tol)
      throw TruncationError("Fock-edge population at t = " + std::to_string(time) + " ns", leak);
  };

  check_state(t);
  while (next_out < grid.outputs.size() && grid.outputs[next_out] <= t) {
    emit(grid.outputs[next_out]);
    ++next_out;
  }
  if (grid.t_end <= t) return traj;

  Matrix k1(n, n), k2(n, n), k3(n, n), k4(n, n), k5(n, n), k6(n, n), k7(n, n), tmp(n, n), ynew(n, n);
  gen.apply(y, k1);
  ++traj.stats.rhs_evaluations;

  // Initial step (Hairer-Norsett-Wanner heuristic).
  double h;
  {
    const double d0 = detail::scaled_error(y, y, y, grid.atol, grid.rtol);
    const double d1 = detail::scaled_error(k1, y, y, grid.atol, grid.rtol);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, grid.t_end - t);
    tmp = y + h0 * k1;
    gen.apply(tmp, k2);
    ++traj.stats.rhs_evaluations;
    const double d2 = detail::scaled_error(k2 - k1, y, y, grid.atol, grid.rtol) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, opts.max_step});
  }

  bool last_rejected = false;
  while (t < grid.t_end) {
    if (traj.stats.accepted + traj.stats.rejected > opts.max_steps)
      throw NumericalError("evolve: step budget exhausted");
    // Land on the next output time (or the end of the span).
    const double target = next_out < grid.outputs.size() ? grid.outputs[next_out] : grid.t_end;
    bool lands = false;
    if (t + h >= target - 1e-12 * std::max(1.0, std::abs(target))) {
      h = target - t;
      lands = true;
    }
    if (h < opts.min_step) throw NumericalError("evolve: step size underflow at t = " + std::to_string(t));

    tmp = y + h * (RK::a21 * k1);
    gen.apply(tmp, k2);
    tmp = y + h * (RK::a31 * k1 + RK::a32 * k2);
    gen.apply(tmp, k3);
    tmp = y + h * (RK::a41 * k1 + RK::a42 * k2 + RK::a43 * k3);
    gen.apply(tmp, k4);
    tmp = y + h * (RK::a51 * k1 + RK::a52 * k2 + RK::a53 * k3 + RK::a54 * k4);
    gen.apply(tmp, k5);
    tmp = y + h * (RK::a61 * k1 + RK::a62 * k2 + RK::a63 * k3 + RK::a64 * k4 + RK::a65 * k5);
    gen.apply(tmp, k6);
    ynew = y + h * (RK::b1 * k1 + RK::b3 * k3 + RK::b4 * k4 + RK::b5 * k5 + RK::b6 * k6);
    gen.apply(ynew, k7);
    traj.stats.rhs_evaluations += 6;

    tmp = h * (RK::e1 * k1 + RK::e3 * k3 + RK::e4 * k4 + RK::e5 * k5 + RK::e6 * k6 + RK::e7 * k7);
    const double err = detail::scaled_error(tmp, y, ynew, grid.atol, grid.rtol);

    if (err <= 1.0) {
      t = lands ? target : t + h;
      y.swap(ynew);
      k1.swap(k7);
      ++traj.stats.accepted;
      check_state(t);
      while (next_out < grid.outputs.size() && grid.outputs[next_out] <= t + 1e-12 * std::max(1.0, std::abs(t))) {
        emit(grid.outputs[next_out]);
        ++next_out;
      }
      double fac = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
      fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
      // A clipped step says nothing about the natural step size; do not shrink on it.
      if (!lands || fac > 1.0) h *= fac;
      h = std::min(h, opts.max_step);
      last_rejected = false;
    } else {
      ++traj.stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
    }
  }
  return traj;
}

struct SteadyState {
  DensityMatrix state;
  double time = 0.0;      ///< evolution time needed
  double residual = 0.0;  ///< max |d rho/dt| at the end
};

/// Long-time evolution until max|d rho/dt| < `stationarity`.
inline SteadyState steady_state(const LindbladGenerator& gen, const DensityMatrix& rho0, double chunk,
                                double t_max, double stationarity = 1e-9, double rtol = 1e-10,
                                double atol = 1e-12, const EvolveOptions& opts = {}) {
  EvolveOptions o = opts;
  o.store_states = true;
  DensityMatrix rho = rho0;
  double t = 0.0;
  Matrix d(gen.dim(), gen.dim());
  while (true) {
    gen.apply(rho.matrix(), d);
    const double res = max_abs(d);
    if (res < stationarity) return {rho, t, res};
    if (t >= t_max) throw NumericalError("steady_state: not stationary after t = " + std::to_string(t));
    TimeGrid grid{0.0, chunk, {chunk}, rtol, atol};
    auto traj = evolve(gen, rho, grid, o);
    rho = traj.states.back();
    t += chunk;
  }
}

// ---------------------------------------------------------------------------
// Generators for the models used in scenarios

/// Dressed USC levels (Rabi eigenbasis, energies relative to the ground state) coupled to the
/// driven Kerr resonator in its rotating frame:
///   H = sum_k E_k |k><k| + H_nr + J sigma_z^(dressed) (x) b^dag b,   collapse sqrt(kappa) b.
inline LindbladGenerator dressed_generator(const DressedUsc& usc, const ResonatorParams& res, int resonator_cut) {
  const HilbertLayout layout = dressed_layout(usc.levels(), resonator_cut);
  Matrix e = Matrix::Zero(usc.levels(), usc.levels());
  for (int k = 0; k < usc.levels(); ++k) e(k, k) = usc.energies(k);
  Operator h = embed(e, layout, 0);
  h += nonlinear_resonator_hamiltonian(res, layout, Frame::Rotating);
  Matrix sz = 0.5 * (usc.sigma_z + usc.sigma_z.adjoint());
  h += res.J * (embed(sz, layout, 0) * embed(number_op(resonator_cut), layout, 1));
  std::vector<CollapseOp> c;
  if (res.kappa > 0.0) c.push_back({embed(destroy(resonator_cut), layout, 1), res.kappa});
  return {std::move(h), std::move(c)};
}

/// Two-level model (w_eff/2) sigma_z' + H_nr + J sigma_x' b^dag b with resonator loss and
/// optional USC relaxation gamma1 D[|G><E|] and dephasing gamma2 D[|E><E| - |G><G|].
inline LindbladGenerator two_level_generator(const TwoLevelParams& tl, const ResonatorParams& res, int resonator_cut,
                                             const UscLossParams& loss = {}) {
  loss.validate();
  const HilbertLayout layout = two_level_layout(resonator_cut);
  Operator h = two_level_rabi(tl, layout);
  h += nonlinear_resonator_hamiltonian(res, layout, Frame::Rotating);
  h += two_level_interaction(tl, layout);
  std::vector<CollapseOp> c;
  if (res.kappa > 0.0) c.push_back({embed(destroy(resonator_cut), layout, 1), res.kappa});
  if (loss.gamma1 > 0.0) {
    Matrix lower = Matrix::Zero(2, 2);
    lower(0, 1) = 1.0;  // |G><E|
    c.push_back({embed(lower, layout, 0), loss.gamma1});
  }
  if (loss.gamma2 > 0.0) c.push_back({embed(sigma_z_prime(), layout, 0), loss.gamma2});
  return {std::move(h), std::move(c)};
}

/// Undressed [qubit, cavity, resonator] model; feasible only for small cuts.
inline LindbladGenerator fock_generator(const RabiParams& p, const ResonatorParams& res, int cavity_cut,
                                        int resonator_cut) {
  const HilbertLayout layout = full_layout(cavity_cut, resonator_cut);
  Operator h = rabi_hamiltonian(p, layout);
  h += nonlinear_resonator_hamiltonian(res, layout, Frame::Rotating);
  h += interaction_hamiltonian(res.J, layout);
  std::vector<CollapseOp> c;
  if (res.kappa > 0.0) c.push_back({embed(destroy(resonator_cut), layout, 2), res.kappa});
  return {std::move(h), std::move(c)};
}

inline Trajectory two_level_loss_evolve(const TwoLevelParams& tl, const ResonatorParams& res, double gamma1,
                                        double gamma2, const DensityMatrix& rho0, const TimeGrid& grid,
                                        const EvolveOptions& opts = {}, const Observer& observer = {}) {
  if (rho0.layout().factors() != 2 || rho0.layout().dim(0) != 2)
    throw DimensionError("two_level_loss_evolve: state must live on a 2 x N_b layout");
  const auto gen = two_level_generator(tl, res, rho0.layout().dim(1), {gamma1, gamma2});
  return evolve(gen, DensityMatrix(gen.layout(), rho0.matrix()), grid, opts, observer);
}

// ---------------------------------------------------------------------------
// Eigenbasis dissipators for the USC system

struct SpectralRates {
  std::function<double(double)> kappa_q = [](double) { return 0.0; };
  std::function<double(double)> kappa_r = [](double) { return 0.0; };
  std::function<double(double)> gamma_dep = [](double) { return 0.0; };

  static SpectralRates flat(double kq, double kr, double gdep) {
    return {[kq](double) { return kq; }, [kr](double) { return kr; }, [gdep](double) { return gdep; }};
  }
};

struct UscDissipators {
  std::vector<CollapseOp> ops;
  /// (j, k) pairs whose Bohr frequency fell below the degeneracy tolerance. Their jump
  /// |j><k| is still included with rates evaluated at the measured splitting.
  std::vector<std::pair<int, int>> degenerate_pairs;
  double gamma1 = 0.0;  ///< Gamma^{10}_{sz} + Gamma^{10}_X
  double gamma2 = 0.0;  ///< (Phi_0^dep)^2
};

/// Secular-approximation jump operators in the dressed eigenbasis: |j><k| (k > j) with rate
/// kappa_q(D) |<j|sz|k>|^2 + kappa_r(D) |<j|X|k>|^2, D = E_k - E_j, plus one dephasing operator
/// sum_j Phi_j |j><j| with Phi_j = sqrt(gamma_dep(0)/2) <j|sx|j>. Cross-dephasing terms between
/// different levels are omitted. Operators are embedded in the layout's "usc" slot.
inline UscDissipators usc_dissipators(const DressedUsc& usc, const SpectralRates& rates, const HilbertLayout& layout,
                                      double degeneracy_tol = 1e-9) {
  const int slot = layout.slot("usc");
  const int k_levels = usc.levels();
  if (layout.dim(slot) != k_levels) throw DimensionError("usc_dissipators: usc factor size mismatch");
  UscDissipators out;
  const double scale = std::max(1.0, usc.energies.cwiseAbs().maxCoeff());
  for (int j = 0; j < k_levels; ++j)
    for (int k = j + 1; k < k_levels; ++k) {
      const double delta = usc.energies(k) - usc.energies(j);
      if (std::abs(delta) < degeneracy_tol * scale) out.degenerate_pairs.emplace_back(j, k);
      const double rate = rates.kappa_q(delta) * std::norm(usc.sigma_z(j, k)) +
                          rates.kappa_r(delta) * std::norm(usc.position(j, k));
      if (j == 0 && k == 1) out.gamma1 = rate;
      if (rate <= 0.0) continue;
      Matrix jump = Matrix::Zero(k_levels, k_levels);
      jump(j, k) = 1.0;
      out.ops.push_back({embed(jump, layout, slot), rate});
    }
  const double phi = std::sqrt(std::max(0.0, rates.gamma_dep(0.0)) / 2.0);
  Matrix deph = Matrix::Zero(k_levels, k_levels);
  for (int j = 0; j < k_levels; ++j) deph(j, j) = phi * usc.sigma_x(j, j).real();
  out.gamma2 = std::norm(deph(0, 0));
  if (max_abs(deph) > 0.0) out.ops.push_back({embed(deph, layout, slot), 1.0});
  return out;
}

}  // namespace uscsim
