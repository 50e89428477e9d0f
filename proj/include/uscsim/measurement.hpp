#pragma once

// Coarse-grained quadrature readout of the readout resonator.
//
// Quadrature x = (b + b^dag)/2, so the vacuum has <x^2> = 1/4 and the position wavefunctions are
// psi_n(x) = 2^{1/4} phi_n(sqrt(2) x) with phi_n the standard Hermite functions. The binary
// effects are
//   (W_+)_{mn} = 1/2 int erfc(-x / (sqrt(2) sigma)) psi_m(x) psi_n(x) dx     (outcome x >= 0)
//   (W_-)_{mn} = 1/2 int erfc(+x / (sqrt(2) sigma)) psi_m(x) psi_n(x) dx     (outcome x <  0)
// evaluated with composite Gauss-Legendre panels, doubling nodes until entries settle.

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "uscsim/dynamics.hpp"
#include "uscsim/tensor_core.hpp"

namespace uscsim {

struct CoarseGrain {
  enum class Kind { Finite, Zero, Infinity };
  Kind kind = Kind::Finite;
  double sigma = 1.0;

  static CoarseGrain finite(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("coarse-grain sigma must be finite and > 0");
    return {Kind::Finite, s};
  }
  static CoarseGrain zero() { return {Kind::Zero, 0.0}; }
  static CoarseGrain infinity() { return {Kind::Infinity, std::numeric_limits<double>::infinity()}; }

  std::string describe() const {
    switch (kind) {
      case Kind::Zero: return "zero";
      case Kind::Infinity: return "infinity";
      default: return std::to_string(sigma);
    }
  }
  friend bool operator==(const CoarseGrain& a, const CoarseGrain& b) {
    return a.kind == b.kind && (a.kind != Kind::Finite || a.sigma == b.sigma);
  }
};

/// Binary POVM on the resonator factor.
struct EffectPair {
  Matrix W_plus;   ///< outcome x >= 0
  Matrix W_minus;  ///< outcome x < 0
};

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1] (Newton on P_n, Golub-Welsch accuracy is not needed).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// psi_0..psi_{n-1} at x for the x = (b + b^dag)/2 convention. The upward recurrence carries a
/// separate log scale so that far-tail values underflow cleanly instead of producing inf * 0.
inline void oscillator_functions(double x, int n, double* out) {
  const double xi = std::sqrt(2.0) * x;
  const double norm = std::pow(2.0, 0.25) * std::pow(kPi, -0.25);
  double log_scale = -0.5 * xi * xi;
  double prev = 0.0, cur = 1.0;
  constexpr double kBig = 1e150;
  const double log_big = std::log(kBig);
  for (int k = 0; k < n; ++k) {
    out[k] = log_scale < -700.0 ? 0.0 : norm * cur * std::exp(log_scale);
    const double next = std::sqrt(2.0 / (k + 1.0)) * xi * cur - std::sqrt(k / (k + 1.0)) * prev;
    prev = cur;
    cur = next;
    if (std::abs(cur) > kBig) {
      cur /= kBig;
      prev /= kBig;
      log_scale += log_big;
    }
  }
}

/// Both effects at one node count: sum over panels of w_q f_pm(x_q) psi(x_q) psi(x_q)^T.
inline std::pair<Matrix, Matrix> effect_quadrature(int n, const std::vector<double>& breaks, int nodes,
                                                   const std::function<double(double)>& f_plus) {
  const auto [gx, gw] = gauss_legendre(nodes);
  Eigen::MatrixXd plus = Eigen::MatrixXd::Zero(n, n), minus = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd psi(n);
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int q = 0; q < nodes; ++q) {
      const double x = mid + half * gx[q];
      const double fp = f_plus(x);
      oscillator_functions(x, n, psi.data());
      const double w = half * gw[q];
      if (fp != 0.0) plus.selfadjointView<Eigen::Lower>().rankUpdate(psi, w * fp);
      if (fp != 1.0) minus.selfadjointView<Eigen::Lower>().rankUpdate(psi, w * (1.0 - fp));
    }
  }
  Eigen::MatrixXd fp = plus.selfadjointView<Eigen::Lower>();
  Eigen::MatrixXd fm = minus.selfadjointView<Eigen::Lower>();
  return {fp.cast<cplx>(), fm.cast<cplx>()};
}

}  // namespace detail

/// Uncached construction; use quadrature_effects() in production code.
inline EffectPair build_quadrature_effects(const CoarseGrain& cg, int n, double tol = 1e-10) {
  if (n < 2) throw DimensionError("quadrature_effects: resonator dimension must be >= 2");
  if (cg.kind == CoarseGrain::Kind::Infinity) {
    const Matrix half = 0.5 * identity(n);
    return {half, half};
  }
  const double L = 4.0 + 2.0 * std::sqrt(static_cast<double>(n));
  std::vector<double> breaks{-L};
  if (cg.kind == CoarseGrain::Kind::Finite && 8.0 * cg.sigma < L) breaks.push_back(-8.0 * cg.sigma);
  breaks.push_back(0.0);
  if (cg.kind == CoarseGrain::Kind::Finite && 8.0 * cg.sigma < L) breaks.push_back(8.0 * cg.sigma);
  breaks.push_back(L);

  // erfc(-u) + erfc(u) = 2, so the x < 0 weight is 1 - f_plus exactly.
  const std::function<double(double)> f_plus = [&cg](double x) {
    if (cg.kind == CoarseGrain::Kind::Zero) return x > 0.0 ? 1.0 : (x == 0.0 ? 0.5 : 0.0);
    return 0.5 * std::erfc(-x / (std::sqrt(2.0) * cg.sigma));
  };
  int nodes = 32;
  auto [plus, minus] = detail::effect_quadrature(n, breaks, nodes, f_plus);
  while (true) {
    nodes *= 2;
    if (nodes > 4096) throw NumericalError("quadrature_effects: node doubling did not converge");
    auto [p2, m2] = detail::effect_quadrature(n, breaks, nodes, f_plus);
    const double change = std::max(max_abs(p2 - plus), max_abs(m2 - minus));
    plus.swap(p2);
    minus.swap(m2);
    if (change < tol) break;
  }
  plus = 0.5 * (plus + plus.adjoint()).eval();
  minus = 0.5 * (minus + minus.adjoint()).eval();
  return {plus, minus};
}

/// Thread-safe memo of effect pairs keyed by (sigma kind, sigma, dimension).
class EffectCache {
 public:
  EffectPair get(const CoarseGrain& cg, int n) {
    const Key key{static_cast<int>(cg.kind), cg.kind == CoarseGrain::Kind::Finite ? cg.sigma : 0.0, n};
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    EffectPair built = build_quadrature_effects(cg, n);
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(key, std::move(built)).first->second;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }

 private:
  using Key = std::tuple<int, double, int>;
  mutable std::mutex mu_;
  std::map<Key, EffectPair> cache_;
};

inline EffectCache& effect_cache() {
  static EffectCache cache;
  return cache;
}

inline EffectPair quadrature_effects(const CoarseGrain& cg, int n) { return effect_cache().get(cg, n); }

// ---------------------------------------------------------------------------
// Conditioning

namespace detail {

/// Tr_slot[(I (x) W) rho] without forming the embedded operator.
inline Matrix branch_unnormalized(const Matrix& rho, const HilbertLayout& layout, int slot, const Matrix& w) {
  std::vector<int> keep;
  for (int k = 0; k < static_cast<int>(layout.factors()); ++k)
    if (k != slot) keep.push_back(k);
  const HilbertLayout sub = layout.subset(keep);
  const Index nk = sub.total();
  const Index nr = layout.dim(slot);
  const auto [ki, ti] = split_indices(layout, keep);
  std::vector<Index> flat(layout.total());
  for (Index f = 0; f < layout.total(); ++f) flat[ti[f] * nk + ki[f]] = f;
  // out_ab = sum_{i,k} W_ik rho_{(a,k),(b,i)}
  Matrix out = Matrix::Zero(nk, nk);
  for (Index i = 0; i < nr; ++i)
    for (Index k = 0; k < nr; ++k) {
      const cplx wik = w(i, k);
      if (wik == cplx(0.0)) continue;
      const Index* rk = &flat[k * nk];
      const Index* ci = &flat[i * nk];
      for (Index b = 0; b < nk; ++b)
        for (Index a = 0; a < nk; ++a) out(a, b) += wik * rho(rk[a], ci[b]);
    }
  return out;
}

inline std::vector<int> all_but(const HilbertLayout& layout, int slot) {
  std::vector<int> keep;
  for (int k = 0; k < static_cast<int>(layout.factors()); ++k)
    if (k != slot) keep.push_back(k);
  return keep;
}

}  // namespace detail

/// Probability of outcome x >= 0.
inline double probability_ge(const DensityMatrix& rho, const CoarseGrain& cg, int slot) {
  const EffectPair e = quadrature_effects(cg, rho.layout().dim(slot));
  const Matrix red = partial_trace_matrix(rho.matrix(), rho.layout(), {slot});
  return (e.W_plus * red).trace().real();
}

struct ConditionalStates {
  std::optional<DensityMatrix> ge;  ///< x >= 0 branch (absent when p_ge < 1e-12)
  std::optional<DensityMatrix> lt;  ///< x < 0 branch
  double p_ge = 0.0;
  double p_lt = 0.0;
};

inline constexpr double kMinBranchProbability = 1e-12;

/// Like conditional_states() but absent branches are reported instead of thrown.
inline ConditionalStates try_conditional_states(const DensityMatrix& rho, const CoarseGrain& cg, int slot) {
  const HilbertLayout& layout = rho.layout();
  if (slot < 0 || slot >= static_cast<int>(layout.factors()))
    throw DimensionError("conditional_states: slot out of range");
  if (layout.factors() < 2) throw DimensionError("conditional_states: need a composite state");
  const EffectPair e = quadrature_effects(cg, layout.dim(slot));
  const HilbertLayout sub = layout.subset(detail::all_but(layout, slot));
  ConditionalStates out;
  Matrix ge = detail::branch_unnormalized(rho.matrix(), layout, slot, e.W_plus);
  Matrix lt = detail::branch_unnormalized(rho.matrix(), layout, slot, e.W_minus);
  ge = 0.5 * (ge + ge.adjoint()).eval();
  lt = 0.5 * (lt + lt.adjoint()).eval();
  out.p_ge = ge.trace().real();
  out.p_lt = lt.trace().real();
  const StateTolerances tol{1e-7, 1e-9, -1e-7};
  if (out.p_ge >= kMinBranchProbability) out.ge = DensityMatrix(Operator(sub, ge / out.p_ge), tol);
  if (out.p_lt >= kMinBranchProbability) out.lt = DensityMatrix(Operator(sub, lt / out.p_lt), tol);
  return out;
}

struct ConditionalPair {
  DensityMatrix ge;
  DensityMatrix lt;
  double p_ge = 0.0;
  double p_lt = 0.0;
};

/// Post-measurement states of the remaining factors for both outcomes.
/// Throws DegenerateOutcomeError if either branch has probability below 1e-12.
inline ConditionalPair conditional_states(const DensityMatrix& rho, const CoarseGrain& cg, int slot) {
  auto c = try_conditional_states(rho, cg, slot);
  if (!c.ge) throw DegenerateOutcomeError("outcome x >= 0 has probability " + detail::sci(c.p_ge));
  if (!c.lt) throw DegenerateOutcomeError("outcome x < 0 has probability " + detail::sci(c.p_lt));
  return {std::move(*c.ge), std::move(*c.lt), c.p_ge, c.p_lt};
}

enum class Outcome { Ge, Lt };

inline std::string to_string(Outcome o) { return o == Outcome::Ge ? "x>=0" : "x<0"; }

/// Per-time probability of the x < 0 outcome.
inline std::vector<double> lt_probability(const Trajectory& traj, const CoarseGrain& cg, int slot) {
  std::vector<double> out;
  out.reserve(traj.states.size());
  for (const auto& s : traj.states) out.push_back(std::clamp(1.0 - probability_ge(s, cg, slot), 0.0, 1.0));
  return out;
}

/// Per-time probability of the low-amplitude outcome. Which quadrature sign is the low-amplitude
/// state depends on the drive regime (see high_low_split); the default is x < 0.
inline std::vector<double> low_amplitude_probability(const Trajectory& traj, const CoarseGrain& cg, int slot,
                                                     Outcome low_side = Outcome::Lt) {
  auto p = lt_probability(traj, cg, slot);
  if (low_side == Outcome::Ge)
    for (double& v : p) v = 1.0 - v;
  return p;
}

// ---------------------------------------------------------------------------
// High / low amplitude classification

struct HighLowSplit {
  std::optional<DensityMatrix> high;  ///< composite post-measurement state, Lueders rule
  std::optional<DensityMatrix> low;
  double n_high = 0.0;
  double n_low = 0.0;
  double p_high = 0.0;
  Outcome high_side = Outcome::Lt;  ///< quadrature sign of the high-amplitude branch
  bool bimodal = true;              ///< false when the branches' photon numbers barely differ
};

/// Sharp (sigma -> 0) split at x = 0. The branch with the larger conditional <b^dag b> is the
/// high-amplitude state. Post-measurement composite states use Kraus operators sqrt(W_+-);
/// for sigma -> 0 these are the half-line projectors.
inline HighLowSplit high_low_split(const DensityMatrix& rho, int slot) {
  const HilbertLayout& layout = rho.layout();
  const int n = layout.dim(slot);
  const EffectPair e = quadrature_effects(CoarseGrain::zero(), n);
  auto root = [](const Matrix& w) {
    return hermitian_function(w, [](double v) { return std::sqrt(std::max(v, 0.0)); });
  };
  const Operator kge = embed(root(e.W_plus), layout, slot);
  const Operator klt = embed(root(e.W_minus), layout, slot);
  const Operator num = embed(number_op(n), layout, slot);
  const Matrix rge = kge.matrix() * rho.matrix() * kge.matrix();
  const Matrix rlt = klt.matrix() * rho.matrix() * klt.matrix();
  const double pge = rge.trace().real(), plt = rlt.trace().real();
  if (pge < kMinBranchProbability && plt < kMinBranchProbability)
    throw DegenerateOutcomeError("high_low_split: both branches empty");
  const double nge = pge > kMinBranchProbability ? (num.matrix() * rge).trace().real() / pge : 0.0;
  const double nlt = plt > kMinBranchProbability ? (num.matrix() * rlt).trace().real() / plt : 0.0;
  HighLowSplit out;
  const bool ge_high = pge > kMinBranchProbability && (plt < kMinBranchProbability || nge > nlt);
  out.high_side = ge_high ? Outcome::Ge : Outcome::Lt;
  const StateTolerances tol{1e-7, 1e-9, -1e-7};
  auto make = [&](const Matrix& m, double p) -> std::optional<DensityMatrix> {
    if (p < kMinBranchProbability) return std::nullopt;
    Matrix s = m / p;
    s = 0.5 * (s + s.adjoint()).eval();
    return DensityMatrix(Operator(layout, std::move(s)), tol);
  };
  if (ge_high) {
    out.high = make(rge, pge);
    out.low = make(rlt, plt);
    out.n_high = nge;
    out.n_low = nlt;
    out.p_high = pge / (pge + plt);
  } else {
    out.high = make(rlt, plt);
    out.low = make(rge, pge);
    out.n_high = nlt;
    out.n_low = nge;
    out.p_high = plt / (pge + plt);
  }
  out.bimodal = std::abs(nge - nlt) > 0.25 * std::max(1.0, 0.5 * (nge + nlt));
  return out;
}

}  // namespace uscsim
