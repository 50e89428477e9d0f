#include <gtest/gtest.h>

#include "uscsim/analysis.hpp"

using namespace uscsim;

namespace {
constexpr double kTwoPi = 2.0 * kPi;
const RabiParams kFig1{kTwoPi * 0.299, kTwoPi * 4.920, kTwoPi * 6.336};

Operator cavity_position(const HilbertLayout& l) {
  const Matrix a = destroy(l.dim(1));
  return embed(Matrix(a + a.adjoint()), l, 1);
}
}  // namespace

TEST(FrequencySplit, HarmonicOscillator) {
  const int n = 10;
  const Operator h(0.7 * number_op(n));
  const Operator x(Matrix(destroy(n) + create(n)));
  const auto d = frequency_split(x, h);
  EXPECT_LT((d.X_plus.matrix() - destroy(n)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((d.X_minus.matrix() - create(n)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(d.degenerate_pairs.empty());
}

TEST(FrequencySplit, RabiInvariants) {
  const auto l = usc_layout(20);
  const Operator h = rabi_hamiltonian(kFig1, l);
  const Operator x = cavity_position(l);
  const auto d = frequency_split(x, h);
  EXPECT_LT((d.X_plus.matrix() + d.X_minus.matrix() + d.X_static.matrix() - x.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((d.X_plus.matrix() + d.X_minus.matrix() - x.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((d.X_minus.matrix() - d.X_plus.matrix().adjoint()).cwiseAbs().maxCoeff(), 1e-10);
  // Idempotence.
  const auto again = frequency_split(d.X_plus, h);
  EXPECT_LT((again.X_plus.matrix() - d.X_plus.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  // Only lowering transitions, in the energy eigenbasis.
  const auto es = eig_hermitian(h);
  const Matrix xp = es.vectors.adjoint() * d.X_plus.matrix() * es.vectors;
  for (Index j = 0; j < xp.rows(); ++j)
    for (Index k = 0; k < xp.cols(); ++k)
      if (std::abs(xp(j, k)) > 1e-9) EXPECT_LT(es.values(j), es.values(k));
  // The ground state emits nothing.
  const Vector g = es.vectors.col(0);
  EXPECT_LT(std::abs(g.dot(d.X_minus.matrix() * d.X_plus.matrix() * g)), 1e-12);
}

TEST(FrequencySplit, DegeneratePairsAreFlagged) {
  RabiParams p = kFig1;
  p.omega_q = 0.0;
  const auto l = usc_layout(20);
  const Operator h = rabi_hamiltonian(p, l);
  // Within each degenerate doublet the position acts like diag(x, -x) and the qubit sigma_x
  // like an off-diagonal coupling; no eigenbasis makes both diagonal, so one of them must flag.
  const auto d = frequency_split(cavity_position(l), h);
  const auto s = frequency_split(embed(sigma_x(), l, 0), h);
  EXPECT_FALSE(d.degenerate_pairs.empty() && s.degenerate_pairs.empty());
  EXPECT_GT(max_abs(d.X_static.matrix()), 0.1);
  EXPECT_GT(max_abs(s.X_static.matrix()), 0.1);
  EXPECT_THROW(frequency_split(cavity_position(l), Operator(identity(40))), DimensionError);
}

TEST(Infidelity, Limits) {
  EXPECT_EQ(infidelity_series(RabiParams{0.3, 0.0, 1.0}), 0.0);
  EXPECT_EQ(adiabatic_sum(0.0), 0.0);
  const double f1 = infidelity_series(RabiParams{0.1, 0.8, 1.0});
  const double f2 = infidelity_series(RabiParams{0.2, 0.8, 1.0});
  EXPECT_NEAR(f2 / f1, 4.0, 1e-12);
  const auto c = infidelity_candidates(kFig1);
  EXPECT_NEAR(c.full, 4.0 * c.quarter, 1e-18);
}

TEST(Infidelity, SeriesAgainstDirectSum) {
  const double a = 0.99;
  double s = 0.0, term = 1.0;
  for (int n = 1; n < 200; ++n) {
    term *= 4.0 * a * a / n;
    s += term / (static_cast<double>(n) * n);
  }
  EXPECT_NEAR(adiabatic_sum(a), s, 1e-14 * s);
}

TEST(Infidelity, MonotoneAndSmallAcrossValidationRange) {
  for (double ratio : {0.51, 0.78, 0.99}) {
    double last = 0.0;
    for (int k = 0; k <= 20; ++k) {
      const double wq = kTwoPi * (0.1 + 0.4 * k / 20.0);
      const double f = infidelity_series(RabiParams{wq, ratio * kTwoPi * 6.336, kTwoPi * 6.336});
      EXPECT_GT(f, last);
      EXPECT_LT(f, 0.05);
      last = f;
    }
  }
}

TEST(Infidelity, QuarterPrefactorMatchesExactDiagonalization) {
  const RabiParams p{kTwoPi * 0.3, 0.78 * kTwoPi * 6.336, kTwoPi * 6.336};
  const auto c = infidelity_candidates(p);
  const auto fid = exact_fidelity(p, 40);
  const double one_minus = 1.0 - fid.ground;
  EXPECT_LT(std::abs(one_minus - c.quarter), 0.3 * c.quarter);
  EXPECT_GT(std::abs(one_minus - c.full), 0.3 * c.full);
  EXPECT_NEAR(fid.excited, fid.ground, 0.3 * c.quarter);
}

TEST(Leakage, DominantTransitionAndCompleteness) {
  const RabiParams p{kTwoPi * 0.3, 0.51 * kTwoPi * 6.336, kTwoPi * 6.336};
  const int nc = 30;
  EXPECT_GT(leakage(p, nc, 1), 0.95);
  const auto spec = rabi_spectrum(p, nc);
  const Matrix sz = kron(sigma_z(), identity(nc));
  double total = std::norm(spec.vectors.col(0).dot(sz * spec.vectors.col(0)));
  for (Index j = 1; j < spec.vectors.cols(); ++j) total += std::norm(spec.vectors.col(j).dot(sz * spec.vectors.col(0)));
  EXPECT_NEAR(total, 1.0, 1e-10);
  for (int j : {2, 3, 4}) EXPECT_LT(leakage(p, nc, j), 0.05);
  EXPECT_THROW(leakage(p, nc, 2 * nc - 1), TruncationError);
  EXPECT_THROW(leakage(p, nc, 2 * nc), DimensionError);
}

TEST(Comparison, SeriesDeviation) {
  BranchSeries a{{0, 1, 2}, {0.0, 0.1, 0.2}, {0.0, -0.1, -0.2}};
  BranchSeries b{{0, 1, 2}, {0.0, 0.12, 0.2}, {0.0, -0.1, -0.25}};
  const auto r = two_level_comparison(a, b);
  EXPECT_NEAR(r.max_dev_ge, 0.02, 1e-15);
  EXPECT_NEAR(r.max_dev_lt, 0.05, 1e-15);
  EXPECT_NEAR(r.max_dev, 0.05, 1e-15);
  EXPECT_EQ(r.t_of_max, 2.0);
  b.times[1] = 1.5;
  EXPECT_THROW(two_level_comparison(a, b), DimensionError);
  b.ge.pop_back();
  EXPECT_THROW(two_level_comparison(a, b), DimensionError);
}

TEST(Comparison, StarkTrackingClosedForm) {
  const TwoLevelParams tl{0.5, 0.01};
  const std::vector<double> t{0, 50, 150, 200};
  const std::vector<double> nh{0, 10, 40, 40}, nl{0, 2, 5, 5};
  std::vector<double> sh, sl;
  for (std::size_t k = 0; k < t.size(); ++k) {
    sh.push_back(effective_static_hamiltonian(tl, nh[k]).sigma_x);
    sl.push_back(effective_static_hamiltonian(tl, nl[k]).sigma_x);
  }
  sh[1] += 0.5;  // before t_from, ignored
  const auto r = stark_tracking(tl, t, nh, nl, sh, sl, 100.0);
  EXPECT_LT(r.max_dev, 1e-15);
  EXPECT_NEAR(r.sx_high[2], -0.4 / std::hypot(0.4, 0.25), 1e-15);
  EXPECT_THROW(stark_tracking(tl, t, nh, nl, sh, {0.0}), DimensionError);
}
