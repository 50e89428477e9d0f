#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "uscsim/dynamics.hpp"
#include "uscsim/measurement.hpp"

using namespace uscsim;

namespace {
constexpr double kTwoPi = 2.0 * kPi;
const RabiParams kFig1{kTwoPi * 0.299, kTwoPi * 4.920, kTwoPi * 6.336};

ResonatorParams fig2_resonator() {
  ResonatorParams r;
  r.delta = kTwoPi * 5.698e-3;
  r.chi = kTwoPi * 80.735e-6;
  r.f = kTwoPi * 22.792e-3;
  r.kappa = kTwoPi * 2.375e-3;
  r.J = kTwoPi * 949.8e-6;
  return r;
}

LindbladGenerator cavity_generator(const ResonatorParams& r, int n) {
  const HilbertLayout l({n}, {"resonator"});
  std::vector<CollapseOp> c;
  if (r.kappa > 0) c.push_back({embed(destroy(n), l, 0), r.kappa});
  return {nonlinear_resonator_hamiltonian(r, l, Frame::Rotating), c};
}

cplx mean_b(const DensityMatrix& rho) { return rho.expect_complex(Operator(rho.layout(), destroy(rho.dim()))); }
}  // namespace

TEST(Rhs, SinglePhotonDecay) {
  const HilbertLayout l({3}, {"resonator"});
  const LindbladGenerator gen(Operator(l, Matrix::Zero(3, 3)), {{embed(destroy(3), l, 0), 0.7}});
  const auto d = lindblad_rhs(gen, DensityMatrix::pure(l, basis(3, 1)));
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 0) = 0.7;
  expected(1, 1) = -0.7;
  EXPECT_LT((d.matrix() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rhs, VonNeumannWithoutCollapse) {
  std::mt19937 rng(21);
  const HilbertLayout l({4});
  const Operator h(l, fixtures::random_hermitian(rng, 4));
  const DensityMatrix rho(l, fixtures::random_density(rng, 4));
  const LindbladGenerator gen(h);
  const Matrix expected = -kI * (h.matrix() * rho.matrix() - rho.matrix() * h.matrix());
  EXPECT_LT((lindblad_rhs(gen, rho).matrix() - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Rhs, TraceFreeAndHermitian) {
  std::mt19937 rng(22);
  const HilbertLayout l({2, 6}, {"usc", "resonator"});
  const auto gen = two_level_generator({0.5, 0.02}, fig2_resonator(), 6, {0.01, 0.02});
  for (int k = 0; k < 20; ++k) {
    const DensityMatrix rho(l, fixtures::random_density(rng, 12));
    const Matrix d = lindblad_rhs(gen, rho).matrix();
    EXPECT_LT(std::abs(d.trace()), 1e-12);
    EXPECT_EQ(hermiticity_defect(d), 0.0);
  }
  EXPECT_THROW(lindblad_rhs(gen, DensityMatrix(HilbertLayout({12}), fixtures::random_density(rng, 12))),
               DimensionError);
}

TEST(Rhs, LinearCavityMomentEquation) {
  std::mt19937 rng(23);
  ResonatorParams r = fig2_resonator();
  r.chi = 0.0;
  const int n = 20;
  const auto gen = cavity_generator(r, n);
  // Low-lying state so the truncated ladder does not enter the moment equation.
  Matrix low = Matrix::Zero(n, n);
  low.topLeftCorner(6, 6) = fixtures::random_density(rng, 6);
  const DensityMatrix rho(gen.layout(), low);
  const cplx b = mean_b(rho);
  const cplx db = lindblad_rhs(gen, rho).matrix().transpose().cwiseProduct(destroy(n)).sum();
  const cplx expected = (-kI * r.delta - 0.5 * r.kappa) * b + kI * r.f / 2.0;
  EXPECT_LT(std::abs(db - expected), 1e-10);
}

TEST(Generator, RejectsBadInput) {
  const HilbertLayout l({2});
  EXPECT_THROW(LindbladGenerator(Operator(l, Matrix(destroy(2)))), NumericalError);
  EXPECT_THROW(LindbladGenerator(Operator(l, sigma_z()), {{Operator(l, sigma_x()), -1.0}}), ConfigError);
  EXPECT_THROW(LindbladGenerator(Operator(l, sigma_z()), {{Operator(HilbertLayout({2, 1}), sigma_x()), 1.0}}),
               DimensionError);
}

TEST(Evolve, DampedCoherentState) {
  ResonatorParams r = fig2_resonator();
  r.chi = 0.0;
  r.f = 0.0;
  const int n = 30;
  const auto gen = cavity_generator(r, n);
  const cplx beta(1.5, -0.5);
  const auto grid = TimeGrid::uniform(0.0, 500.0, 50.0);
  const auto traj = evolve(gen, DensityMatrix::pure(gen.layout(), coherent_state(beta, n)), grid);
  ASSERT_EQ(traj.times.size(), 11u);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const cplx expected = beta * std::exp((-kI * r.delta - 0.5 * r.kappa) * traj.times[k]);
    EXPECT_LT(std::abs(mean_b(traj.states[k]) - expected), 1e-6) << traj.times[k];
  }
  EXPECT_LT(traj.stats.max_trace_drift, 1e-7);
}

TEST(Evolve, LinearSteadyState) {
  ResonatorParams r = fig2_resonator();
  r.chi = 0.0;
  const auto gen = cavity_generator(r, 30);
  const auto ss = steady_state(gen, DensityMatrix::pure(gen.layout(), basis(30, 0)), 500.0, 1e5);
  const cplx expected = (r.f / 2.0) / (r.delta - kI * r.kappa / 2.0);
  EXPECT_LT(std::abs(mean_b(ss.state) - expected), 1e-6);
  EXPECT_LT(ss.residual, 1e-9);
}

TEST(Evolve, StateInvariantsOnDrivenRun) {
  const auto gen = two_level_generator({kTwoPi * 89.52e-3, kTwoPi * 949.8e-6}, fig2_resonator(), 80);
  Vector g(2);
  g << 1.0, 0.0;
  const auto rho0 = DensityMatrix::pure(gen.layout(), kron(g, basis(80, 0)));
  const auto traj = evolve(gen, rho0, TimeGrid::uniform(0.0, 150.0, 10.0));
  for (const auto& s : traj.states) {
    EXPECT_LT(std::abs(s.op().trace() - 1.0), 1e-7);
    Eigen::SelfAdjointEigenSolver<Matrix> es(s.matrix(), Eigen::EigenvaluesOnly);
    EXPECT_GT(es.eigenvalues()(0), -1e-7);
  }
  EXPECT_LT(traj.stats.max_leakage, 1e-6);
  EXPECT_GT(traj.stats.accepted, 0);
}

TEST(Evolve, ToleranceHalvingConverges) {
  const auto gen = two_level_generator({kTwoPi * 89.52e-3, kTwoPi * 949.8e-6}, fig2_resonator(), 80);
  const auto rho0 = DensityMatrix::pure(gen.layout(), kron(basis(2, 0), basis(80, 0)));
  const Operator nb = embed(number_op(80), gen.layout(), 1);
  const Operator sx = embed(sigma_x_prime(), gen.layout(), 0);
  const auto a = evolve(gen, rho0, TimeGrid::uniform(0.0, 80.0, 20.0, 1e-8, 1e-10));
  const auto b = evolve(gen, rho0, TimeGrid::uniform(0.0, 80.0, 20.0, 5e-9, 5e-11));
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    EXPECT_LT(std::abs(a.states[k].expect(nb) - b.states[k].expect(nb)), 1e-5);
    EXPECT_LT(std::abs(a.states[k].expect(sx) - b.states[k].expect(sx)), 1e-5);
  }
}

TEST(Evolve, LeakageRaisesTruncationError) {
  const auto gen = cavity_generator(fig2_resonator(), 6);
  const auto rho0 = DensityMatrix::pure(gen.layout(), basis(6, 0));
  EXPECT_THROW(evolve(gen, rho0, TimeGrid::uniform(0.0, 200.0, 10.0)), TruncationError);
}

TEST(Evolve, GridAndLayoutErrors) {
  const auto gen = cavity_generator(fig2_resonator(), 6);
  const auto rho0 = DensityMatrix::pure(gen.layout(), basis(6, 0));
  EXPECT_THROW(TimeGrid::uniform(0.0, 1.0, 0.0), ConfigError);
  TimeGrid bad{0.0, 1.0, {0.5, 0.2}};
  EXPECT_THROW(evolve(gen, rho0, bad), ConfigError);
  EXPECT_THROW(evolve(gen, DensityMatrix::pure(HilbertLayout({6}), basis(6, 0)), TimeGrid::uniform(0, 1, 1)),
               DimensionError);
}

TEST(Evolve, ObserverSeesEveryOutput) {
  const auto gen = cavity_generator(fig2_resonator(), 12);
  std::vector<double> seen;
  EvolveOptions o;
  o.store_states = false;
  const auto traj = evolve(gen, DensityMatrix::pure(gen.layout(), basis(12, 0)), TimeGrid::uniform(0.0, 10.0, 2.5), o,
                           [&](double t, const DensityMatrix&) { seen.push_back(t); });
  EXPECT_EQ(seen, (std::vector<double>{0.0, 2.5, 5.0, 7.5, 10.0}));
  EXPECT_TRUE(traj.states.empty());
}

TEST(UscLoss, FlatSpectraQndLimit) {
  RabiParams p = kFig1;
  p.omega_q = 0.0;
  const auto d = dressed_usc(p, 20, 2);
  const auto l = dressed_layout(2, 3);
  const auto out = usc_dissipators(d, SpectralRates::flat(0.3, 0.0, 0.0), l);
  EXPECT_NEAR(out.gamma1, 0.3, 1e-10);
  ASSERT_EQ(out.ops.size(), 1u);
  EXPECT_EQ(out.degenerate_pairs.size(), 1u);  // exact doublet at w_q = 0
}

TEST(UscLoss, ZeroSpectraGiveNoOperators) {
  const auto d = dressed_usc(kFig1, 20, 4);
  const auto out = usc_dissipators(d, SpectralRates{}, dressed_layout(4, 3));
  EXPECT_TRUE(out.ops.empty());
}

TEST(UscLoss, TwoLevelRestrictionMatchesReducedDissipators) {
  const auto d = dressed_usc(kFig1, 20, 2);
  const auto l = dressed_layout(2, 1);
  const auto out = usc_dissipators(d, SpectralRates::flat(0.02, 0.01, 0.03), l);
  Matrix h = Matrix::Zero(2, 2);
  const LindbladGenerator from_spectra(Operator(l, h), out.ops);
  const LindbladGenerator reduced(Operator(l, h), {{embed(Matrix((Matrix(2, 2) << 0, 1, 0, 0).finished()), l, 0), out.gamma1},
                                                   {embed(sigma_z_prime(), l, 0), out.gamma2}});
  std::mt19937 rng(24);
  // Dephasing weights <j|sigma_x|j> are +-e^{-2a^2} up to O(w_q/w_r) corrections.
  for (int k = 0; k < 5; ++k) {
    const DensityMatrix rho(l, fixtures::random_density(rng, 2));
    const Matrix a = lindblad_rhs(from_spectra, rho).matrix(), b = lindblad_rhs(reduced, rho).matrix();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 0.05 * max_abs(b));
  }
}

TEST(UscLoss, ZeroRatesReduceToLossless) {
  const TwoLevelParams tl{kTwoPi * 89.52e-3, kTwoPi * 949.8e-6};
  const auto res = fig2_resonator();
  const auto rho0 = DensityMatrix::pure(two_level_layout(30), kron(basis(2, 0), basis(30, 0)));
  const auto grid = TimeGrid::uniform(0.0, 40.0, 10.0);
  const auto a = two_level_loss_evolve(tl, res, 0.0, 0.0, rho0, grid);
  const auto b = evolve(two_level_generator(tl, res, 30), rho0, grid);
  for (std::size_t k = 0; k < a.states.size(); ++k)
    EXPECT_LT((a.states[k].matrix() - b.states[k].matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UscLoss, DephasingKeepsPopulations) {
  ResonatorParams res;
  const TwoLevelParams tl{0.3, 0.0};
  Vector psi(2);
  psi << std::sqrt(0.3), std::sqrt(0.7);
  const auto rho0 = DensityMatrix::pure(two_level_layout(2), kron(psi, basis(2, 0)));
  const auto traj = two_level_loss_evolve(tl, res, 0.0, 0.05, rho0, TimeGrid::uniform(0.0, 100.0, 25.0));
  for (const auto& s : traj.states) {
    const Matrix q = partial_trace_matrix(s.matrix(), s.layout(), {0});
    EXPECT_NEAR(q(0, 0).real(), 0.3, 1e-9);
    EXPECT_NEAR(q(1, 1).real(), 0.7, 1e-9);
  }
  EXPECT_LT(std::abs(partial_trace_matrix(traj.states.back().matrix(), traj.states.back().layout(), {0})(0, 1)),
            std::sqrt(0.21) * 0.5);
}

TEST(NullBackAction, LinearUndrivenResonator) {
  // w_eff >> J, chi = f = 0: the measured quadrature carries no information about the qubit.
  ResonatorParams res;
  res.delta = 0.05;
  const TwoLevelParams tl{1.0, 1e-4};
  const int nb = 16;
  Vector q(2);
  q << 1.0, 1.0;
  const auto rho0 = DensityMatrix::pure(two_level_layout(nb), kron(q.normalized(), coherent_state(1.0, nb)));
  const auto traj = evolve(two_level_generator(tl, res, nb), rho0, TimeGrid::uniform(0.0, 200.0, 50.0));
  for (const auto& s : traj.states) {
    const auto c = conditional_states(s, CoarseGrain::finite(0.5), 1);
    EXPECT_LT(trace_distance(c.ge, c.lt), 1e-3);
  }
}
