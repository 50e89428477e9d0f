#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "uscsim/metrics.hpp"
#include "uscsim/models.hpp"

using namespace uscsim;

namespace {
constexpr double kTwoPi = 2.0 * kPi;

Vector bell() {
  Vector v = Vector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

/// Brute-force discord oracle: dense (theta, phi) grid, no refinement.
double discord_grid(const DensityMatrix& rho, int n) {
  DiscordOptions o;
  o.grid = n;
  o.refine = false;
  return quantum_discord(rho, o).discord;
}

/// 1/2 (|e><e| (x) |L><L| + |g><g| (x) |H><H|) with <H|L> = overlap, resonator dimension nb.
/// (|psi_H><psi_H| (x) |High><High| + |psi_L><psi_L| (x) |Low><Low|) / 2 with orthogonal resonator
/// states and <psi_H|psi_L> = overlap; overlap 0 is the classically correlated rho_f.
DensityMatrix branch_mixture(double overlap, int nb) {
  const Vector psi_h = basis(2, 0);
  const Vector psi_l = overlap * basis(2, 0) + std::sqrt(1.0 - overlap * overlap) * basis(2, 1);
  const Vector a = kron(psi_h, basis(nb, nb - 1)), b = kron(psi_l, basis(nb, 0));
  return DensityMatrix(HilbertLayout({2, nb}), 0.5 * (a * a.adjoint() + b * b.adjoint()));
}
}  // namespace

TEST(QFunction, Vacuum) {
  QGridSpec spec{-3, 3, -3, 3, 13, 13};
  const auto q = q_function(DensityMatrix::pure(HilbertLayout({20}), basis(20, 0)), spec);
  for (int j = 0; j < 13; ++j)
    for (int i = 0; i < 13; ++i)
      EXPECT_NEAR(q.values(j, i), std::exp(-(spec.re(i) * spec.re(i) + spec.im(j) * spec.im(j))) / kPi, 1e-8);
}

TEST(QFunction, CoherentPeakAndNormalization) {
  const cplx b0(1.0, -0.5);
  QGridSpec spec{-5, 5, -5, 5, 81, 81};
  const auto q = q_function(DensityMatrix::pure(HilbertLayout({60}), coherent_state(b0, 60)), spec);
  Index r, c;
  const double peak = q.values.maxCoeff(&r, &c);
  EXPECT_NEAR(spec.re(static_cast<int>(c)), 1.0, 1e-12);
  EXPECT_NEAR(spec.im(static_cast<int>(r)), -0.5, 1e-12);
  EXPECT_NEAR(peak, 1.0 / kPi, 1e-10);
  EXPECT_GE(q.values.minCoeff(), 0.0);
  EXPECT_LE(q.values.maxCoeff(), 1.0 / kPi + 1e-12);
  EXPECT_GT(q.integral(), 0.99);
  EXPECT_LT(q.integral(), 1.01);
}

TEST(QFunction, ExactBeyondTheCut) {
  // A low-lying state needs no padding: Q at |beta| far above the cut is still exact.
  QGridSpec spec{-6, 6, -6, 6, 5, 5};
  const auto q = q_function(DensityMatrix::pure(HilbertLayout({20}), basis(20, 1)), spec);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) {
      const double r2 = spec.re(i) * spec.re(i) + spec.im(j) * spec.im(j);
      EXPECT_NEAR(q.values(j, i), r2 * std::exp(-r2) / kPi, 1e-14);
    }
  EXPECT_THROW((QGridSpec{1, 0, 0, 1, 3, 3}.validate()), ConfigError);
}

TEST(QFunction, GroundStateCavityLobes) {
  const RabiParams p{kTwoPi * 0.299, kTwoPi * 4.920, kTwoPi * 6.336};
  const auto l = usc_layout(30);
  const auto g = approx_ground_excited(p, l).ground;
  const auto red = partial_trace(DensityMatrix::pure(l, g), {1});
  QGridSpec spec{-3, 3, 0, 0.0001, 601, 2};
  const auto q = q_function(red, spec);
  // Lobes on the real axis, mirror symmetric about the origin.
  Index left, right;
  q.values.row(0).head(300).maxCoeff(&left);
  q.values.row(0).tail(300).maxCoeff(&right);
  // For an equal mixture of |+-a>, Q ~ e^{-(x-a)^2} + e^{-(x+a)^2} peaks where x = a tanh(2 a x).
  const double a = p.alpha();
  double x = a;
  for (int k = 0; k < 200; ++k) x = a * std::tanh(2.0 * a * x);
  EXPECT_GT(x, 0.3);
  EXPECT_NEAR(spec.re(static_cast<int>(left)), -x, 0.02);
  EXPECT_NEAR(spec.re(static_cast<int>(right) + 301), x, 0.02);
  EXPECT_NEAR(q.values(0, left), q.values(0, right + 301), 1e-10);
}

TEST(Entropy, Oracles) {
  EXPECT_NEAR(von_neumann_entropy(DensityMatrix::pure(HilbertLayout({3}), basis(3, 1))), 0.0, 1e-9);
  EXPECT_NEAR(von_neumann_entropy(Matrix(0.5 * identity(2))), 1.0, 1e-12);
  Matrix m = Matrix::Zero(3, 3);
  m(0, 0) = 0.5;
  m(1, 1) = m(2, 2) = 0.25;
  EXPECT_NEAR(von_neumann_entropy(m), 1.5, 1e-12);
}

TEST(Entropy, Concavity) {
  std::mt19937 rng(41);
  for (int k = 0; k < 50; ++k) {
    const Matrix a = fixtures::random_density(rng, 4, 2), b = fixtures::random_density(rng, 4, 2);
    EXPECT_GE(von_neumann_entropy(Matrix(0.5 * (a + b))),
              0.5 * von_neumann_entropy(a) + 0.5 * von_neumann_entropy(b) - 1e-9);
  }
}

TEST(Negativity, ProductAndBell) {
  std::mt19937 rng(42);
  const DensityMatrix prod(HilbertLayout({2, 5}), kron(fixtures::random_density(rng, 2), fixtures::random_density(rng, 5)));
  EXPECT_NEAR(negativity(prod), 0.0, 1e-9);
  EXPECT_NEAR(negativity(DensityMatrix::pure(HilbertLayout({2, 2}), bell())), 0.5, 1e-12);
}

TEST(Negativity, WernerFamily) {
  const Vector b = bell();
  for (int k = 0; k <= 20; ++k) {
    const double p = k / 20.0;
    const Matrix m = (1.0 - p) * 0.25 * identity(4) + p * b * b.adjoint();
    const DensityMatrix rho(HilbertLayout({2, 2}), m);
    // Brute-force oracle: sum of |negative eigenvalues| of the explicitly transposed matrix.
    Matrix pt(4, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int r = 0; r < 2; ++r)
          for (int s = 0; s < 2; ++s) pt(2 * i + r, 2 * j + s) = m(2 * j + r, 2 * i + s);
    Eigen::SelfAdjointEigenSolver<Matrix> es(pt);
    double neg = 0.0;
    for (int e = 0; e < 4; ++e) neg += std::max(0.0, -es.eigenvalues()(e));
    EXPECT_NEAR(negativity(rho), neg, 1e-12);
    EXPECT_NEAR(negativity(rho), std::max(0.0, (3.0 * p - 1.0) / 4.0), 1e-12);
  }
}

TEST(Negativity, LocalUnitaryInvariance) {
  std::mt19937 rng(43);
  for (int k = 0; k < 20; ++k) {
    const Matrix m = fixtures::random_density(rng, 8, 2);
    const Matrix u = kron(fixtures::random_unitary(rng, 2), fixtures::random_unitary(rng, 4));
    const HilbertLayout l({2, 4});
    EXPECT_NEAR(negativity(DensityMatrix(l, m)), negativity(DensityMatrix(l, Matrix(u * m * u.adjoint()))), 1e-9);
  }
}

TEST(Discord, ProductAndClassicalStates) {
  std::mt19937 rng(44);
  const DensityMatrix prod(HilbertLayout({2, 3}), kron(fixtures::random_density(rng, 2), fixtures::random_density(rng, 3)));
  EXPECT_NEAR(quantum_discord(prod).discord, 0.0, 1e-6);
  // Classical-classical: diagonal in a product basis.
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd w = Eigen::VectorXd::Random(8).cwiseAbs();
    w /= w.sum();
    const DensityMatrix cc(HilbertLayout({2, 4}), Matrix(w.cast<cplx>().asDiagonal()));
    const double d = quantum_discord(cc).discord;
    EXPECT_GE(d, -1e-9);
    EXPECT_LT(d, 1e-6);
  }
}

TEST(Discord, OrthogonalBranchesAreClassical) { EXPECT_LT(quantum_discord(branch_mixture(0.0, 4)).discord, 1e-6); }

TEST(Discord, OverlappingBranchesArePositive) {
  const auto rho = branch_mixture(0.5, 4);
  const auto r = quantum_discord(rho);
  EXPECT_GT(r.discord, 0.01);
  // Brute-force oracle on a 512 x 512 grid.
  EXPECT_NEAR(r.discord, discord_grid(rho, 512), 1e-4);
  EXPECT_LE(r.conditional_entropy, r.grid_minimum);
  EXPECT_GE(r.theta, 0.0);
  EXPECT_LE(r.theta, kPi);
  EXPECT_GE(r.phi, 0.0);
  EXPECT_LT(r.phi, 2.0 * kPi);
}

TEST(Discord, RandomStatesNonNegativeAndGridStable) {
  std::mt19937 rng(45);
  for (int k = 0; k < 40; ++k) {
    const DensityMatrix rho(HilbertLayout({2, 4}), fixtures::random_density(rng, 8, 1 + k % 8));
    DiscordOptions coarse, fine;
    coarse.grid = 64;
    fine.grid = 128;
    const auto a = quantum_discord(rho, coarse), b = quantum_discord(rho, fine);
    EXPECT_GE(a.discord, -1e-9);
    EXPECT_LE(a.conditional_entropy, a.grid_minimum + 1e-15);
    EXPECT_GE(b.discord, a.discord - 1e-4);
    EXPECT_LT(std::abs(a.discord - b.discord), 1e-4);
  }
}

TEST(Discord, Errors) {
  const DensityMatrix rho(HilbertLayout({3, 2}), Matrix(identity(6) / 6.0));
  EXPECT_THROW(quantum_discord(rho), DimensionError);
  DiscordOptions o;
  o.grid = 1;
  EXPECT_THROW(quantum_discord(DensityMatrix(HilbertLayout({2, 2}), Matrix(identity(4) / 4.0)), o), ConfigError);
}

TEST(Fidelity, PureStates) {
  std::mt19937 rng(46);
  const Vector psi = fixtures::random_state(rng, 5);
  EXPECT_NEAR(fidelity_pure(psi, Matrix(psi * psi.adjoint())), 1.0, 1e-12);
  Vector orth = fixtures::random_state(rng, 5);
  orth -= psi.dot(orth) * psi;
  orth.normalize();
  EXPECT_NEAR(fidelity_pure(psi, Matrix(orth * orth.adjoint())), 0.0, 1e-12);
}
