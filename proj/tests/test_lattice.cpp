#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tdks/lattice.hpp"

using namespace tdks;

namespace {

Grid unit_grid(int L, int dims = 1) {
  Grid g;
  g.dx = 1.0;
  g.points = L;
  g.dims = dims;
  return g;
}

RealVector random_real(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  RealVector v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = gauss(rng);
  return v;
}

}  // namespace

TEST_CASE("kinetic elements match the spectral integral of the sinc basis") {
  const Grid g = unit_grid(11);
  CHECK(kinetic_element(0, 0, g) == doctest::Approx(std::numbers::pi * std::numbers::pi / 6).epsilon(1e-14));
  CHECK(kinetic_element(0, 1, g) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(kinetic_element(0, 2, g) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(kinetic_element(0, 0, g) == doctest::Approx(1.644934).epsilon(1e-6));

  for (int k = 0; k <= 5; ++k)
    CHECK(kinetic_element(0, k, g) == doctest::Approx(oracle::spectral_kinetic_element(0, k, g)).epsilon(1e-9));

  Grid heavy = g;
  heavy.dx = 0.3;
  heavy.mass = 0.5;
  heavy.hbar = 1.3;
  for (int k = 0; k <= 3; ++k)
    CHECK(kinetic_element(2, 2 - k, heavy) ==
          doctest::Approx(oracle::spectral_kinetic_element(2, 2 - k, heavy)).epsilon(1e-9));
}

TEST_CASE("grid geometry") {
  const Grid g = Grid::spanning(-11.0, 11.0, 115);
  CHECK(g.size() == 115);
  CHECK(g.dx == doctest::Approx(22.0 / 114));
  const RealVector x = g.axis();
  CHECK(x[0] == doctest::Approx(-11.0));
  CHECK(x[114] == doctest::Approx(11.0));
  CHECK(x[57] == doctest::Approx(0.0));

  const Grid shifted = Grid::spanning(-13.5, 13.5, 271);
  CHECK(shifted.dx == doctest::Approx(0.1));
  CHECK(shifted.axis()[0] == doctest::Approx(-13.5));

  Grid bad = unit_grid(10);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Grid g2 = unit_grid(5, 2);
  CHECK(g2.size() == 25);
  CHECK(g2.stride(0) == 5);
  CHECK(g2.coordinate_of(7, 0) == doctest::Approx(-1.0));  // row 1 -> m = -1
  CHECK(g2.coordinate_of(7, 1) == doctest::Approx(0.0));   // col 2 -> m = 0
}

TEST_CASE("kinetic_matvec on a one-hot vector reproduces a column of T") {
  const Grid g = unit_grid(9);
  LatticeVector c = LatticeVector::Zero(9);
  c[4] = 1.0;  // m = 0
  const LatticeVector y = kinetic_matvec(g, c);
  CHECK(y[4].real() == doctest::Approx(std::numbers::pi * std::numbers::pi / 6));
  CHECK(y[3].real() == doctest::Approx(-1.0));
  CHECK(y[5].real() == doctest::Approx(-1.0));
  CHECK(y[2].real() == doctest::Approx(0.25));
  CHECK(y[6].real() == doctest::Approx(0.25));
  CHECK(y.imag().norm() == 0.0);

  CHECK(kinetic_matvec(g, LatticeVector::Zero(9)).norm() == 0.0);
  CHECK_THROWS_AS(kinetic_matvec(g, LatticeVector::Zero(8)), DimensionMismatch);
}

TEST_CASE("kinetic_matvec agrees with dense Kronecker-sum assembly") {
  std::mt19937_64 rng(7);
  for (int dims : {1, 2}) {
    for (int L : {5, 15, 31}) {
      Grid g = unit_grid(L, dims);
      g.dx = 0.37;
      g.mass = 0.5;
      const RealMatrix t = oracle::dense_t(g);
      const KineticOperator op(g);
      const auto n = static_cast<Eigen::Index>(g.size());
      LatticeVector c(n);
      c.real() = random_real(n, rng);
      c.imag() = random_real(n, rng);
      const LatticeVector ref = t.cast<std::complex<double>>() * c;
      CHECK((op.apply(c) - ref).norm() <= 1e-13 * ref.norm());
    }
  }
}

TEST_CASE("3D kinetic matvec agrees with dense assembly") {
  std::mt19937_64 rng(8);
  Grid g = unit_grid(5, 3);
  const RealMatrix t = oracle::dense_t(g);
  const RealVector x = random_real(125, rng);
  CHECK((KineticOperator(g).apply(x) - t * x).norm() <= 1e-13 * (t * x).norm());
}

TEST_CASE("2D kinetic operator has tensor-sum structure on separable vectors") {
  std::mt19937_64 rng(9);
  const Grid g1 = unit_grid(7);
  const Grid g2 = unit_grid(7, 2);
  const RealVector a = random_real(7, rng);
  const RealVector b = random_real(7, rng);
  RealVector ab(49);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) ab[i * 7 + j] = a[i] * b[j];
  const KineticOperator t1(g1), t2(g2);
  const RealVector ta = t1.apply(a), tb = t1.apply(b);
  RealVector expect(49);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) expect[i * 7 + j] = ta[i] * b[j] + a[i] * tb[j];
  CHECK((t2.apply(ab) - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("T is symmetric and positive definite") {
  std::mt19937_64 rng(10);
  for (int L : {3, 25, 101}) {
    const Grid g = unit_grid(L);
    const KineticOperator op(g);
    const RealVector a = random_real(L, rng), b = random_real(L, rng);
    CHECK(std::abs(a.dot(op.apply(b)) - b.dot(op.apply(a))) < 1e-12 * a.norm() * b.norm() * L);
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(oracle::dense_t1(g));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("harmonic oscillator ground state energy on the DVR grid") {
  const Grid g = Grid::spanning(-11.0, 11.0, 115);
  RealMatrix h = kinetic_matrix_1d(g);
  const RealVector x = g.axis();
  h.diagonal() += 0.5 * x.cwiseAbs2();
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(h);
  CHECK(std::abs(es.eigenvalues()[0] - 0.5) < 1e-8);
}

TEST_CASE("potential_apply is an elementwise product") {
  const LatticeVector c = LatticeVector::Ones(4);
  RealVector v(4);
  v << 0, 1, 2, 3;
  const LatticeVector y = potential_apply(v, c);
  for (int j = 0; j < 4; ++j) CHECK(y[j].real() == doctest::Approx(j));
  CHECK(potential_apply(RealVector::Zero(4), c).norm() == 0.0);
  const LatticeVector scaled = potential_apply(RealVector::Constant(4, 2.5), c);
  CHECK((scaled - 2.5 * c).norm() == 0.0);
  CHECK_THROWS_AS(potential_apply(RealVector::Zero(3), c), DimensionMismatch);
}
