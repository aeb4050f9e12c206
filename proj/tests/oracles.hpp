#pragma once

// Test-only reference computations. Everything here is built from dense
// matrices and textbook formulas and never calls the structured code paths
// it is used to check.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tdks/state.hpp"

namespace oracle {

using tdks::ComplexMatrix;
using tdks::Grid;
using tdks::KSState;
using tdks::LatticeVector;
using tdks::RealMatrix;
using tdks::RealVector;

/// T_mm' = hbar^2/(2 mass) (dx/2pi) Int_{-pi/dx}^{pi/dx} k^2 exp(i k (m-m') dx) dk by composite Simpson.
inline double spectral_kinetic_element(int m, int mp, const Grid& g, int panels = 20000) {
  const double kmax = std::numbers::pi / g.dx;
  const double h = 2 * kmax / panels;
  double sum = 0.0;
  for (int p = 0; p <= panels; ++p) {
    const double k = -kmax + p * h;
    const double w = (p == 0 || p == panels) ? 1.0 : (p % 2 ? 4.0 : 2.0);
    sum += w * k * k * std::cos(k * (m - mp) * g.dx);
  }
  sum *= h / 3.0;
  return g.hbar * g.hbar / (2 * g.mass) * g.dx / (2 * std::numbers::pi) * sum;
}

/// 1D kinetic matrix written out from the closed form.
inline RealMatrix dense_t1(const Grid& g) {
  const int L = g.points;
  RealMatrix t(L, L);
  const double pre = g.hbar * g.hbar / (g.mass * g.dx * g.dx);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) {
      const int k = a - b;
      t(a, b) = k == 0 ? pre * std::numbers::pi * std::numbers::pi / 6.0 : pre * ((k % 2) ? -1.0 : 1.0) / (k * k);
    }
  return t;
}

/// Full L^D x L^D kinetic matrix by Kronecker sums.
inline RealMatrix dense_t(const Grid& g) {
  const RealMatrix t1 = dense_t1(g);
  const Eigen::Index L = g.points;
  RealMatrix t = t1;
  for (int d = 1; d < g.dims; ++d) {
    const Eigen::Index n = t.rows();
    RealMatrix next = RealMatrix::Zero(n * L, n * L);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b)
        for (Eigen::Index c = 0; c < L; ++c) {
          next(a * L + c, b * L + c) += t(a, b);
        }
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index c = 0; c < L; ++c)
        for (Eigen::Index e = 0; e < L; ++e) next(a * L + c, a * L + e) += t1(c, e);
    t = next;
  }
  return t;
}

/// exp(-i H t / hbar) psi by dense eigendecomposition of the real symmetric H.
inline LatticeVector dense_evolve(const RealMatrix& h, const LatticeVector& psi, double t, double hbar = 1.0) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(h);
  const auto& vecs = es.eigenvectors();
  const auto& vals = es.eigenvalues();
  LatticeVector coeff = vecs.transpose().cast<std::complex<double>>() * psi;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) coeff[k] *= std::exp(std::complex<double>(0, -vals[k] * t / hbar));
  return vecs.cast<std::complex<double>>() * coeff;
}

inline KSState evolve_state(const KSState& s, const RealMatrix& h, double t) {
  KSState out = s;
  for (auto& c : out.orbitals) c = dense_evolve(h, c, t, s.grid.hbar);
  return out;
}

inline RealVector dense_density(const KSState& s) {
  RealVector n = RealVector::Zero(static_cast<Eigen::Index>(s.size()));
  for (const auto& c : s.orbitals)
    for (Eigen::Index j = 0; j < c.size(); ++j) n[j] += std::norm(c[j]);
  return n;
}

/// Random orthonormal orbitals (Gram-Schmidt on Gaussian noise).
inline KSState random_state(const Grid& g, int particles, std::mt19937_64& rng, bool real_valued = false) {
  std::normal_distribution<double> gauss;
  KSState s{g, {}};
  const auto m = static_cast<Eigen::Index>(g.size());
  for (int i = 0; i < particles; ++i) {
    LatticeVector c(m);
    for (Eigen::Index j = 0; j < m; ++j) c[j] = {gauss(rng), real_valued ? 0.0 : gauss(rng)};
    for (const auto& prev : s.orbitals) c -= prev.dot(c) * prev;
    c.normalize();
    s.orbitals.push_back(c);
  }
  return s;
}

/// Dense K from its defining Hadamard form, assembled elementwise.
inline RealMatrix dense_k(const KSState& s) {
  const RealMatrix t = dense_t(s.grid);
  const auto m = t.rows();
  ComplexMatrix rho = ComplexMatrix::Zero(m, m);
  for (const auto& c : s.orbitals)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < m; ++k) rho(j, k) += c[j] * std::conj(c[k]);
  RealMatrix a(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index k = 0; k < m; ++k) a(j, k) = t(j, k) * rho(j, k).real();
  RealMatrix k = -2.0 * a;
  for (Eigen::Index j = 0; j < m; ++j) k(j, j) += 2.0 * a.row(j).sum();
  return k / (s.grid.hbar * s.grid.hbar);
}

/// Moore-Penrose solution via symmetric/general SVD with a relative cutoff.
inline RealVector dense_pinv_solve(const RealMatrix& a, const RealVector& b, double rcond = 1e-10) {
  Eigen::JacobiSVD<RealMatrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  RealVector c = svd.matrixU().transpose() * b;
  RealVector y = RealVector::Zero(a.cols());
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s[k] > rcond * s[0]) y[k] = c[k] / s[k];
  return svd.matrixV() * y;
}

inline double max_abs(const RealVector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace oracle
