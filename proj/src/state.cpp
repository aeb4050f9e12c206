#include "tdks/state.hpp"

#include <cmath>
#include <stdexcept>

namespace tdks {

void KSState::validate(double norm_tol, double overlap_tol) const {
  grid.validate();
  if (orbitals.empty()) throw std::invalid_argument("state has no orbitals");
  for (const auto& c : orbitals) {
    if (static_cast<std::size_t>(c.size()) != grid.size())
      throw DimensionMismatch("orbital length does not match grid");
    if (std::abs(c.squaredNorm() - 1.0) > norm_tol) throw std::invalid_argument("orbital is not normalized");
  }
  for (std::size_t a = 0; a < orbitals.size(); ++a)
    for (std::size_t b = a + 1; b < orbitals.size(); ++b)
      if (std::abs(orbitals[a].dot(orbitals[b])) > overlap_tol)
        throw std::invalid_argument("orbitals are not orthogonal");
}

std::size_t DensityTrace::frame_at(double t) const {
  if (times.empty()) throw std::out_of_range("empty density trace");
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  return best;
}

void DensityTrace::push_back(double t, RealVector density, RealVector first, RealVector second) {
  const auto m = static_cast<Eigen::Index>(grid.size());
  if (density.size() != m || first.size() != m || second.size() != m)
    throw DimensionMismatch("density frame length does not match grid");
  times.push_back(t);
  n.push_back(std::move(density));
  n_dot.push_back(std::move(first));
  n_ddot.push_back(std::move(second));
}

RealVector density(const KSState& state) {
  RealVector n = RealVector::Zero(static_cast<Eigen::Index>(state.size()));
  for (const auto& c : state.orbitals) n += c.cwiseAbs2();
  return n;
}

RealVector density_derivative(const KSState& state, const KineticOperator& kinetic) {
  RealVector nd = RealVector::Zero(static_cast<Eigen::Index>(state.size()));
  for (const auto& c : state.orbitals) {
    const LatticeVector tc = kinetic.apply(c);
    nd += (c.conjugate().cwiseProduct(tc)).imag();
  }
  return (2.0 / state.grid.hbar) * nd;
}

RealVector density_derivative(const KSState& state) { return density_derivative(state, KineticOperator(state.grid)); }

ComplexMatrix one_rdm(const KSState& state) {
  const auto m = static_cast<Eigen::Index>(state.size());
  ComplexMatrix rho = ComplexMatrix::Zero(m, m);
  for (const auto& c : state.orbitals) rho.noalias() += c * c.adjoint();
  return rho;
}

}  // namespace tdks
