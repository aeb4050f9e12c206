#pragma once

#include <vector>

#include "tdks/lattice.hpp"

namespace tdks {

/// N non-interacting orbitals on a shared lattice.
struct KSState {
  Grid grid;
  std::vector<LatticeVector> orbitals;

  std::size_t particles() const { return orbitals.size(); }
  std::size_t size() const { return grid.size(); }

  /// Throws std::invalid_argument on wrong lengths, non-normalized or non-orthogonal orbitals.
  void validate(double norm_tol = 1e-10, double overlap_tol = 1e-8) const;
};

/// Target density trajectory with its first and second time derivatives.
struct DensityTrace {
  Grid grid;
  int particles = 1;
  std::vector<double> times;
  std::vector<RealVector> n;
  std::vector<RealVector> n_dot;
  std::vector<RealVector> n_ddot;

  std::size_t frames() const { return times.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  /// Nearest frame index for time t.
  std::size_t frame_at(double t) const;
  void push_back(double t, RealVector density, RealVector first, RealVector second);
};

RealVector density(const KSState& state);

/// dn/dt = (2/hbar) sum_i Im[conj(c_j) (T c)_j].
RealVector density_derivative(const KSState& state, const KineticOperator& kinetic);
RealVector density_derivative(const KSState& state);

/// Dense 1RDM rho_jk = sum_i c_j conj(c_k). Oracle / small-lattice use only.
ComplexMatrix one_rdm(const KSState& state);

}  // namespace tdks
