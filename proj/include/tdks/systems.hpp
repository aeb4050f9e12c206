#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "tdks/propagation.hpp"
#include "tdks/state.hpp"

namespace tdks {

/// A model problem on a 1D lattice with one or two particles.
struct ModelSystem {
  std::string name;
  /// One-body lattice.
  Grid grid;
  int particles = 1;
  double dt = 0.01;
  int steps = 0;
  /// One-body potential defining the initial state (t < 0).
  std::function<double(double)> initial_potential;
  /// One-body potential during the evolution (t >= 0).
  std::function<double(double, double)> external_potential;
  /// Two-body interaction w(x1, x2); empty without interaction.
  std::function<double(double, double)> interaction;
  /// Analytic one-electron initial wavefunction; empty means an eigensolve.
  std::function<double(double)> initial_wavefunction;
  /// Whether the inversion folds the external potential into H0.
  bool fold_external_into_h0 = false;
  /// Snapshot times used by reports.
  std::vector<double> snapshot_times;

  RealVector potential_at(double t) const;
  RealVector initial_potential_on_grid() const;
  /// Potential folded into H0 for the inversion (empty when not folded).
  RealVector inversion_static_potential() const;
  /// Product lattice for two particles.
  Grid pair_grid() const;
  /// V(x1) + V(x2) + w(x1, x2) on the product lattice, flat index i1 * L + i2.
  RealVector pair_potential(const RealVector& one_body) const;
};

/// omega = 1, L = 115 over [-11, 11], packets with momenta +-5 sqrt(pi)/2, T/2 in 1600 steps.
ModelSystem harmonic_test();

double double_well(double x);
double soft_coulomb(double x1, double x2);

/// Soft-Coulomb pair in V_d(x) = 5e-11 x^10 - 1.3e-4 x^4 with driving -x/10 from t = 0.
/// Kinetic coefficient 1 (mass 1/2). Desk scale L = 81, full scale L = 271, both on [-13.5, 13.5].
ModelSystem two_electron_system(bool full_scale = false);

/// (psi(x1,x2) - psi(x2,x1)) normalized. Throws std::invalid_argument when the result vanishes.
LatticeVector antisymmetrize(const LatticeVector& psi2, int points);
RealVector antisymmetrize(const RealVector& psi2, int points);

struct EigenResult {
  LatticeVector psi;
  double energy = 0.0;
  double residual = 0.0;
  int matvecs = 0;
  int restarts = 0;
};

struct TripletOptions {
  double tol = 1e-9;
  int subspace = 80;
  int keep = 20;
  int max_restarts = 2000;
  std::uint64_t seed = 1;
  /// Drop the interaction (non-interacting limit).
  bool interacting = true;
};

/// Lowest eigenpair of the pair Hamiltonian at t < 0 in the antisymmetric sector,
/// by thick-restarted Lanczos with antisymmetrization after every product.
/// Throws std::runtime_error on non-convergence.
EigenResult lowest_triplet(const ModelSystem& system, const TripletOptions& options = {});

/// rho(x, x') = N sum_x2 Psi(x, x2) conj(Psi(x', x2)); trace N.
ComplexMatrix pair_one_rdm(const LatticeVector& psi2, int points, int particles = 2);
/// N times the marginal over the second coordinate.
RealVector pair_marginal(const RealVector& f2, int points, int particles = 2);

struct Inertia {
  int negative = 0;
  int zero = 0;
  int positive = 0;
  bool operator==(const Inertia&) const = default;
};

/// Counts with |lambda| <= zero_tol * max|lambda| treated as zero.
Inertia inertia_of(const RealMatrix& a, double zero_tol = 1e-9);

struct InertiaReport {
  /// Inertia of the restoring operator -K (n_ddot = q - (-K) v).
  Inertia k;
  /// Inertia of K as assembled (n_ddot = q + K v).
  Inertia k_raw;
  Inertia shifted_h;
  Inertia expected;
  bool full_support = true;
  bool matches_theorem = false;
};

/// Compares the inertia of the force-balance operator of a real single-particle
/// eigenstate with that of H - lambda_k I. k is 1-based.
/// Throws std::invalid_argument for a degenerate eigenvalue.
InertiaReport inertia_check(const Grid& grid, const RealVector& psi, const RealMatrix& h_dense, int k,
                            double zero_tol = 1e-9);

struct ReferenceOptions {
  int krylov_dim = 50;
  std::optional<int> steps;
  TripletOptions triplet;
  /// Keep the 1RDM at every frame that is a multiple of this; 0 keeps none beyond t = 0.
  int rdm_every = 0;
  std::function<void(std::size_t)> progress;
};

struct ReferenceRun {
  DensityTrace trace;
  /// 1RDM at t = 0.
  ComplexMatrix rho0;
  double energy0 = 0.0;
  /// Checkpoint frames and their 1RDMs (see ReferenceOptions::rdm_every).
  std::vector<std::size_t> rdm_frames;
  std::vector<ComplexMatrix> rdms;
};

/// Exact evolution of the system by Arnoldi steps; n, n_dot and n_ddot are evaluated
/// from the state at every frame (n_ddot = marginal of q + K v on the full lattice).
ReferenceRun generate_reference(const ModelSystem& system, const ReferenceOptions& options = {});

/// Initial wavefunction on the full (one- or two-particle) lattice.
LatticeVector initial_wavefunction(const ModelSystem& system, const TripletOptions& options = {});

}  // namespace tdks
