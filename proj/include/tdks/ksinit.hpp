#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "tdks/krylov.hpp"
#include "tdks/state.hpp"

namespace tdks {

/// Per-particle phases theta_j with the index of the pinned component.
struct PhaseVector {
  std::vector<RealVector> theta;
  std::vector<Eigen::Index> gauge_index;
};

struct NaturalOrbitalSet {
  /// Nonincreasing.
  RealVector occupations;
  /// Orthonormal columns; each column's largest-magnitude entry is real and positive.
  ComplexMatrix orbitals;
};

enum class PhaseSolver { lsqr, pinv };

struct PhaseOptions {
  PhaseSolver solver = PhaseSolver::lsqr;
  double solver_tol = 1e-14;
  int solver_max_iter = 0;
  double prune_threshold = kPruneThreshold;
  int max_halvings = 20;
};

struct PhaseReport {
  int iterations = 0;
  /// ||n_dot - n_dot_aim||_inf after each iterate, starting with the input.
  std::vector<double> residual_history;
  int halvings = 0;

  double residual() const { return residual_history.empty() ? 0.0 : residual_history.back(); }
};

class PhaseAssignmentError : public std::runtime_error {
 public:
  PhaseAssignmentError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Newton iteration on the phases of c_j = sqrt(n_j) exp(i theta_j) so that the
/// density derivative matches n_dot_aim in the max norm to `tol`.
PhaseVector assign_phases_single(const RealVector& n, const RealVector& n_dot_aim, const RealVector& theta0,
                                 const Grid& grid, double tol = 1e-10, int max_iter = 50,
                                 const PhaseOptions& options = {}, PhaseReport* report = nullptr);

/// Same for N orbitals: only phases change, amplitudes |c_j| are held fixed.
/// The block system [K^(1) ... K^(N)] dtheta = n_dot - n_dot_aim is solved per Newton step.
KSState assign_phases_multi(const KSState& state, const RealVector& n_dot_aim, double tol = 1e-10,
                            int max_iter = 50, const PhaseOptions& options = {}, PhaseReport* report = nullptr);

/// Top `rank` eigenpairs of a Hermitian 1RDM.
NaturalOrbitalSet natural_orbitals(const ComplexMatrix& rho, Eigen::Index rank);

/// Alternating amplitude sweep followed by Gram-Schmidt (anchored on u1) until
/// |u1|^2 + |u2|^2 = n_target and <u1|u2> = 0, both to `tol`. Phases of the
/// entries are kept; a zero entry is treated as having phase +1. When the sweep
/// stalls, the pointwise mixing angle between the orbitals is solved by Newton
/// iterations, which count towards `max_sweeps`.
std::pair<LatticeVector, LatticeVector> ks_orbitals_from_density(LatticeVector u1, LatticeVector u2,
                                                                 const RealVector& n_target, double tol = 1e-12,
                                                                 int max_sweeps = 100000, int* sweeps = nullptr);
std::pair<RealVector, RealVector> ks_orbitals_from_density(const RealVector& u1, const RealVector& u2,
                                                           const RealVector& n_target, double tol = 1e-12,
                                                           int max_sweeps = 100000, int* sweeps = nullptr);

struct KSInitReport {
  RealVector occupations;
  int sweeps = 0;
  PhaseReport phases;
  double density_error = 0.0;
  double overlap = 0.0;
};

/// Initial KS state from an interacting 1RDM and target n_dot: natural orbitals,
/// then (for two particles) the density sweep, then phase assignment.
KSState prepare_ks_state(const Grid& grid, int particles, const ComplexMatrix& rho, const RealVector& n,
                         const RealVector& n_dot_aim, double tol = 1e-10, int max_iter = 50,
                         const PhaseOptions& options = {}, KSInitReport* report = nullptr);

}  // namespace tdks
