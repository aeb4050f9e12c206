#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tdks/ksinit.hpp"
#include "tdks/state.hpp"

namespace tdks {

using ApplyFn = std::function<LatticeVector(const LatticeVector&)>;

/// H0 = T + diag(static_potential). An empty static potential means H0 = T.
struct Hamiltonian {
  std::shared_ptr<const KineticOperator> kinetic;
  RealVector static_potential;

  explicit Hamiltonian(const Grid& grid, RealVector v_static = {});
  LatticeVector apply(const LatticeVector& c) const;
  ApplyFn as_function() const;
  const Grid& grid() const { return kinetic->grid(); }
};

enum class PotentialSolver { pinv, minres_qlp, lsqr };

struct PropagatorConfig {
  double dt = 0.01;
  int krylov_dim = 30;
  double sc_tol = 1e-9;
  double inner_tol = 1e-14;
  int max_inner = 200;
  int max_outer = 50;
  /// Anderson mixing depth for the potential update; 0 gives the plain fixed-point iteration.
  int anderson_depth = 5;
  /// Per-point per-step limit on the potential change; disabled when empty.
  std::optional<double> max_dv = 1.0;
  double e0 = 0.0;
  bool reassign_phases_every_step = true;
  double blowup_threshold = 1e-2;

  PotentialSolver solver = PotentialSolver::pinv;
  double solver_tol = 1e-12;
  int solver_max_iter = 0;
  double prune_threshold = kPruneThreshold;
  double pinv_rcond = 1e-9;

  double phase_tol = 1e-10;
  int phase_max_iter = 50;
  PhaseOptions phase;

  /// Throws std::invalid_argument.
  void validate() const;
};

struct PotentialTrace {
  std::vector<double> times;
  std::vector<RealVector> v;
  std::vector<RealVector> v_dot;
  std::vector<double> energy_shifts;

  std::size_t frames() const { return times.size(); }
};

/// exp(-i H dt / hbar) psi by a Lanczos-Arnoldi subspace of at most krylov_dim
/// vectors, with full reorthogonalization. Steps whose error estimate exceeds
/// `tol` are split in halves, each half held to the same `tol`.
LatticeVector arnoldi_step(const ApplyFn& h_apply, const LatticeVector& psi, double dt, int krylov_dim,
                           double hbar = 1.0, double tol = 1e-13);

/// Euler-Maclaurin correction
///   f = dt^2 / (12 hbar) * ( -H0 V psi / hbar + i (V_dot psi + V psi_dot) ),
/// with psi_dot = -(i/hbar)(H0 + V) psi.
LatticeVector euler_maclaurin_f(const ApplyFn& h0_apply, const RealVector& v, const RealVector& v_dot,
                                const LatticeVector& psi, double dt, double hbar = 1.0);

/// index 0 -> 0, index 1 -> first-order backward difference, index >= 2 -> second-order.
RealVector potential_time_derivative(const PotentialTrace& history, std::size_t t_index);
/// Same rule given the current potential and up to two previous ones (newest first).
RealVector backward_derivative(const RealVector& v, const std::vector<const RealVector*>& previous, double dt);

double total_energy(const KSState& state, const Hamiltonian& h0, const RealVector& v);

/// V -> V - (E - E0)/N.
RealVector energy_shift(const KSState& state, const Hamiltonian& h0, const RealVector& v, double e0);

/// Clips each entry to [v_old - max_dv, v_old + max_dv]; `events` counts clipped entries.
RealVector clamp_potential(const RealVector& v_new, const RealVector& v_old, std::optional<double> max_dv,
                           int* events = nullptr);

struct ForceBalanceSolve {
  /// Total potential (including any static part); pruned entries hold NaN.
  RealVector v;
  std::vector<bool> pruned;
  int iterations = 0;
  double residual = 0.0;
  bool ok = true;
};

/// Solves K(state) v = n_ddot_aim - q(state) for the total lattice potential.
ForceBalanceSolve solve_force_balance(const KSState& state, const RealVector& n_ddot_aim, const PropagatorConfig& cfg);

/// One van Dijk step for every orbital with the potential held fixed:
///   psi(t) = [exp(-i H0 dt) psi^- + f(t: psi(t))] / (1 + i dt V(t) / 2 hbar),
/// with the f fixed point iterated to inner_tol.
struct FixedPotentialStep {
  const Hamiltonian* h0;
  double dt;
  int krylov_dim;
  double inner_tol = 1e-14;
  int max_inner = 200;

  /// psi^+ = exp(-i H0 dt)[(1 - i dt V_prev / 2 hbar) psi_prev - f(prev)].
  LatticeVector forward(const LatticeVector& psi_prev, const RealVector& v_prev, const RealVector& v_dot_prev) const;
  /// Inner fixed point from `guess`; returns the converged psi(t).
  LatticeVector solve(const LatticeVector& psi_plus, const RealVector& v, const RealVector& v_dot,
                      const LatticeVector& guess, int* iterations = nullptr) const;
};

struct StepDiagnostics {
  int outer_iterations = 0;
  int inner_iterations = 0;
  int solver_iterations = 0;
  int clamp_events = 0;
  int pruned_points = 0;
  double sc_change = 0.0;
  double energy_shift = 0.0;
  double solver_residual = 0.0;
  bool converged = true;
};

struct StepResult {
  KSState state;
  /// KS potential V~(t) (static part excluded).
  RealVector v;
  RealVector v_dot;
  StepDiagnostics diagnostics;
};

/// Advances `state` from t - dt to t against the target frame at t.
/// `history` holds V~ at earlier times (the last entry is V~(t - dt)).
StepResult implicit_step(const KSState& state, const Hamiltonian& h0, const DensityTrace& target, std::size_t frame,
                         const PotentialTrace& history, const PropagatorConfig& cfg);

/// Potential at the first frame from the force-balance solve, shifted to E0.
StepResult initial_potential(const KSState& state, const Hamiltonian& h0, const DensityTrace& target,
                             std::size_t frame, const PropagatorConfig& cfg, const RealVector* previous = nullptr);

struct InversionResult {
  PotentialTrace potentials;
  std::vector<double> density_error;
  std::vector<StepDiagnostics> steps;
  std::optional<double> failure_time;
  std::string failure_reason;
  KSState final_state;

  bool failed() const { return failure_time.has_value(); }
};

/// Runs implicit_step over target frames [start_frame, end) from `initial`.
/// Stops at the first failed step and records its time.
InversionResult invert_trajectory(const DensityTrace& target, const KSState& initial, const Hamiltonian& h0,
                                  const PropagatorConfig& cfg, std::size_t start_frame = 0,
                                  std::size_t end_frame = 0,
                                  const std::function<void(std::size_t, const StepResult&)>& on_step = {});

}  // namespace tdks
