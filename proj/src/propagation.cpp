#include "tdks/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tdks/forcebalance.hpp"

namespace tdks {

namespace {

using cd = std::complex<double>;
constexpr cd kI(0.0, 1.0);

double inf_norm(const RealVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// y = exp(-i T tau / hbar) e1 for a real symmetric tridiagonal T.
Eigen::VectorXcd tridiagonal_exp(const std::vector<double>& a, const std::vector<double>& b, double tau, double hbar) {
  const auto m = static_cast<Eigen::Index>(a.size());
  RealMatrix t = RealMatrix::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    t(j, j) = a[static_cast<std::size_t>(j)];
    if (j + 1 < m) t(j, j + 1) = t(j + 1, j) = b[static_cast<std::size_t>(j)];
  }
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(t);
  const RealMatrix& q = es.eigenvectors();
  Eigen::VectorXcd phase(m);
  for (Eigen::Index k = 0; k < m; ++k) phase[k] = std::exp(-kI * es.eigenvalues()[k] * tau / hbar) * q(0, k);
  return q.cast<cd>() * phase;
}

// One Krylov attempt; returns false when the error estimate exceeds tol.
bool krylov_attempt(const ApplyFn& h, const LatticeVector& psi, double tau, int m_max, double hbar, double tol,
                    LatticeVector& out) {
  const double beta0 = psi.norm();
  std::vector<LatticeVector> basis{psi / beta0};
  std::vector<double> a, b;
  double hnorm = 0.0;
  for (int j = 0; j < m_max; ++j) {
    LatticeVector w = h(basis.back());
    const double alpha = basis.back().dot(w).real();
    w -= alpha * basis.back();
    if (j > 0) w -= b.back() * basis[basis.size() - 2];
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q.dot(w) * q;
    const double beta = w.norm();
    a.push_back(alpha);
    hnorm = std::max(hnorm, std::abs(alpha) + beta + (b.empty() ? 0.0 : b.back()));
    const Eigen::VectorXcd y = tridiagonal_exp(a, b, tau, hbar);
    const bool breakdown = beta <= 1e-14 * hnorm;
    const double err = beta * std::abs(y[y.size() - 1]);
    if (breakdown || err <= tol) {
      out = LatticeVector::Zero(psi.size());
      for (std::size_t k = 0; k < basis.size(); ++k) out += (beta0 * y[static_cast<Eigen::Index>(k)]) * basis[k];
      return true;
    }
    b.push_back(beta);
    basis.push_back(w / beta);
  }
  return false;
}

LatticeVector advance(const ApplyFn& h, const LatticeVector& psi, double tau, int m_max, double hbar, double tol,
                      int depth) {
  LatticeVector out;
  if (krylov_attempt(h, psi, tau, m_max, hbar, tol, out)) return out;
  if (depth > 40) throw std::runtime_error("arnoldi_step: Krylov subspace too small for the step");
  const LatticeVector half = advance(h, psi, 0.5 * tau, m_max, hbar, tol, depth + 1);
  return advance(h, half, 0.5 * tau, m_max, hbar, tol, depth + 1);
}

// Pruned entries take the value of the nearest unpruned index.
void fill_nearest(RealVector& v, const std::vector<bool>& pruned) {
  const auto n = v.size();
  Eigen::Index last = -1;
  std::vector<Eigen::Index> left(static_cast<std::size_t>(n), -1), right(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!pruned[static_cast<std::size_t>(j)]) last = j;
    left[static_cast<std::size_t>(j)] = last;
  }
  last = -1;
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    if (!pruned[static_cast<std::size_t>(j)]) last = j;
    right[static_cast<std::size_t>(j)] = last;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!pruned[static_cast<std::size_t>(j)]) continue;
    const Eigen::Index l = left[static_cast<std::size_t>(j)], r = right[static_cast<std::size_t>(j)];
    if (l < 0 && r < 0)
      v[j] = 0.0;
    else if (l < 0 || (r >= 0 && r - j < j - l))
      v[j] = v[r];
    else
      v[j] = v[l];
  }
}

// KS potential from a force-balance solve: static part removed, pruned points filled
// from `fallback` (or by nearest neighbour), then shifted to E0 on unpruned points only.
RealVector shifted_ks_potential(const ForceBalanceSolve& fb, const KSState& state, const Hamiltonian& h0,
                                const RealVector* fallback, double e0, double& shift) {
  RealVector v = fb.v;
  if (h0.static_potential.size()) v -= h0.static_potential;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (fb.pruned[static_cast<std::size_t>(j)]) v[j] = fallback ? (*fallback)[j] : 0.0;
  if (!fallback) fill_nearest(v, fb.pruned);
  shift = (total_energy(state, h0, v) - e0) / static_cast<double>(state.particles());
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (!fb.pruned[static_cast<std::size_t>(j)]) v[j] -= shift;
  return v;
}

}  // namespace

Hamiltonian::Hamiltonian(const Grid& grid, RealVector v_static)
    : kinetic(std::make_shared<const KineticOperator>(grid)), static_potential(std::move(v_static)) {
  if (static_potential.size() && static_cast<std::size_t>(static_potential.size()) != grid.size())
    throw DimensionMismatch("static potential length");
}

LatticeVector Hamiltonian::apply(const LatticeVector& c) const {
  LatticeVector out = kinetic->apply(c);
  if (static_potential.size()) out += static_potential.cwiseProduct(c);
  return out;
}

ApplyFn Hamiltonian::as_function() const {
  return [this](const LatticeVector& c) { return apply(c); };
}

void PropagatorConfig::validate() const {
  const auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!positive(dt)) throw std::invalid_argument("dt must be positive");
  if (krylov_dim < 2) throw std::invalid_argument("krylov_dim must be at least 2");
  if (!positive(sc_tol) || !positive(inner_tol) || !positive(solver_tol) || !positive(phase_tol))
    throw std::invalid_argument("tolerances must be positive");
  if (max_inner < 1 || max_outer < 1 || anderson_depth < 0 || phase_max_iter < 0 || solver_max_iter < 0)
    throw std::invalid_argument("iteration limits must be positive");
  if (max_dv && !positive(*max_dv)) throw std::invalid_argument("max_dv must be positive");
  if (!positive(blowup_threshold)) throw std::invalid_argument("blowup_threshold must be positive");
  if (!std::isfinite(e0)) throw std::invalid_argument("e0 must be finite");
  if (!(prune_threshold >= 0.0) || !positive(pinv_rcond)) throw std::invalid_argument("bad solver thresholds");
}

LatticeVector arnoldi_step(const ApplyFn& h_apply, const LatticeVector& psi, double dt, int krylov_dim, double hbar,
                           double tol) {
  if (krylov_dim < 1) throw std::invalid_argument("arnoldi_step: krylov_dim must be positive");
  if (psi.norm() == 0.0 || dt == 0.0) return psi;
  return advance(h_apply, psi, dt, krylov_dim, hbar, tol, 0);
}

LatticeVector euler_maclaurin_f(const ApplyFn& h0_apply, const RealVector& v, const RealVector& v_dot,
                                const LatticeVector& psi, double dt, double hbar) {
  if (v.size() != psi.size() || v_dot.size() != psi.size()) throw DimensionMismatch("euler_maclaurin_f sizes");
  const LatticeVector vpsi = v.cwiseProduct(psi);
  const LatticeVector h0psi = h0_apply(psi);
  const LatticeVector psi_dot = (-kI / hbar) * (h0psi + vpsi);
  const LatticeVector bracket = -h0_apply(vpsi) / hbar + kI * (v_dot.cwiseProduct(psi) + v.cwiseProduct(psi_dot));
  return (dt * dt / (12.0 * hbar)) * bracket;
}

RealVector backward_derivative(const RealVector& v, const std::vector<const RealVector*>& previous, double dt) {
  if (previous.empty()) return RealVector::Zero(v.size());
  if (previous.size() == 1) return (v - *previous[0]) / dt;
  return (3.0 * v - 4.0 * *previous[0] + *previous[1]) / (2.0 * dt);
}

RealVector potential_time_derivative(const PotentialTrace& history, std::size_t t_index) {
  if (t_index >= history.frames()) throw std::out_of_range("potential_time_derivative: index");
  if (t_index == 0) return RealVector::Zero(history.v[0].size());
  const double dt = history.times[t_index] - history.times[t_index - 1];
  std::vector<const RealVector*> prev{&history.v[t_index - 1]};
  if (t_index >= 2) prev.push_back(&history.v[t_index - 2]);
  return backward_derivative(history.v[t_index], prev, dt);
}

double total_energy(const KSState& state, const Hamiltonian& h0, const RealVector& v) {
  double e = 0.0;
  for (const auto& c : state.orbitals) e += c.dot(h0.apply(c)).real() + v.dot(c.cwiseAbs2());
  return e;
}

RealVector energy_shift(const KSState& state, const Hamiltonian& h0, const RealVector& v, double e0) {
  const double e = total_energy(state, h0, v);
  return (v.array() - (e - e0) / static_cast<double>(state.particles())).matrix();
}

RealVector clamp_potential(const RealVector& v_new, const RealVector& v_old, std::optional<double> max_dv,
                           int* events) {
  if (v_new.size() != v_old.size()) throw DimensionMismatch("clamp_potential lengths");
  if (events) *events = 0;
  if (!max_dv) return v_new;
  RealVector out = v_new;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    const double lo = v_old[j] - *max_dv, hi = v_old[j] + *max_dv;
    if (out[j] < lo || out[j] > hi) {
      out[j] = std::clamp(out[j], lo, hi);
      if (events) ++*events;
    }
  }
  return out;
}

ForceBalanceSolve solve_force_balance(const KSState& state, const RealVector& n_ddot_aim, const PropagatorConfig& cfg) {
  const ForceBalanceOperator K(state);
  const auto m = static_cast<Eigen::Index>(state.size());
  if (n_ddot_aim.size() != m) throw DimensionMismatch("force balance target length");
  const RealVector s = project_out_constant(forced_acceleration(n_ddot_aim, free_acceleration(state, K.kinetic())));
  const RealVector d = K.diagonal();
  const DiagonalPreconditioner M = build_preconditioner(d, inf_norm(d), cfg.prune_threshold);
  const RealVector h = M.sqrt_m();

  ForceBalanceSolve out;
  out.pruned = M.pruned_mask;
  RealVector v;
  if (cfg.solver == PotentialSolver::pinv) {
    const RealMatrix a = h.asDiagonal() * fb_dense(state, std::numeric_limits<std::size_t>::max()) * h.asDiagonal();
    v = h.cwiseProduct(pinv_solve(a, h.cwiseProduct(s), cfg.pinv_rcond, std::numeric_limits<std::size_t>::max()));
  } else {
    const auto op = LinearOperator::symmetric(m, [&K](const RealVector& x) -> RealVector { return K.apply(x); });
    SolveReport rep;
    if (cfg.solver == PotentialSolver::minres_qlp) {
      rep = preconditioned_solve(op, M, s, cfg.solver_tol, cfg.solver_max_iter);
    } else {
      const auto scaled = LinearOperator::symmetric(
          m, [&K, &h](const RealVector& x) -> RealVector { return h.cwiseProduct(K.apply(h.cwiseProduct(x))); });
      rep = lsqr(scaled, h.cwiseProduct(s), cfg.solver_tol, cfg.solver_max_iter);
      rep.solution = h.cwiseProduct(rep.solution);
    }
    v = rep.solution;
    out.iterations = rep.iterations;
    out.ok = rep.ok();
  }
  if (!v.allFinite()) {
    out.ok = false;
    v.setZero();
  }
  RealVector r = K.apply(v) - s;
  for (Eigen::Index j = 0; j < m; ++j)
    if (out.pruned[static_cast<std::size_t>(j)]) r[j] = 0.0;
  out.residual = r.norm();
  for (Eigen::Index j = 0; j < m; ++j)
    if (out.pruned[static_cast<std::size_t>(j)]) v[j] = std::numeric_limits<double>::quiet_NaN();
  out.v = std::move(v);
  return out;
}

LatticeVector FixedPotentialStep::forward(const LatticeVector& psi_prev, const RealVector& v_prev,
                                          const RealVector& v_dot_prev) const {
  const double hbar = h0->grid().hbar;
  const ApplyFn h = h0->as_function();
  const LatticeVector minus = psi_prev - (kI * dt / (2.0 * hbar)) * v_prev.cwiseProduct(psi_prev) -
                              euler_maclaurin_f(h, v_prev, v_dot_prev, psi_prev, dt, hbar);
  return arnoldi_step(h, minus, dt, krylov_dim, hbar);
}

LatticeVector FixedPotentialStep::solve(const LatticeVector& psi_plus, const RealVector& v, const RealVector& v_dot,
                                        const LatticeVector& guess, int* iterations) const {
  const double hbar = h0->grid().hbar;
  const ApplyFn h = h0->as_function();
  Eigen::VectorXcd denom(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) denom[j] = 1.0 + kI * dt * v[j] / (2.0 * hbar);
  LatticeVector psi = guess;
  int k = 0;
  while (k < max_inner) {
    ++k;
    LatticeVector next = (psi_plus + euler_maclaurin_f(h, v, v_dot, psi, dt, hbar)).cwiseQuotient(denom);
    const double change = (next - psi).norm();
    psi = std::move(next);
    if (change < inner_tol) break;
  }
  if (iterations) *iterations += k;
  return psi;
}

StepResult initial_potential(const KSState& state, const Hamiltonian& h0, const DensityTrace& target,
                             std::size_t frame, const PropagatorConfig& cfg, const RealVector* previous) {
  const ForceBalanceSolve fb = solve_force_balance(state, target.n_ddot.at(frame), cfg);
  StepResult out{state, {}, RealVector::Zero(static_cast<Eigen::Index>(state.size())), {}};
  out.v = shifted_ks_potential(fb, state, h0, previous, cfg.e0, out.diagnostics.energy_shift);
  out.diagnostics.solver_iterations = fb.iterations;
  out.diagnostics.solver_residual = fb.residual;
  out.diagnostics.converged = fb.ok;
  for (bool p : fb.pruned) out.diagnostics.pruned_points += p;
  return out;
}

StepResult implicit_step(const KSState& state, const Hamiltonian& h0, const DensityTrace& target, std::size_t frame,
                         const PotentialTrace& history, const PropagatorConfig& cfg) {
  if (history.frames() == 0) throw std::invalid_argument("implicit_step: empty potential history");
  if (frame == 0 || frame >= target.frames()) throw std::out_of_range("implicit_step: frame");
  const double dt = target.times[frame] - target.times[frame - 1];
  const RealVector& v_prev = history.v.back();
  const RealVector& v_dot_prev = history.v_dot.back();
  std::vector<const RealVector*> earlier{&history.v.back()};
  if (history.frames() >= 2) earlier.push_back(&history.v[history.frames() - 2]);

  const FixedPotentialStep step{&h0, dt, cfg.krylov_dim, cfg.inner_tol, cfg.max_inner};
  const std::size_t np = state.particles();
  std::vector<LatticeVector> plus(np);
  for (std::size_t i = 0; i < np; ++i) plus[i] = step.forward(state.orbitals[i], v_prev, v_dot_prev);

  StepResult out{state, v_prev, v_dot_prev, {}};
  StepDiagnostics& diag = out.diagnostics;
  for (std::size_t i = 0; i < np; ++i)
    out.state.orbitals[i] = step.solve(plus[i], out.v, out.v_dot, state.orbitals[i], &diag.inner_iterations);

  // Fixed point V = G(V), G = force balance on the state propagated with V, accelerated
  // by Anderson mixing over the last cfg.anderson_depth iterates (0 = plain iteration).
  std::vector<RealVector> d_f, d_g;
  RealVector f_last, g_last;
  diag.converged = false;
  for (int outer = 1; outer <= cfg.max_outer; ++outer) {
    diag.outer_iterations = outer;
    const ForceBalanceSolve fb = solve_force_balance(out.state, target.n_ddot[frame], cfg);
    diag.solver_iterations += fb.iterations;
    diag.solver_residual = fb.residual;
    diag.pruned_points = 0;
    for (bool p : fb.pruned) diag.pruned_points += p;
    if (!fb.ok) break;
    RealVector g = shifted_ks_potential(fb, out.state, h0, &v_prev, cfg.e0, diag.energy_shift);
    g = clamp_potential(g, v_prev, cfg.max_dv, &diag.clamp_events);
    RealVector v = g;
    if (cfg.anderson_depth > 0) {
      const RealVector f = g - out.v;
      if (f_last.size()) {
        d_f.push_back(f - f_last);
        d_g.push_back(g - g_last);
        if (static_cast<int>(d_f.size()) > cfg.anderson_depth) {
          d_f.erase(d_f.begin());
          d_g.erase(d_g.begin());
        }
        RealMatrix df(f.size(), static_cast<Eigen::Index>(d_f.size()));
        for (std::size_t c = 0; c < d_f.size(); ++c) df.col(static_cast<Eigen::Index>(c)) = d_f[c];
        const RealVector gamma = df.colPivHouseholderQr().solve(f);
        for (std::size_t c = 0; c < d_g.size(); ++c) v -= gamma[static_cast<Eigen::Index>(c)] * d_g[c];
      }
      f_last = f;
      g_last = g;
    }
    const RealVector v_dot = backward_derivative(v, earlier, dt);

    double change = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
      LatticeVector next = step.solve(plus[i], v, v_dot, out.state.orbitals[i], &diag.inner_iterations);
      change = std::max(change, (next - out.state.orbitals[i]).norm());
      out.state.orbitals[i] = std::move(next);
    }
    out.v = v;
    out.v_dot = v_dot;
    diag.sc_change = change;
    if (!std::isfinite(change)) break;
    if (change < cfg.sc_tol) {
      diag.converged = true;
      break;
    }
  }
  return out;
}

InversionResult invert_trajectory(const DensityTrace& target, const KSState& initial, const Hamiltonian& h0,
                                  const PropagatorConfig& cfg, std::size_t start_frame, std::size_t end_frame,
                                  const std::function<void(std::size_t, const StepResult&)>& on_step) {
  cfg.validate();
  if (!target.grid.same_geometry(initial.grid)) throw std::invalid_argument("target and state grids differ");
  if (start_frame >= target.frames()) throw std::out_of_range("start frame beyond trace");
  if (end_frame == 0 || end_frame > target.frames()) end_frame = target.frames();
  const double n_err0 = inf_norm(density(initial) - target.n[start_frame]);
  if (n_err0 > 1e-8) throw std::invalid_argument("initial state does not reproduce the target density");

  InversionResult res;
  StepResult first = initial_potential(initial, h0, target, start_frame, cfg);
  res.potentials.times.push_back(target.times[start_frame]);
  res.potentials.v.push_back(first.v);
  res.potentials.v_dot.push_back(first.v_dot);
  res.potentials.energy_shifts.push_back(first.diagnostics.energy_shift);
  res.density_error.push_back(n_err0);
  res.steps.push_back(first.diagnostics);
  if (on_step) on_step(start_frame, first);
  KSState state = initial;

  for (std::size_t k = start_frame + 1; k < end_frame; ++k) {
    StepResult step;
    try {
      step = implicit_step(state, h0, target, k, res.potentials, cfg);
      if (cfg.reassign_phases_every_step && step.diagnostics.converged) {
        try {
          step.state = assign_phases_multi(step.state, target.n_dot[k], cfg.phase_tol, cfg.phase_max_iter, cfg.phase);
        } catch (const PhaseAssignmentError&) {
          // Keep the propagated phases; the density check below decides whether the run continues.
        }
      }
    } catch (const std::exception& e) {
      res.failure_time = target.times[k];
      res.failure_reason = e.what();
      break;
    }
    const double err = inf_norm(density(step.state) - target.n[k]);
    res.potentials.times.push_back(target.times[k]);
    res.potentials.v.push_back(step.v);
    res.potentials.v_dot.push_back(step.v_dot);
    res.potentials.energy_shifts.push_back(step.diagnostics.energy_shift);
    res.density_error.push_back(err);
    res.steps.push_back(step.diagnostics);
    if (on_step) on_step(k, step);
    if (!step.diagnostics.converged) {
      res.failure_time = target.times[k];
      res.failure_reason = "self-consistency loop did not converge";
      break;
    }
    if (!(err <= cfg.blowup_threshold) || !step.v.allFinite()) {
      res.failure_time = target.times[k];
      res.failure_reason = "density error exceeded the blow-up threshold";
      break;
    }
    state = std::move(step.state);
  }
  res.final_state = state;
  return res;
}

}  // namespace tdks
