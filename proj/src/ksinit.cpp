#include "tdks/ksinit.hpp"

#include <cmath>
#include <complex>
#include <memory>

#include "tdks/forcebalance.hpp"

namespace tdks {

namespace {

using cd = std::complex<double>;

double inf_norm(const RealVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

KSState with_phases(const Grid& grid, const std::vector<RealVector>& amp, const std::vector<RealVector>& theta) {
  KSState s{grid, {}};
  for (std::size_t i = 0; i < amp.size(); ++i) {
    LatticeVector c(amp[i].size());
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] = std::polar(amp[i][j], theta[i][j]);
    s.orbitals.push_back(std::move(c));
  }
  return s;
}

Eigen::Index argmax(const RealVector& v) {
  Eigen::Index p = 0;
  v.maxCoeff(&p);
  return p;
}

struct Newton {
  Grid grid;
  std::shared_ptr<const KineticOperator> kinetic;
  std::vector<RealVector> amp;
  std::vector<RealVector> theta;
  std::vector<Eigen::Index> gauge;
  RealVector aim;
  PhaseOptions options;

  RealVector mismatch(const std::vector<RealVector>& th) const {
    return density_derivative(with_phases(grid, amp, th), *kinetic) - aim;
  }

  // Solves [K^(1) ... K^(N)] dtheta = (n_dot - n_dot_aim)/hbar with per-particle right
  // scaling M^(i) and left scaling M of the total operator.
  std::vector<RealVector> direction(const RealVector& mis) const {
    const KSState s = with_phases(grid, amp, theta);
    const ForceBalanceOperator K(s, kinetic);
    const std::size_t np = amp.size();
    const Eigen::Index m = static_cast<Eigen::Index>(s.size());
    const RealVector rhs = mis / grid.hbar;

    std::vector<RealVector> right(np);
    for (std::size_t i = 0; i < np; ++i) {
      const RealVector d = K.particle_diagonal(i);
      right[i] = build_preconditioner(d, inf_norm(d), options.prune_threshold).sqrt_m();
    }
    const RealVector dt = K.diagonal();
    const RealVector left = build_preconditioner(dt, inf_norm(dt), options.prune_threshold).sqrt_m();

    RealVector y;
    const RealVector b = left.cwiseProduct(rhs);
    if (options.solver == PhaseSolver::pinv) {
      RealMatrix a(m, m * static_cast<Eigen::Index>(np));
      for (std::size_t i = 0; i < np; ++i) {
        const RealMatrix ki = fb_dense(KSState{grid, {s.orbitals[i]}});
        a.middleCols(static_cast<Eigen::Index>(i) * m, m) = left.asDiagonal() * ki * right[i].asDiagonal();
      }
      y = pinv_solve(a, b);
    } else {
      LinearOperator op;
      op.rows = m;
      op.cols = m * static_cast<Eigen::Index>(np);
      op.apply = [&](const RealVector& x) -> RealVector {
        RealVector out = RealVector::Zero(m);
        for (std::size_t i = 0; i < np; ++i)
          out += K.apply_particle(i, right[i].cwiseProduct(x.segment(static_cast<Eigen::Index>(i) * m, m)));
        return left.cwiseProduct(out);
      };
      op.apply_transpose = [&](const RealVector& z) -> RealVector {
        const RealVector lz = left.cwiseProduct(z);
        RealVector out(m * static_cast<Eigen::Index>(np));
        for (std::size_t i = 0; i < np; ++i)
          out.segment(static_cast<Eigen::Index>(i) * m, m) = right[i].cwiseProduct(K.apply_particle(i, lz));
        return out;
      };
      y = lsqr(op, b, options.solver_tol, options.solver_max_iter).solution;
    }

    std::vector<RealVector> step(np);
    for (std::size_t i = 0; i < np; ++i) {
      step[i] = right[i].cwiseProduct(y.segment(static_cast<Eigen::Index>(i) * m, m));
      const double pinned = step[i][gauge[i]];
      for (Eigen::Index j = 0; j < m; ++j)
        if (right[i][j] != 0.0) step[i][j] -= pinned;
    }
    return step;
  }

  // Convergence is judged in the max norm; step acceptance uses the 2-norm, for which
  // the Newton direction is always a descent direction.
  void run(double tol, int max_iter, PhaseReport& report) {
    RealVector mis = mismatch(theta);
    double r = inf_norm(mis);
    double merit = mis.norm();
    report = PhaseReport{};
    report.residual_history.push_back(r);
    if (r <= tol) return;
    for (int it = 1; it <= max_iter; ++it) {
      const std::vector<RealVector> step = direction(mis);
      double alpha = 1.0;
      bool accepted = false;
      for (int h = 0; h <= options.max_halvings; ++h, alpha *= 0.5) {
        std::vector<RealVector> trial = theta;
        for (std::size_t i = 0; i < trial.size(); ++i) trial[i] += alpha * step[i];
        RealVector trial_mis = mismatch(trial);
        const double tm = trial_mis.norm();
        if (tm < merit) {
          theta = std::move(trial);
          mis = std::move(trial_mis);
          merit = tm;
          r = inf_norm(mis);
          report.halvings += h;
          accepted = true;
          break;
        }
      }
      report.iterations = it;
      report.residual_history.push_back(r);
      if (!accepted) throw PhaseAssignmentError("phase assignment stalled", r, it);
      if (r <= tol) return;
    }
    throw PhaseAssignmentError("phase assignment did not converge", r, max_iter);
  }
};

Newton make_newton(const Grid& grid, std::vector<RealVector> amp, std::vector<RealVector> theta,
                   const RealVector& aim, const PhaseOptions& options) {
  if (aim.size() != static_cast<Eigen::Index>(grid.size())) throw DimensionMismatch("phase target length");
  Newton nw{grid, std::make_shared<const KineticOperator>(grid), std::move(amp), std::move(theta), {}, aim, options};
  for (const auto& a : nw.amp) {
    if (a.size() != aim.size()) throw DimensionMismatch("amplitude length");
    nw.gauge.push_back(argmax(a));
  }
  return nw;
}

cd unit_phase(cd z) {
  const double a = std::abs(z);
  return a > 0.0 ? z / a : cd(1.0, 0.0);
}

}  // namespace

PhaseVector assign_phases_single(const RealVector& n, const RealVector& n_dot_aim, const RealVector& theta0,
                                 const Grid& grid, double tol, int max_iter, const PhaseOptions& options,
                                 PhaseReport* report) {
  if (n.size() != theta0.size()) throw DimensionMismatch("theta0 length");
  if ((n.array() < 0).any()) throw std::invalid_argument("negative density");
  Newton nw = make_newton(grid, {n.cwiseSqrt()}, {theta0}, n_dot_aim, options);
  PhaseReport local;
  nw.run(tol, max_iter, report ? *report : local);
  return PhaseVector{nw.theta, nw.gauge};
}

KSState assign_phases_multi(const KSState& state, const RealVector& n_dot_aim, double tol, int max_iter,
                            const PhaseOptions& options, PhaseReport* report) {
  std::vector<RealVector> amp, theta;
  for (const auto& c : state.orbitals) {
    amp.push_back(c.cwiseAbs());
    RealVector th(c.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) th[j] = std::arg(c[j]);
    theta.push_back(std::move(th));
  }
  Newton nw = make_newton(state.grid, std::move(amp), std::move(theta), n_dot_aim, options);
  PhaseReport local;
  nw.run(tol, max_iter, report ? *report : local);
  if ((report ? *report : local).iterations == 0) return state;
  return with_phases(state.grid, nw.amp, nw.theta);
}

NaturalOrbitalSet natural_orbitals(const ComplexMatrix& rho, Eigen::Index rank) {
  if (rho.rows() != rho.cols()) throw DimensionMismatch("1RDM must be square");
  if (rank < 1 || rank > rho.rows()) throw std::invalid_argument("natural_orbitals: rank out of range");
  const Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho);
  if (es.info() != Eigen::Success) throw std::runtime_error("natural_orbitals: eigensolver failed");
  NaturalOrbitalSet out;
  out.occupations.resize(rank);
  out.orbitals.resize(rho.rows(), rank);
  const Eigen::Index last = rho.rows() - 1;
  for (Eigen::Index k = 0; k < rank; ++k) {
    out.occupations[k] = es.eigenvalues()[last - k];
    LatticeVector u = es.eigenvectors().col(last - k);
    Eigen::Index p = 0;
    u.cwiseAbs().maxCoeff(&p);
    u *= std::conj(unit_phase(u[p]));
    u[p] = std::abs(u[p]);
    out.orbitals.col(k) = u;
  }
  return out;
}

namespace {

// u1 = sqrt(n) cos(theta) p1, u2 = sqrt(n) sin(theta) p2 with the phases p held fixed, so the
// density is exact by construction; Gauss-Newton on theta for |u1| = 1 and <u1|u2> = 0.
bool mixing_angle_newton(LatticeVector& u1, LatticeVector& u2, const RealVector& n_target, double tol, int max_iter,
                         int& iterations) {
  const Eigen::Index size = n_target.size();
  RealVector theta(size);
  LatticeVector c(size), p1(size), p2(size);
  for (Eigen::Index j = 0; j < size; ++j) {
    theta[j] = std::atan2(std::abs(u2[j]), std::abs(u1[j]));
    p1[j] = unit_phase(u1[j]);
    p2[j] = unit_phase(u2[j]);
    c[j] = std::conj(p1[j]) * p2[j];
  }
  const auto rebuild = [&]() {
    for (Eigen::Index j = 0; j < size; ++j) {
      const double r = std::sqrt(n_target[j]);
      u1[j] = r * std::cos(theta[j]) * p1[j];
      u2[j] = r * std::sin(theta[j]) * p2[j];
    }
  };
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, 3, Eigen::Dynamic> jac(3, size);
    for (Eigen::Index j = 0; j < size; ++j) {
      const double n = n_target[j];
      const double s2 = std::sin(2.0 * theta[j]);
      const double c2 = std::cos(2.0 * theta[j]);
      g[0] += n * std::cos(theta[j]) * std::cos(theta[j]);
      g[1] += 0.5 * n * s2 * c[j].real();
      g[2] += 0.5 * n * s2 * c[j].imag();
      jac(0, j) = -n * s2;
      jac(1, j) = n * c2 * c[j].real();
      jac(2, j) = n * c2 * c[j].imag();
    }
    g[0] -= 1.0;
    if (g.cwiseAbs().maxCoeff() <= 0.1 * tol) {
      rebuild();
      return true;
    }
    theta -= jac.completeOrthogonalDecomposition().solve(g);
    ++iterations;
  }
  rebuild();
  return false;
}

}  // namespace

std::pair<LatticeVector, LatticeVector> ks_orbitals_from_density(LatticeVector u1, LatticeVector u2,
                                                                 const RealVector& n_target, double tol,
                                                                 int max_sweeps, int* sweeps) {
  if (u1.size() != n_target.size() || u2.size() != n_target.size()) throw DimensionMismatch("sweep lengths");
  if ((n_target.array() < 0).any()) throw std::invalid_argument("negative target density");
  const auto mismatch = [&]() { return (u1.cwiseAbs2() + u2.cwiseAbs2() - n_target).cwiseAbs().maxCoeff(); };
  const auto converged = [&]() { return mismatch() <= tol && std::abs(u1.dot(u2)) <= tol; };
  double err = mismatch();
  int done = 0;
  while (!converged()) {
    if (done == max_sweeps) throw std::runtime_error("density sweep did not converge");
    for (Eigen::Index j = 0; j < n_target.size(); ++j) {
      const double n = n_target[j];
      const double a1 = std::norm(u1[j]);
      const double a2 = std::norm(u2[j]);
      if (a1 < n) {
        u2[j] = unit_phase(u2[j]) * std::sqrt(n - a1);
      } else if (a2 < n) {
        u1[j] = unit_phase(u1[j]) * std::sqrt(n - a2);
      } else {
        u1[j] = unit_phase(u1[j]) * std::sqrt(n);
        u2[j] = 0.0;
      }
    }
    u1.normalize();
    u2 -= u1.dot(u2) * u1;
    u2.normalize();
    ++done;
    const double next = mismatch();
    // The elementwise rule can stall at a point that is not a solution.
    if (next > 0.5 * err && !converged()) {
      if (!mixing_angle_newton(u1, u2, n_target, tol, std::max(1, max_sweeps - done), done) || !converged())
        throw std::runtime_error("density sweep did not converge");
      break;
    }
    err = next;
  }
  if (sweeps) *sweeps = done;
  return {std::move(u1), std::move(u2)};
}

std::pair<RealVector, RealVector> ks_orbitals_from_density(const RealVector& u1, const RealVector& u2,
                                                           const RealVector& n_target, double tol, int max_sweeps,
                                                           int* sweeps) {
  auto [c1, c2] = ks_orbitals_from_density(LatticeVector(u1.cast<cd>()), LatticeVector(u2.cast<cd>()), n_target,
                                           tol, max_sweeps, sweeps);
  return {c1.real(), c2.real()};
}

KSState prepare_ks_state(const Grid& grid, int particles, const ComplexMatrix& rho, const RealVector& n,
                         const RealVector& n_dot_aim, double tol, int max_iter, const PhaseOptions& options,
                         KSInitReport* report) {
  if (particles != 1 && particles != 2)
    throw std::invalid_argument("KS initialization is implemented for one or two particles");
  const NaturalOrbitalSet nos = natural_orbitals(rho, particles);
  KSInitReport local;
  KSInitReport& rep = report ? *report : local;
  rep.occupations = nos.occupations;
  KSState s{grid, {}};
  if (particles == 1) {
    LatticeVector c(n.size());
    for (Eigen::Index j = 0; j < n.size(); ++j) c[j] = unit_phase(nos.orbitals(j, 0)) * std::sqrt(std::max(n[j], 0.0));
    s.orbitals.push_back(std::move(c));
  } else {
    auto [u1, u2] = ks_orbitals_from_density(LatticeVector(nos.orbitals.col(0)), LatticeVector(nos.orbitals.col(1)),
                                             n, 1e-12, 100000, &rep.sweeps);
    s.orbitals = {std::move(u1), std::move(u2)};
  }
  s = assign_phases_multi(s, n_dot_aim, tol, max_iter, options, &rep.phases);
  rep.density_error = (density(s) - n).cwiseAbs().maxCoeff();
  rep.overlap = particles == 2 ? std::abs(s.orbitals[0].dot(s.orbitals[1])) : 0.0;
  return s;
}

}  // namespace tdks
