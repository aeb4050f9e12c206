// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed below.
// Usage: acceptance [--full-scale] [--only N]...
// TDKS_FULL_SCALE=1 in the environment also enables the 271 x 271 occupation check.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "tdks/forcebalance.hpp"
#include "tdks/krylov.hpp"
#include "tdks/ksinit.hpp"
#include "tdks/propagation.hpp"
#include "tdks/systems.hpp"

using namespace tdks;

namespace {

namespace tol {
constexpr double c1_potential = 5e-4;
constexpr double c1_density = 1e-5;
constexpr double c1_support = 1e-3;
constexpr double c2_flatness = 0.10;
constexpr double c3_reference_occupation = 0.999999799989864;
constexpr double c3_full_tol = 1e-8;
constexpr double c3_desk_degeneracy = 1e-10;
constexpr double c3_desk_floor = 0.9999;
constexpr double c4_density = 1e-3;
constexpr double c4_until = 3.5;
constexpr double c4_complete = 5.9;
constexpr double c4_restart = 5.9;
constexpr double c5_zero = 1e-9;
constexpr double c6_matvec = 1e-12;
constexpr double c6_fd = 1e-5;
constexpr double c6_fd_step = 1e-4;
constexpr double c6_pinv = 1e-8;
constexpr double c7_ratio = 8.0;
constexpr double c7_band = 0.30;
constexpr double c8_noise = 0.3;
constexpr double c8_tol = 1e-10;
constexpr int c8_iterations = 15;
constexpr int c8_required = 95;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

RealMatrix dense_h(const Grid& g, const RealVector& v) {
  RealMatrix h = oracle::dense_t(g);
  h.diagonal() += v;
  return h;
}

RealVector gaussian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  RealVector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Potential error (v - v[jmax]) - (ref - ref[jmax]) with jmax the max-density point.
RealVector aligned_error(const RealVector& v, const RealVector& ref, const RealVector& n) {
  Eigen::Index j = 0;
  n.maxCoeff(&j);
  return (v.array() - v[j] - (ref.array() - ref[j])).matrix();
}

// Criteria 1 and 2 share one inversion of the harmonic test.
struct HarmonicRun {
  ModelSystem sys;
  ReferenceRun ref;
  InversionResult inv;
  double seconds = 0.0;
};

const HarmonicRun& harmonic_run() {
  static const HarmonicRun run = [] {
    HarmonicRun r;
    const auto t0 = std::chrono::steady_clock::now();
    r.sys = harmonic_test();
    r.ref = generate_reference(r.sys);
    const KSState ks = prepare_ks_state(r.sys.grid, 1, r.ref.rho0, r.ref.trace.n[0], r.ref.trace.n_dot[0]);
    PropagatorConfig cfg;
    cfg.dt = r.sys.dt;
    r.inv = invert_trajectory(r.ref.trace, ks, Hamiltonian(r.sys.grid, r.sys.inversion_static_potential()), cfg);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  return run;
}

Outcome criterion1() {
  const HarmonicRun& r = harmonic_run();
  std::ostringstream os;
  bool ok = !r.inv.failed();
  if (r.inv.failed()) os << "failed at t=" << *r.inv.failure_time << " (" << r.inv.failure_reason << "); ";
  double n_err = 0.0;
  for (double e : r.inv.density_error) n_err = std::max(n_err, e);
  ok = ok && n_err <= tol::c1_density;
  os << "max density error " << sci(n_err) << " (<= " << sci(tol::c1_density) << ")";
  for (double t : r.sys.snapshot_times) {
    const std::size_t k = r.ref.trace.frame_at(t);
    if (k >= r.inv.potentials.frames()) {
      os << "; t=" << t << " not reached";
      ok = false;
      continue;
    }
    const RealVector& n = r.ref.trace.n[k];
    const RealVector e = aligned_error(r.inv.potentials.v[k], r.sys.potential_at(r.ref.trace.times[k]), n);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n.size(); ++j)
      if (n[j] > tol::c1_support) worst = std::max(worst, std::abs(e[j]));
    ok = ok && worst <= tol::c1_potential;
    os << "; |dv| at t=" << std::setprecision(4) << r.ref.trace.times[k] << ": " << sci(worst);
  }
  os << " (<= " << sci(tol::c1_potential) << "); " << std::fixed << std::setprecision(0) << r.seconds << " s";
  return {ok, os.str()};
}

Outcome criterion2() {
  const HarmonicRun& r = harmonic_run();
  const std::size_t k = r.ref.trace.frame_at(0.5 * std::numbers::pi);
  if (k >= r.inv.potentials.frames()) return {false, "t=T/4 not reached"};
  const RealVector& n = r.ref.trace.n[k];
  const RealVector x = r.sys.grid.axis();
  const RealVector e = aligned_error(r.inv.potentials.v[k], r.sys.potential_at(r.ref.trace.times[k]), n);
  Eigen::Index jmax = 0;
  n.maxCoeff(&jmax);
  // The aligned packet holds the max-density point; the shift shows on the other one.
  const double side = x[jmax] > 0 ? 1.0 : -1.0;
  double aligned_max = 0.0, sum = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < n.size(); ++j) {
    if (n[j] <= tol::c1_support) continue;
    if (x[j] * side > 0) aligned_max = std::max(aligned_max, std::abs(e[j]));
    else {
      sum += e[j];
      ++count;
    }
  }
  if (count == 0) return {false, "no support on the far packet"};
  const double mean = sum / count;
  double spread = 0.0;
  for (Eigen::Index j = 0; j < n.size(); ++j)
    if (n[j] > tol::c1_support && x[j] * side < 0) spread = std::max(spread, std::abs(e[j] - mean));
  const bool flat = spread <= tol::c2_flatness * std::abs(mean);
  const bool exceeds = std::abs(mean) > aligned_max;
  std::ostringstream os;
  os << "far packet (" << (side > 0 ? "left" : "right") << ") mean offset " << sci(mean) << ", max deviation "
     << sci(spread) << " (<= " << tol::c2_flatness << " x |mean|: " << (flat ? "yes" : "no")
     << "); aligned packet max error " << sci(aligned_max) << " (offset larger: " << (exceeds ? "yes" : "no") << ")";
  return {flat && exceeds, os.str()};
}

Outcome criterion3(bool full_scale) {
  const ModelSystem desk = two_electron_system(false);
  const EigenResult r = lowest_triplet(desk);
  const NaturalOrbitalSet no = natural_orbitals(pair_one_rdm(r.psi, desk.grid.points), 2);
  const double gap = std::abs(no.occupations[0] - no.occupations[1]);
  bool ok = gap <= tol::c3_desk_degeneracy && no.occupations[1] > tol::c3_desk_floor;
  std::ostringstream os;
  os << std::setprecision(13) << "desk L=81: occupations " << no.occupations[0] << ", " << no.occupations[1]
     << " (gap " << sci(gap) << " <= " << sci(tol::c3_desk_degeneracy) << ", > " << tol::c3_desk_floor << ")";
  if (full_scale) {
    const ModelSystem full = two_electron_system(true);
    const EigenResult rf = lowest_triplet(full);
    const NaturalOrbitalSet nf = natural_orbitals(pair_one_rdm(rf.psi, full.grid.points), 2);
    const double dev = std::max(std::abs(nf.occupations[0] - tol::c3_reference_occupation),
                                std::abs(nf.occupations[1] - tol::c3_reference_occupation));
    ok = ok && dev <= tol::c3_full_tol;
    os << "; full L=271: " << std::setprecision(15) << nf.occupations[0] << ", " << nf.occupations[1]
       << " vs 0.999999799989864 (deviation " << sci(dev) << ", tol " << sci(tol::c3_full_tol) << ")";
  } else {
    os << "; full-scale check skipped (pass --full-scale)";
  }
  return {ok, os.str()};
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSystem sys = two_electron_system(false);
  ReferenceOptions opt;
  opt.rdm_every = 10;
  const ReferenceRun ref = generate_reference(sys, opt);
  const KSState ks = prepare_ks_state(sys.grid, 2, ref.rho0, ref.trace.n[0], ref.trace.n_dot[0]);
  PropagatorConfig cfg;
  cfg.dt = sys.dt;
  const Hamiltonian h0(sys.grid, sys.inversion_static_potential());
  const InversionResult inv = invert_trajectory(ref.trace, ks, h0, cfg);

  std::ostringstream os;
  double early = 0.0;
  for (std::size_t k = 0; k < inv.density_error.size(); ++k)
    if (inv.potentials.times[k] <= tol::c4_until + 1e-9) early = std::max(early, inv.density_error[k]);
  const bool reached_early = !inv.potentials.times.empty() && inv.potentials.times.back() >= tol::c4_until - 1e-9;
  bool ok = reached_early && early <= tol::c4_density;
  os << "max density error to t=" << tol::c4_until << ": " << sci(early) << " (<= " << sci(tol::c4_density) << ")";
  const double reached = inv.potentials.times.empty() ? 0.0 : inv.potentials.times.back();
  if (inv.failed()) {
    os << "; structured failure at t=" << *inv.failure_time << " (" << inv.failure_reason << ")";
  } else {
    os << "; completed to t=" << reached;
    ok = ok && reached >= tol::c4_complete - 1e-9;
  }

  // Restart from the exact 1RDM at a later checkpoint.
  const std::size_t frame = ref.trace.frame_at(tol::c4_restart);
  std::size_t c = 0;
  while (c < ref.rdm_frames.size() && ref.rdm_frames[c] < frame) ++c;
  if (c == ref.rdm_frames.size()) return {false, os.str() + "; no checkpoint for the restart"};
  const std::size_t start = ref.rdm_frames[c];
  const KSState ks2 = prepare_ks_state(sys.grid, 2, ref.rdms[c], ref.trace.n[start], ref.trace.n_dot[start]);
  const InversionResult again = invert_trajectory(ref.trace, ks2, h0, cfg, start);
  double restart_err = 0.0;
  for (double e : again.density_error) restart_err = std::max(restart_err, e);
  const bool restart_ok = !again.failed() && restart_err <= tol::c4_density;
  ok = ok && restart_ok;
  os << "; restart at t=" << ref.trace.times[start] << ": " << (again.failed() ? "failed" : "completed to t=")
     << (again.failed() ? "" : std::to_string(again.potentials.times.back())) << ", max density error "
     << sci(restart_err) << "; " << std::fixed << std::setprecision(0)
     << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s";
  return {ok, os.str()};
}

Outcome criterion5() {
  int checked = 0, matched = 0;
  const auto check = [&](const Grid& g, const RealVector& v) {
    const RealMatrix h = dense_h(g, v);
    const Eigen::SelfAdjointEigenSolver<RealMatrix> es(h);
    for (int k = 1; k <= 5; ++k) {
      const InertiaReport rep = inertia_check(g, es.eigenvectors().col(k - 1), h, k, tol::c5_zero);
      ++checked;
      const int L = g.points;
      if (rep.full_support && rep.matches_theorem && rep.k == Inertia{k - 1, 1, L - k} && rep.k == rep.shifted_h)
        ++matched;
    }
  };
  Grid hg = Grid::spanning(-4, 4, 35);
  hg.offset[0] = 0.5 * hg.dx;
  check(hg, (0.5 * hg.axis().array().square()).matrix());
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  const Grid rg = Grid::spanning(-4.8, 4.8, 25);
  for (int trial = 0; trial < 10; ++trial) {
    RealVector v(25);
    for (auto& e : v) e = u(rng);
    check(rg, v);
  }
  std::ostringstream os;
  os << matched << "/" << checked << " eigenstates with inertia (k-1, 1, L-k) equal to that of H - lambda_k";
  return {matched == checked, os.str()};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  Grid g;
  g.points = 25;
  g.dx = 0.4;
  std::ostringstream os;
  bool ok = true;

  double matvec = 0.0;
  for (int particles : {1, 2, 3}) {
    const KSState s = oracle::random_state(g, particles, rng);
    const RealMatrix kd = oracle::dense_k(s);
    const ForceBalanceOperator K(s);
    for (int trial = 0; trial < 5; ++trial) {
      const RealVector v = gaussian(25, rng);
      const RealVector ref = kd * v;
      matvec = std::max(matvec, (K.apply(v) - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
  }
  ok = ok && matvec <= tol::c6_matvec;
  os << "K matvec " << sci(matvec);

  // The O(h^2) truncation of the difference quotient needs a coarser lattice.
  Grid gc = g;
  gc.dx = 0.8;
  const KSState s = oracle::random_state(gc, 2, rng);
  const RealVector x = gc.axis();
  const RealVector v = 0.5 * x.cwiseAbs2() + 0.3 * x;
  const RealMatrix h = dense_h(gc, v);
  const double dt = tol::c6_fd_step;
  const RealVector fd = (oracle::dense_density(oracle::evolve_state(s, h, dt)) - 2 * oracle::dense_density(s) +
                         oracle::dense_density(oracle::evolve_state(s, h, -dt))) /
                        (dt * dt);
  const double qerr = (free_acceleration(s) + ForceBalanceOperator(s).apply(v) - fd).cwiseAbs().maxCoeff();
  ok = ok && qerr <= tol::c6_fd;
  os << ", q + K v vs difference " << sci(qerr);

  const KSState s1 = oracle::random_state(g, 1, rng);
  const RealMatrix kd = oracle::dense_k(s1);
  const RealVector amp = s1.orbitals[0].cwiseAbs();
  RealVector th(25);
  for (Eigen::Index j = 0; j < 25; ++j) th[j] = std::arg(s1.orbitals[0][j]);
  const auto with = [&](const RealVector& t) {
    LatticeVector c(25);
    for (Eigen::Index j = 0; j < 25; ++j) c[j] = std::polar(amp[j], t[j]);
    return density_derivative(KSState{g, {c}});
  };
  double jac = 0.0;
  const double hstep = 1e-6;
  for (int j = 0; j < 25; ++j) {
    RealVector tp = th, tm = th;
    tp[j] += hstep;
    tm[j] -= hstep;
    jac = std::max(jac, ((with(tp) - with(tm)) / (2 * hstep) + g.hbar * kd.col(j)).cwiseAbs().maxCoeff());
  }
  ok = ok && jac <= tol::c6_fd;
  os << ", Newton Jacobian " << sci(jac);

  double minres = 0.0, lsq = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 50, nullity = 1 + trial % 3;
    RealMatrix q = gaussian(n * n, rng).reshaped(n, n);
    q = Eigen::HouseholderQR<RealMatrix>(q).householderQ();
    RealVector lambda = gaussian(n, rng);
    for (int k = 0; k < n; ++k) lambda[k] = (lambda[k] > 0 ? 1.0 : -1.0) * (0.1 + std::abs(lambda[k]));
    lambda.head(nullity).setZero();
    const RealMatrix a = q * lambda.asDiagonal() * q.transpose();
    const RealVector b = a * gaussian(n, rng);
    const RealVector ref = oracle::dense_pinv_solve(a, b);
    const auto op = LinearOperator::from_dense(a);
    minres = std::max(minres, (minres_qlp(op, b, 1e-14, 500).solution - ref).norm() / ref.norm());
    lsq = std::max(lsq, (lsqr(op, b, 1e-14, 2000).solution - ref).norm() / ref.norm());
  }
  ok = ok && minres <= tol::c6_pinv && lsq <= tol::c6_pinv;
  os << ", MINRES-QLP " << sci(minres) << ", LSQR " << sci(lsq) << " (tolerances " << sci(tol::c6_matvec) << ", "
     << sci(tol::c6_fd) << ", " << sci(tol::c6_fd) << ", " << sci(tol::c6_pinv) << ")";
  return {ok, os.str()};
}

Outcome criterion7() {
  const ModelSystem sys = harmonic_test();
  const Grid& g = sys.grid;
  const RealVector v = sys.potential_at(0.0);
  const LatticeVector psi0 = initial_wavefunction(sys);
  const double t_end = 0.5 * std::numbers::pi;
  const Hamiltonian h(g, v);
  const RealVector exact = arnoldi_step(h.as_function(), psi0, t_end, 60, g.hbar, 1e-14).cwiseAbs2();
  const Hamiltonian h0(g);
  const RealVector zero = RealVector::Zero(v.size());
  std::vector<double> errs;
  for (int steps : {100, 200, 400}) {
    const double dt = t_end / steps;
    const FixedPotentialStep step{&h0, dt, 30, 1e-14, 200};
    LatticeVector psi = psi0;
    for (int k = 0; k < steps; ++k) psi = step.solve(step.forward(psi, v, zero), v, zero, psi);
    errs.push_back((psi.cwiseAbs2() - exact).cwiseAbs().maxCoeff());
  }
  const double r1 = errs[0] / errs[1], r2 = errs[1] / errs[2];
  const double lo = tol::c7_ratio * (1 - tol::c7_band), hi = tol::c7_ratio * (1 + tol::c7_band);
  std::ostringstream os;
  os << "density errors at T/4 for 100/200/400 steps: " << sci(errs[0]) << ", " << sci(errs[1]) << ", "
     << sci(errs[2]) << "; halving ratios " << std::setprecision(3) << r1 << ", " << r2 << " (required " << lo
     << " to " << hi << ")";
  return {r1 >= lo && r1 <= hi && r2 >= lo && r2 <= hi, os.str()};
}

Outcome criterion8() {
  Grid g;
  g.points = 25;
  g.dx = 0.4;
  const RealVector x = g.axis();
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(dense_h(g, (0.5 * x.array().square()).matrix()));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> noise(-tol::c8_noise, tol::c8_noise);

  const auto trial = [&](const LatticeVector& c) {
    const RealVector n = c.cwiseAbs2();
    const RealVector aim = density_derivative(KSState{g, {c}});
    RealVector th0(25);
    for (Eigen::Index j = 0; j < 25; ++j) th0[j] = std::arg(c[j]) + noise(rng);
    try {
      PhaseReport rep;
      assign_phases_single(n, aim, th0, g, tol::c8_tol, tol::c8_iterations, {}, &rep);
      return rep.residual() <= tol::c8_tol && rep.iterations <= tol::c8_iterations;
    } catch (const PhaseAssignmentError&) {
      return false;
    }
  };
  const auto superposition = [&] {
    LatticeVector c = LatticeVector::Zero(25);
    for (int k = 0; k < 5; ++k) c += std::complex<double>(gauss(rng), gauss(rng)) * es.eigenvectors().col(k);
    return LatticeVector(c.normalized());
  };
  int smooth = 0, rough = 0, more = 0;
  for (int t = 0; t < 100; ++t)
    if (trial(superposition())) ++smooth;
  for (int t = 0; t < 1000; ++t)
    if (trial(superposition())) ++more;
  for (int t = 0; t < 100; ++t) {
    if (trial(oracle::random_state(g, 1, rng).orbitals[0])) ++rough;
  }
  std::ostringstream os;
  os << smooth << "/100 converged (superpositions of the five lowest harmonic eigenstates; required "
     << tol::c8_required << "); for reference " << more << "/1000 on further states of the same ensemble and "
     << rough << "/100 on white-noise states";
  return {smooth >= tol::c8_required, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  bool full_scale = false;
  if (const char* env = std::getenv("TDKS_FULL_SCALE")) full_scale = std::strcmp(env, "0") != 0;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--full-scale") == 0) full_scale = true;
    else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only.insert(std::atoi(argv[++i]));
    else {
      std::cerr << "usage: acceptance [--full-scale] [--only N]...\n";
      return 2;
    }
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, [&] { return criterion3(full_scale); }},
      {4, criterion4}, {5, criterion5}, {6, criterion6},
      {7, criterion7}, {8, criterion8},
  };
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
