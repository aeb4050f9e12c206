#include "tdks/systems.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tdks/forcebalance.hpp"

namespace tdks {

namespace {

using cd = std::complex<double>;

// (f - swap f) / 2 on the product lattice.
template <typename Vec>
Vec project_antisymmetric(const Vec& f, int points) {
  const auto L = static_cast<Eigen::Index>(points);
  if (f.size() != L * L) throw DimensionMismatch("pair vector length");
  Vec out(f.size());
  for (Eigen::Index a = 0; a < L; ++a)
    for (Eigen::Index b = 0; b < L; ++b) out[a * L + b] = 0.5 * (f[a * L + b] - f[b * L + a]);
  return out;
}

template <typename Vec>
Vec antisymmetrize_impl(const Vec& f, int points) {
  Vec out = project_antisymmetric(f, points);
  const double nrm = out.norm();
  if (!(nrm > 1e-14 * std::max(f.norm(), 1e-300))) throw std::invalid_argument("antisymmetrize: symmetric input");
  return out / nrm;
}

}  // namespace

RealVector ModelSystem::potential_at(double t) const {
  const RealVector x = grid.axis();
  RealVector v(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) v[j] = external_potential(x[j], t);
  return v;
}

RealVector ModelSystem::initial_potential_on_grid() const {
  const RealVector x = grid.axis();
  RealVector v(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) v[j] = initial_potential(x[j]);
  return v;
}

RealVector ModelSystem::inversion_static_potential() const {
  return fold_external_into_h0 ? potential_at(0.0) : RealVector();
}

Grid ModelSystem::pair_grid() const {
  Grid g = grid;
  g.dims = 2;
  g.validate();
  return g;
}

RealVector ModelSystem::pair_potential(const RealVector& one_body) const {
  const auto L = static_cast<Eigen::Index>(grid.points);
  if (one_body.size() != L) throw DimensionMismatch("one-body potential length");
  const RealVector x = grid.axis();
  RealVector v(L * L);
  for (Eigen::Index a = 0; a < L; ++a)
    for (Eigen::Index b = 0; b < L; ++b)
      v[a * L + b] = one_body[a] + one_body[b] + (interaction ? interaction(x[a], x[b]) : 0.0);
  return v;
}

ModelSystem harmonic_test() {
  ModelSystem s;
  s.name = "harmonic";
  s.grid = Grid::spanning(-11.0, 11.0, 115);
  s.particles = 1;
  s.steps = 1600;
  s.dt = std::numbers::pi / s.steps;
  s.initial_potential = [](double x) { return 0.5 * x * x; };
  s.external_potential = [](double x, double) { return 0.5 * x * x; };
  const double k0 = 2.5 * std::sqrt(std::numbers::pi);
  s.initial_wavefunction = [k0](double x) { return std::exp(-0.5 * x * x) * std::cos(k0 * x); };
  s.snapshot_times = {0.0, 0.5 * std::numbers::pi, std::numbers::pi};
  return s;
}

double double_well(double x) {
  const double x2 = x * x, x4 = x2 * x2;
  return 5e-11 * x4 * x4 * x2 - 1.3e-4 * x4;
}

double soft_coulomb(double x1, double x2) { return 1.0 / std::sqrt(std::abs(x1 - x2) + 0.1); }

ModelSystem two_electron_system(bool full_scale) {
  ModelSystem s;
  s.name = "two_electron";
  s.grid = Grid::spanning(-13.5, 13.5, full_scale ? 271 : 81, 1, 0.5);
  s.particles = 2;
  s.dt = full_scale ? 0.005 : 0.01;
  s.steps = full_scale ? 1240 : 620;
  s.initial_potential = double_well;
  s.external_potential = [](double x, double t) { return double_well(x) - (t >= 0.0 ? x / 10.0 : 0.0); };
  s.interaction = soft_coulomb;
  s.fold_external_into_h0 = true;
  s.snapshot_times = {0.0, 3.5, 5.3, 5.75};
  return s;
}

LatticeVector antisymmetrize(const LatticeVector& psi2, int points) { return antisymmetrize_impl(psi2, points); }
RealVector antisymmetrize(const RealVector& psi2, int points) { return antisymmetrize_impl(psi2, points); }

EigenResult lowest_triplet(const ModelSystem& system, const TripletOptions& options) {
  if (system.particles != 2) throw std::invalid_argument("lowest_triplet: two-particle system required");
  if (options.keep < 1 || options.subspace < options.keep + 2) throw std::invalid_argument("lowest_triplet: subspace");
  const int L = system.grid.points;
  const Grid g2 = system.pair_grid();
  const KineticOperator kin(g2);
  ModelSystem sys = system;
  if (!options.interacting) sys.interaction = {};
  const RealVector v2 = sys.pair_potential(system.initial_potential_on_grid());
  EigenResult res;
  const auto apply = [&](const RealVector& x) {
    ++res.matvecs;
    return project_antisymmetric<RealVector>(kin.apply(x) + v2.cwiseProduct(x), L);
  };

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;
  RealVector start(v2.size());
  for (auto& x : start) x = gauss(rng);
  start = antisymmetrize(start, L);

  std::vector<RealVector> basis{start}, images{apply(start)};
  const auto orthogonalize = [&basis](RealVector& w) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q.dot(w) * q;
  };
  for (res.restarts = 0; res.restarts <= options.max_restarts; ++res.restarts) {
    while (static_cast<int>(basis.size()) < options.subspace) {
      RealVector w = images.back();
      orthogonalize(w);
      const double nrm = w.norm();
      if (nrm < 1e-13 * images.back().norm()) break;
      basis.push_back(w / nrm);
      images.push_back(apply(basis.back()));
    }
    const auto m = static_cast<Eigen::Index>(basis.size());
    RealMatrix gram(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b <= a; ++b)
        gram(a, b) = gram(b, a) = 0.5 * (basis[a].dot(images[b]) + basis[b].dot(images[a]));
    const Eigen::SelfAdjointEigenSolver<RealMatrix> es(gram);
    const auto keep = std::min<Eigen::Index>(options.keep, m);
    std::vector<RealVector> nb, ni;
    for (Eigen::Index c = 0; c < keep; ++c) {
      RealVector y = RealVector::Zero(v2.size()), hy = RealVector::Zero(v2.size());
      for (Eigen::Index a = 0; a < m; ++a) {
        y += es.eigenvectors()(a, c) * basis[a];
        hy += es.eigenvectors()(a, c) * images[a];
      }
      nb.push_back(std::move(y));
      ni.push_back(std::move(hy));
    }
    res.energy = es.eigenvalues()[0];
    RealVector r = ni[0] - res.energy * nb[0];
    res.residual = r.norm();
    if (res.residual <= options.tol) {
      res.psi = (nb[0] / nb[0].norm()).cast<cd>();
      return res;
    }
    basis = std::move(nb);
    images = std::move(ni);
    orthogonalize(r);
    basis.push_back(r / r.norm());
    images.push_back(apply(basis.back()));
  }
  throw std::runtime_error("lowest_triplet: no convergence");
}

ComplexMatrix pair_one_rdm(const LatticeVector& psi2, int points, int particles) {
  const auto L = static_cast<Eigen::Index>(points);
  if (psi2.size() != L * L) throw DimensionMismatch("pair vector length");
  // column-major map: m(i2, i1) = Psi(i1, i2)
  const Eigen::Map<const ComplexMatrix> m(psi2.data(), L, L);
  return static_cast<double>(particles) * (m.transpose() * m.conjugate());
}

RealVector pair_marginal(const RealVector& f2, int points, int particles) {
  const auto L = static_cast<Eigen::Index>(points);
  if (f2.size() != L * L) throw DimensionMismatch("pair vector length");
  const Eigen::Map<const RealMatrix> m(f2.data(), L, L);
  return static_cast<double>(particles) * m.colwise().sum().transpose();
}

Inertia inertia_of(const RealMatrix& a, double zero_tol) {
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(a, Eigen::EigenvaluesOnly);
  const RealVector& ev = es.eigenvalues();
  const double cut = zero_tol * ev.cwiseAbs().maxCoeff();
  Inertia in;
  for (double l : ev) {
    if (l < -cut)
      ++in.negative;
    else if (l > cut)
      ++in.positive;
    else
      ++in.zero;
  }
  return in;
}

InertiaReport inertia_check(const Grid& grid, const RealVector& psi, const RealMatrix& h_dense, int k,
                            double zero_tol) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (psi.size() != n || h_dense.rows() != n || h_dense.cols() != n) throw DimensionMismatch("inertia_check sizes");
  if (k < 1 || k > n) throw std::invalid_argument("inertia_check: eigen index out of range");
  const double lambda = psi.dot(h_dense * psi) / psi.squaredNorm();
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(h_dense, Eigen::EigenvaluesOnly);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  int close = 0;
  for (double l : es.eigenvalues()) close += std::abs(l - lambda) <= 1e-9 * scale;
  if (close != 1) throw std::invalid_argument("inertia_check: degenerate or non-eigen state");

  const KSState state{grid, {psi.normalized().cast<cd>()}};
  const RealMatrix K = fb_dense(state);
  InertiaReport rep;
  rep.k_raw = inertia_of(K, zero_tol);
  rep.k = inertia_of(-K, zero_tol);
  rep.shifted_h = inertia_of(h_dense - lambda * RealMatrix::Identity(n, n), zero_tol);
  rep.expected = {k - 1, 1, static_cast<int>(n) - k};
  rep.full_support = psi.cwiseAbs().minCoeff() > zero_tol * psi.cwiseAbs().maxCoeff();
  rep.matches_theorem = rep.k == rep.shifted_h && rep.k == rep.expected;
  return rep;
}

LatticeVector initial_wavefunction(const ModelSystem& system, const TripletOptions& options) {
  if (system.particles == 2) return lowest_triplet(system, options).psi;
  if (system.particles != 1) throw std::invalid_argument("initial_wavefunction: one or two particles");
  const RealVector x = system.grid.axis();
  if (system.initial_wavefunction) {
    LatticeVector c(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) c[j] = system.initial_wavefunction(x[j]);
    return c.normalized();
  }
  RealMatrix h = KineticOperator(system.grid).dense();
  h.diagonal() += system.initial_potential_on_grid();
  const Eigen::SelfAdjointEigenSolver<RealMatrix> es(h);
  RealVector c = es.eigenvectors().col(0);
  Eigen::Index p;
  c.cwiseAbs().maxCoeff(&p);
  if (c[p] < 0) c = -c;
  return c.cast<cd>();
}

ReferenceRun generate_reference(const ModelSystem& system, const ReferenceOptions& options) {
  const bool pair = system.particles == 2;
  const Grid full = pair ? system.pair_grid() : system.grid;
  const int L = system.grid.points;
  const auto kin = std::make_shared<const KineticOperator>(full);
  const auto full_potential = [&](double t) {
    const RealVector v = system.potential_at(t);
    return pair ? system.pair_potential(v) : v;
  };

  LatticeVector psi = initial_wavefunction(system, options.triplet);
  ReferenceRun run;
  run.trace.grid = system.grid;
  run.trace.particles = system.particles;
  run.rho0 = pair ? pair_one_rdm(psi, L) : ComplexMatrix(psi * psi.adjoint());

  const auto record = [&](double t) {
    const KSState s{full, {psi}};
    const ForceBalanceOperator K(s, kin);
    RealVector n = density(s), nd = density_derivative(s, *kin);
    RealVector ndd = free_acceleration(s, *kin) + K.apply(full_potential(t));
    if (pair) {
      n = pair_marginal(n, L);
      nd = pair_marginal(nd, L);
      ndd = pair_marginal(ndd, L);
    }
    run.trace.push_back(t, std::move(n), std::move(nd), std::move(ndd));
    const std::size_t frame = run.trace.frames() - 1;
    if (options.rdm_every > 0 && frame % static_cast<std::size_t>(options.rdm_every) == 0) {
      run.rdm_frames.push_back(frame);
      run.rdms.push_back(pair ? pair_one_rdm(psi, L) : ComplexMatrix(psi * psi.adjoint()));
    }
    if (options.progress) options.progress(run.trace.frames() - 1);
  };

  {
    const RealVector v0 = full_potential(0.0);
    run.energy0 = psi.dot(kin->apply(psi)).real() + v0.dot(psi.cwiseAbs2());
  }
  const int steps = options.steps.value_or(system.steps);
  if (steps < 0) throw std::invalid_argument("generate_reference: negative step count");
  if (options.rdm_every < 0) throw std::invalid_argument("generate_reference: negative checkpoint interval");
  record(0.0);
  const double hbar = full.hbar;
  for (int k = 1; k <= steps; ++k) {
    const double t_mid = (k - 0.5) * system.dt;
    const RealVector v = full_potential(t_mid);
    const ApplyFn h = [&](const LatticeVector& c) {
      LatticeVector out = kin->apply(c) + v.cwiseProduct(c);
      return pair ? project_antisymmetric(out, L) : out;
    };
    psi = arnoldi_step(h, psi, system.dt, options.krylov_dim, hbar);
    if (pair) psi = project_antisymmetric(psi, L);
    record(k * system.dt);
  }
  return run;
}

}  // namespace tdks
