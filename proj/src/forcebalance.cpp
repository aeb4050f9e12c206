#include "tdks/forcebalance.hpp"

#include <stdexcept>

namespace tdks {

ForceBalanceOperator::ForceBalanceOperator(const KSState& state, std::shared_ptr<const KineticOperator> kinetic)
    : kinetic_(std::move(kinetic)), size_(state.size()) {
  if (!kinetic_ || kinetic_->size() != size_) throw DimensionMismatch("force balance: kinetic operator size");
  scale_ = 1.0 / (state.grid.hbar * state.grid.hbar);
  const auto m = static_cast<Eigen::Index>(size_);
  diag_correction_ = RealVector::Zero(m);
  for (const auto& c : state.orbitals) {
    if (c.size() != m) throw DimensionMismatch("force balance: orbital length");
    re_.push_back(c.real());
    im_.push_back(c.imag());
    const LatticeVector tc = kinetic_->apply(c);
    RealVector corr = 2.0 * (tc.cwiseProduct(c.conjugate())).real();
    diag_correction_ += corr;
    particle_correction_.push_back(std::move(corr));
  }
}

ForceBalanceOperator::ForceBalanceOperator(const KSState& state)
    : ForceBalanceOperator(state, std::make_shared<KineticOperator>(state.grid)) {}

RealVector ForceBalanceOperator::apply_particle(std::size_t i, const RealVector& x) const {
  if (static_cast<std::size_t>(x.size()) != size_) throw DimensionMismatch("fb_matvec: vector length");
  const RealVector& r = re_.at(i);
  const RealVector& im = im_[i];
  RealVector y = -2.0 * (r.cwiseProduct(kinetic_->apply(RealVector(r.cwiseProduct(x)))) +
                         im.cwiseProduct(kinetic_->apply(RealVector(im.cwiseProduct(x)))));
  y += particle_correction_[i].cwiseProduct(x);
  return scale_ * y;
}

RealVector ForceBalanceOperator::apply(const RealVector& x) const {
  if (static_cast<std::size_t>(x.size()) != size_) throw DimensionMismatch("fb_matvec: vector length");
  RealVector y = RealVector::Zero(x.size());
  for (std::size_t i = 0; i < re_.size(); ++i) {
    const RealVector& r = re_[i];
    const RealVector& im = im_[i];
    y -= 2.0 * r.cwiseProduct(kinetic_->apply(RealVector(r.cwiseProduct(x))));
    y -= 2.0 * im.cwiseProduct(kinetic_->apply(RealVector(im.cwiseProduct(x))));
  }
  y += diag_correction_.cwiseProduct(x);
  return scale_ * y;
}

RealVector ForceBalanceOperator::particle_diagonal(std::size_t i) const {
  const RealVector tdiag = kinetic_->matrix_1d()(0, 0) * kinetic_->grid().dims * RealVector::Ones(size_);
  return scale_ * (-2.0 * tdiag.cwiseProduct(re_.at(i).cwiseAbs2() + im_[i].cwiseAbs2()) + particle_correction_[i]);
}

RealVector ForceBalanceOperator::diagonal() const {
  RealVector d = RealVector::Zero(static_cast<Eigen::Index>(size_));
  for (std::size_t i = 0; i < re_.size(); ++i) d += particle_diagonal(i);
  return d;
}

RealVector free_acceleration(const KSState& state, const KineticOperator& kinetic) {
  RealVector q = RealVector::Zero(static_cast<Eigen::Index>(state.size()));
  for (const auto& c : state.orbitals) {
    const LatticeVector c1 = kinetic.apply(c);
    const LatticeVector c2 = kinetic.apply(c1);
    q += c1.cwiseAbs2() - (c.cwiseProduct(c2.conjugate())).real();
  }
  return (2.0 / (state.grid.hbar * state.grid.hbar)) * q;
}

RealVector free_acceleration(const KSState& state) { return free_acceleration(state, KineticOperator(state.grid)); }

RealVector forced_acceleration(const RealVector& n_ddot_aim, const RealVector& q) {
  if (n_ddot_aim.size() != q.size()) throw DimensionMismatch("forced_acceleration: length mismatch");
  return n_ddot_aim - q;
}

RealVector fb_matvec(const ForceBalanceOperator& K, const RealVector& x) { return K.apply(x); }

RealMatrix fb_dense(const KSState& state, std::size_t size_cap) {
  if (state.size() > size_cap) throw std::length_error("fb_dense: lattice exceeds dense assembly cap");
  const RealMatrix t = KineticOperator(state.grid).dense();
  const ComplexMatrix rho = one_rdm(state);
  const RealMatrix hadamard = t.cwiseProduct(rho.real());
  RealMatrix k = -2.0 * hadamard;
  k.diagonal() += 2.0 * hadamard.rowwise().sum();
  return k / (state.grid.hbar * state.grid.hbar);
}

RealVector fb_diagonal(const KSState& state) { return ForceBalanceOperator(state).diagonal(); }

}  // namespace tdks
