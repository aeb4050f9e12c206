#pragma once

#include <memory>
#include <vector>

#include "tdks/state.hpp"

namespace tdks {

/// Default refusal threshold for dense force-balance assembly (lattice size).
inline constexpr std::size_t kDenseSizeCap = 4096;

/// Structured force-balance operator K = -2 M(Re[T o rho]) scaled by 1/hbar^2.
///
/// Stored as the real and imaginary parts of every orbital plus the diagonal
/// term 2 Re[sum_i (T c_i)_j conj(c_i)_j], so that
///   d^2 n / dt^2 = q + K v
/// for a state evolving under T + diag(v). Symmetric, and K * 1 = 0.
class ForceBalanceOperator {
 public:
  ForceBalanceOperator(const KSState& state, std::shared_ptr<const KineticOperator> kinetic);
  explicit ForceBalanceOperator(const KSState& state);

  std::size_t size() const { return size_; }
  std::size_t particles() const { return re_.size(); }

  RealVector apply(const RealVector& x) const;
  /// Contribution of orbital i alone (the block K^(i)).
  RealVector apply_particle(std::size_t i, const RealVector& x) const;

  RealVector diagonal() const;
  RealVector particle_diagonal(std::size_t i) const;

  const RealVector& diag_correction() const { return diag_correction_; }
  const KineticOperator& kinetic() const { return *kinetic_; }

 private:
  std::shared_ptr<const KineticOperator> kinetic_;
  std::vector<RealVector> re_;
  std::vector<RealVector> im_;
  std::vector<RealVector> particle_correction_;
  RealVector diag_correction_;
  std::size_t size_;
  double scale_;
};

/// q_j = (2/hbar^2) sum_i Re[|T c_i|^2_j - c_ij conj(T^2 c_i)_j].
RealVector free_acceleration(const KSState& state, const KineticOperator& kinetic);
RealVector free_acceleration(const KSState& state);

/// s = n_ddot_aim - q.
RealVector forced_acceleration(const RealVector& n_ddot_aim, const RealVector& q);

RealVector fb_matvec(const ForceBalanceOperator& K, const RealVector& x);

/// Dense Hadamard-form assembly; throws std::length_error above `size_cap`.
RealMatrix fb_dense(const KSState& state, std::size_t size_cap = kDenseSizeCap);

RealVector fb_diagonal(const KSState& state);

}  // namespace tdks
