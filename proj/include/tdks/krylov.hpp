#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "tdks/lattice.hpp"

namespace tdks {

/// Matrix-free real operator. `apply_transpose` may be empty for symmetric operators.
struct LinearOperator {
  std::function<RealVector(const RealVector&)> apply;
  std::function<RealVector(const RealVector&)> apply_transpose;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  static LinearOperator symmetric(Eigen::Index n, std::function<RealVector(const RealVector&)> f);
  static LinearOperator from_dense(const RealMatrix& a);

  RealVector transpose_apply(const RealVector& y) const { return apply_transpose ? apply_transpose(y) : apply(y); }
};

enum class SolveFlag { converged, max_iter, breakdown, null_space_rhs_component };

std::string_view to_string(SolveFlag flag);

struct SolveReport {
  RealVector solution;
  int iterations = 0;
  /// ||A x - b||, recomputed after the iteration stops.
  double residual_norm = 0.0;
  SolveFlag flag = SolveFlag::converged;

  bool ok() const { return flag == SolveFlag::converged || flag == SolveFlag::null_space_rhs_component; }
};

/// Minimum-length solution of a symmetric, possibly singular and incompatible,
/// system by MINRES-QLP (all iterations in QLP mode). max_iter <= 0 means 4n.
/// With `reorthogonalize` the Lanczos vectors are kept and each new one is
/// orthogonalized against all of them, at O(n * iterations) memory.
SolveReport minres_qlp(const LinearOperator& A, const RealVector& b, double tol = 1e-10, int max_iter = 0,
                       bool reorthogonalize = true);

/// Minimum-norm least-squares solution of a rectangular system by LSQR.
SolveReport lsqr(const LinearOperator& A, const RealVector& b, double tol = 1e-10, int max_iter = 0);

struct DiagonalPreconditioner {
  RealVector m;
  std::vector<bool> pruned_mask;

  RealVector sqrt_m() const { return m.cwiseSqrt(); }
  std::size_t pruned_count() const;
};

inline constexpr double kPruneThreshold = 1e-15;

/// m_j = 1/|d_j| unless |d_j| < threshold * max_abs (or d_j == 0), in which case m_j = 0.
DiagonalPreconditioner build_preconditioner(const RealVector& diag, double max_abs,
                                            double threshold = kPruneThreshold);

/// Solves M^1/2 K M^1/2 y = M^1/2 s by MINRES-QLP and returns v = M^1/2 y.
/// The reported residual is ||K v - s|| restricted to unpruned rows.
SolveReport preconditioned_solve(const LinearOperator& K, const DiagonalPreconditioner& M, const RealVector& s,
                                 double tol = 1e-10, int max_iter = 0, bool reorthogonalize = true);

/// Moore-Penrose solve with singular values below rcond * sigma_max dropped.
/// Throws std::length_error above size_cap.
RealVector pinv_solve(const RealMatrix& K, const RealVector& s, double rcond = 1e-12, std::size_t size_cap = 8192);

/// Removes the mean so that the right-hand side is orthogonal to the constant vector.
RealVector project_out_constant(const RealVector& s);

}  // namespace tdks
