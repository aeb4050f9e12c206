#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tdks {

using LatticeVector = Eigen::VectorXcd;
using LatticePotential = Eigen::VectorXd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Thrown when two arrays that must live on the same lattice disagree in size.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform sinc-DVR tensor-product lattice.
///
/// Each dimension carries `points` odd-count indices m = -(L-1)/2 .. (L-1)/2
/// located at m*dx + offset[d]. Flat vectors are row-major over dimensions
/// with dimension 0 varying slowest.
struct Grid {
  double dx = 1.0;
  int dims = 1;
  int points = 1;
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  double mass = 1.0;
  double hbar = 1.0;

  /// Throws std::invalid_argument when the geometry is not usable.
  void validate() const;

  int half_width() const { return (points - 1) / 2; }
  std::size_t size() const;
  /// Stride in the flat index for one step along dimension d.
  std::size_t stride(int d) const;

  double coordinate(int d, int m) const { return m * dx + offset[static_cast<std::size_t>(d)]; }
  /// Coordinates of every 1D point along dimension d, in storage order.
  RealVector axis(int d = 0) const;
  /// Coordinate of flat index `flat` along dimension d.
  double coordinate_of(std::size_t flat, int d) const;

  /// Grid with odd L points spanning [lo, hi] inclusive; the centre lands on (lo+hi)/2.
  static Grid spanning(double lo, double hi, int points, int dims = 1, double mass = 1.0,
                       double hbar = 1.0);

  bool same_geometry(const Grid& other, double rel_tol = 1e-12) const;
  std::string describe() const;
};

/// Colbert-Miller sinc-DVR kinetic element for 1D indices m, m'.
double kinetic_element(int m, int m_prime, const Grid& grid);

/// Dense 1D kinetic matrix on the grid's per-dimension index range.
RealMatrix kinetic_matrix_1d(const Grid& grid);

/// Applies T = sum_d T_1d (x) I to flat lattice vectors without forming T.
class KineticOperator {
 public:
  explicit KineticOperator(const Grid& grid);

  const Grid& grid() const { return grid_; }
  const RealMatrix& matrix_1d() const { return t1_; }
  std::size_t size() const { return size_; }

  LatticeVector apply(const LatticeVector& c) const;
  RealVector apply(const RealVector& c) const;

  /// Dense L^D x L^D matrix, oracle use only.
  RealMatrix dense() const;

 private:
  template <typename Vec>
  Vec apply_impl(const Vec& c) const;

  Grid grid_;
  RealMatrix t1_;
  std::size_t size_;
};

LatticeVector kinetic_matvec(const Grid& grid, const LatticeVector& c);

/// Elementwise v_j * c_j.
LatticeVector potential_apply(const LatticePotential& v, const LatticeVector& c);

}  // namespace tdks
