#include "tdks/lattice.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace tdks {

void Grid::validate() const {
  if (!(dx > 0.0) || !std::isfinite(dx)) throw std::invalid_argument("grid spacing must be positive");
  if (dims < 1 || dims > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
  if (points < 1 || points % 2 == 0) throw std::invalid_argument("points per dimension must be odd");
  if (!(mass > 0.0) || !(hbar > 0.0)) throw std::invalid_argument("mass and hbar must be positive");
  for (double o : offset)
    if (!std::isfinite(o)) throw std::invalid_argument("grid offset must be finite");
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (int d = 0; d < dims; ++d) n *= static_cast<std::size_t>(points);
  return n;
}

std::size_t Grid::stride(int d) const {
  std::size_t s = 1;
  for (int k = d + 1; k < dims; ++k) s *= static_cast<std::size_t>(points);
  return s;
}

RealVector Grid::axis(int d) const {
  RealVector x(points);
  for (int k = 0; k < points; ++k) x[k] = coordinate(d, k - half_width());
  return x;
}

double Grid::coordinate_of(std::size_t flat, int d) const {
  const auto k = static_cast<int>((flat / stride(d)) % static_cast<std::size_t>(points));
  return coordinate(d, k - half_width());
}

Grid Grid::spanning(double lo, double hi, int points, int dims, double mass, double hbar) {
  if (points < 3 || points % 2 == 0) throw std::invalid_argument("points per dimension must be odd and >= 3");
  if (!(hi > lo)) throw std::invalid_argument("empty coordinate range");
  Grid g;
  g.dx = (hi - lo) / (points - 1);
  g.dims = dims;
  g.points = points;
  const double centre = 0.5 * (lo + hi);
  g.offset = {centre, centre, centre};
  g.mass = mass;
  g.hbar = hbar;
  g.validate();
  return g;
}

bool Grid::same_geometry(const Grid& other, double rel_tol) const {
  auto close = [rel_tol](double a, double b) {
    return std::abs(a - b) <= rel_tol * std::max({1.0, std::abs(a), std::abs(b)});
  };
  if (dims != other.dims || points != other.points) return false;
  if (!close(dx, other.dx) || !close(mass, other.mass) || !close(hbar, other.hbar)) return false;
  for (int d = 0; d < dims; ++d)
    if (!close(offset[d], other.offset[d])) return false;
  return true;
}

std::string Grid::describe() const {
  std::ostringstream os;
  os << "dims=" << dims << " L=" << points << " dx=" << dx << " x=[" << coordinate(0, -half_width()) << ", "
     << coordinate(0, half_width()) << "] mass=" << mass;
  return os.str();
}

double kinetic_element(int m, int m_prime, const Grid& grid) {
  const double prefactor = grid.hbar * grid.hbar / (grid.mass * grid.dx * grid.dx);
  if (m == m_prime) return 0.5 * prefactor * std::numbers::pi * std::numbers::pi / 3.0;
  const int k = m - m_prime;
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return prefactor * sign / (static_cast<double>(k) * k);
}

RealMatrix kinetic_matrix_1d(const Grid& grid) {
  const int L = grid.points;
  const int h = grid.half_width();
  RealMatrix t(L, L);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) t(a, b) = kinetic_element(a - h, b - h, grid);
  return t;
}

KineticOperator::KineticOperator(const Grid& grid) : grid_(grid), t1_(kinetic_matrix_1d(grid)), size_(grid.size()) {
  grid_.validate();
}

template <typename Vec>
Vec KineticOperator::apply_impl(const Vec& c) const {
  using Scalar = typename Vec::Scalar;
  using Block = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (static_cast<std::size_t>(c.size()) != size_)
    throw DimensionMismatch("kinetic_matvec: vector length does not match grid");
  const Eigen::Index L = grid_.points;
  Vec out = Vec::Zero(c.size());
  // Along dimension d the flat vector is a stack of (L x inner) row-major blocks.
  for (int d = 0; d < grid_.dims; ++d) {
    const auto inner = static_cast<Eigen::Index>(grid_.stride(d));
    const Eigen::Index outer = c.size() / (L * inner);
    for (Eigen::Index b = 0; b < outer; ++b) {
      Eigen::Map<const Block> in(c.data() + b * L * inner, L, inner);
      Eigen::Map<Block> res(out.data() + b * L * inner, L, inner);
      res.noalias() += t1_.template cast<Scalar>() * in;
    }
  }
  return out;
}

LatticeVector KineticOperator::apply(const LatticeVector& c) const {
  if (static_cast<std::size_t>(c.size()) != size_)
    throw DimensionMismatch("kinetic_matvec: vector length does not match grid");
  // Real and imaginary parts separately: T is real.
  const RealVector re = apply_impl<RealVector>(c.real());
  const RealVector im = apply_impl<RealVector>(c.imag());
  LatticeVector out(c.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

RealVector KineticOperator::apply(const RealVector& c) const { return apply_impl<RealVector>(c); }

RealMatrix KineticOperator::dense() const {
  const auto n = static_cast<Eigen::Index>(size_);
  RealMatrix t(n, n);
  RealVector e = RealVector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    t.col(j) = apply(e);
    e[j] = 0.0;
  }
  return t;
}

LatticeVector kinetic_matvec(const Grid& grid, const LatticeVector& c) { return KineticOperator(grid).apply(c); }

LatticeVector potential_apply(const LatticePotential& v, const LatticeVector& c) {
  if (v.size() != c.size()) throw DimensionMismatch("potential_apply: length mismatch");
  return v.cast<std::complex<double>>().cwiseProduct(c);
}

}  // namespace tdks
