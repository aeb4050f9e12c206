#include "tdks/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tdks {

LinearOperator LinearOperator::symmetric(Eigen::Index n, std::function<RealVector(const RealVector&)> f) {
  LinearOperator op;
  op.apply = std::move(f);
  op.rows = n;
  op.cols = n;
  return op;
}

LinearOperator LinearOperator::from_dense(const RealMatrix& a) {
  LinearOperator op;
  op.apply = [a](const RealVector& x) -> RealVector { return a * x; };
  op.apply_transpose = [a](const RealVector& y) -> RealVector { return a.transpose() * y; };
  op.rows = a.rows();
  op.cols = a.cols();
  return op;
}

std::string_view to_string(SolveFlag flag) {
  switch (flag) {
    case SolveFlag::converged: return "converged";
    case SolveFlag::max_iter: return "max_iter";
    case SolveFlag::breakdown: return "breakdown";
    case SolveFlag::null_space_rhs_component: return "null_space_rhs_component";
  }
  return "unknown";
}

namespace {

// Stable Givens reflection: [c s; s -c] [a; b] = [r; 0].
void sym_ortho(double a, double b, double& c, double& s, double& r) {
  const double absa = std::abs(a);
  const double absb = std::abs(b);
  const auto sign = [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };
  if (b == 0.0) {
    c = (a == 0.0) ? 1.0 : sign(a);
    s = 0.0;
    r = absa;
  } else if (a == 0.0) {
    c = 0.0;
    s = sign(b);
    r = absb;
  } else if (absb > absa) {
    const double t = a / b;
    s = sign(b) / std::sqrt(1.0 + t * t);
    c = s * t;
    r = b / s;
  } else {
    const double t = b / a;
    c = sign(a) / std::sqrt(1.0 + t * t);
    s = c * t;
    r = a / c;
  }
}

double norm2(double a, double b) { return std::hypot(a, b); }
double norm3(double a, double b, double c) { return std::sqrt(a * a + b * b + c * c); }

}  // namespace

SolveReport minres_qlp(const LinearOperator& A, const RealVector& b, double tol, int max_iter, bool reorthogonalize) {
  if (A.rows != A.cols || A.rows != b.size()) throw DimensionMismatch("minres_qlp: operator/rhs shape");
  if (!b.allFinite()) throw std::invalid_argument("minres_qlp: non-finite right-hand side");
  const Eigen::Index n = b.size();
  if (max_iter <= 0) max_iter = static_cast<int>(4 * n);

  constexpr double realmin = std::numeric_limits<double>::min();
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr double maxxnorm = 1e10;
  constexpr double acondlim = 1e15;
  constexpr int flag0 = -2;

  SolveReport report;
  RealVector x = RealVector::Zero(n);
  const double beta1 = b.norm();
  if (beta1 == 0.0) {
    report.solution = x;
    return report;
  }

  RealVector r1 = RealVector::Zero(n), r2 = b, r3 = b, v(n);
  RealVector w = RealVector::Zero(n), wl = RealVector::Zero(n), wl2 = RealVector::Zero(n), xl2 = RealVector::Zero(n);

  int flag = flag0, iter = 0;
  double beta = 0, betal = 0, betan = beta1, alfa = 0, pnorm = 0;
  double tau = 0, taul = 0, taul2 = 0, phi = beta1;
  double cs = -1, sn = 0, cr1 = -1, sr1 = 0, cr2 = -1, sr2 = 0;
  double dltan = 0, eplnn = 0, gama = 0, gamal = 0, gamal2 = 0, eta = 0, etal = 0, etal2 = 0;
  double vepln = 0, veplnl = 0, veplnl2 = 0, ul4 = 0, ul3 = 0, ul2 = 0, ul = 0, u = 0;
  double rnorm = beta1, xnorm = 0, xl2norm = 0, anorm = 0, acond = 1, gmin = 0, gminl = 0;
  double relres = rnorm / beta1, relresl = 0, relAresl = 0;

  std::vector<RealVector> basis;
  while (flag == flag0 && iter < max_iter) {
    // Lanczos
    ++iter;
    betal = beta;
    beta = betan;
    v = r3 / beta;
    r3 = A.apply(v);
    if (iter > 1) r3 -= (beta / betal) * r1;
    alfa = r3.dot(v);
    r3 -= (alfa / beta) * r2;
    if (reorthogonalize) {
      basis.push_back(v);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : basis) r3 -= q.dot(r3) * q;
    }
    r1 = r2;
    r2 = r3;
    betan = r3.norm();
    if (iter == 1 && betan == 0.0) {
      if (alfa == 0.0) {
        flag = 0;  // b lies in null(A); x = 0 is the minimum-length LS solution
      } else {
        flag = -1;
        x = b / alfa;
      }
      break;
    }
    pnorm = iter == 1 ? norm2(alfa, betan) : norm3(beta, alfa, betan);

    // previous left reflection
    const double dbar = dltan;
    double dlta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    eplnn = sn * betan;
    dltan = -cs * betan;

    // current left reflection
    gamal2 = gamal;
    gamal = gama;
    sym_ortho(gbar, betan, cs, sn, gama);
    taul2 = taul;
    taul = tau;
    tau = cs * phi;
    phi = sn * phi;

    // previous right reflection P_{k-2,k}
    if (iter > 2) {
      veplnl2 = veplnl;
      etal2 = etal;
      etal = eta;
      const double dlta_tmp = sr2 * vepln - cr2 * dlta;
      veplnl = cr2 * vepln + sr2 * dlta;
      dlta = dlta_tmp;
      eta = sr2 * gama;
      gama = -cr2 * gama;
    }
    // current right reflection P_{k-1,k}
    if (iter > 1) {
      sym_ortho(gamal, dlta, cr1, sr1, gamal);
      vepln = sr1 * gama;
      gama = -cr1 * gama;
    }

    // update xnorm
    ul4 = ul3;
    ul3 = ul2;
    if (iter > 2) ul2 = (taul2 - etal2 * ul4 - veplnl2 * ul3) / gamal2;
    if (iter > 1) ul = (taul - etal * ul3 - veplnl * ul2) / gamal;
    const double xnorm_tmp = norm3(xl2norm, ul2, ul);
    const bool like_ls = relresl >= relAresl;
    // Numerical rank floor: a trailing pivot at round-off level marks an exact singular direction.
    const double gama_floor = std::max(realmin, 10.0 * static_cast<double>(n) * eps * std::max({anorm, pnorm, gamal}));
    if (std::abs(gama) > gama_floor && xnorm_tmp < maxxnorm) {
      u = (tau - eta * ul2 - vepln * ul) / gama;
      if (norm2(xnorm_tmp, u) > maxxnorm && like_ls) {
        u = 0;
        flag = 6;
      }
    } else {
      u = 0;
      flag = 9;
    }
    xl2norm = norm2(xl2norm, ul2);
    xnorm = norm3(xl2norm, ul, u);

    // QLP update of w and x
    if (iter == 1) {
      wl2 = wl;
      wl = sr1 * v;
      w = -cr1 * v;
    } else if (iter == 2) {
      wl2 = wl;
      wl = cr1 * w + sr1 * v;
      w = sr1 * w - cr1 * v;
    } else {
      wl2 = wl;
      wl = w;
      w = sr2 * wl2 - cr2 * v;
      wl2 = cr2 * wl2 + sr2 * v;
      v = cr1 * wl + sr1 * w;
      w = sr1 * wl - cr1 * w;
      wl = v;
    }
    xl2 += ul2 * wl2;
    x = xl2 + ul * wl + u * w;

    // next right reflection P_{k-1,k+1}
    sym_ortho(gamal, eplnn, cr2, sr2, gamal);

    // norm estimates
    const double abs_gama = std::abs(gama);
    anorm = std::max({anorm, pnorm, gamal, abs_gama});
    if (iter == 1) {
      gmin = gama;
      gminl = gmin;
    } else {
      const double gminl2 = gminl;
      gminl = gmin;
      gmin = std::min({gminl2, gamal, abs_gama});
    }
    acond = anorm / gmin;
    relresl = relres;
    if (flag != 9) rnorm = phi;
    relres = rnorm / (anorm * xnorm + beta1);
    const double rootl = norm2(gbar, dltan);
    relAresl = rootl / anorm;

    if (flag == flag0 || flag == 9) {
      const double epsx = anorm * xnorm * eps;
      if (iter >= max_iter) flag = 8;
      if (acond >= acondlim && flag != 9) flag = 7;
      if (xnorm >= maxxnorm) flag = 6;
      if (epsx >= beta1) flag = 5;
      if (1.0 + relAresl <= 1.0) flag = 4;
      if (1.0 + relres <= 1.0) flag = 3;
      if (relAresl <= tol) flag = 2;
      if (relres <= tol) flag = 1;
    }
    if (flag == flag0 && betan <= 10.0 * static_cast<double>(n) * eps * anorm) flag = relres <= tol ? 1 : 2;  // Krylov space exhausted
  }

  report.iterations = iter;
  if (!x.allFinite()) {
    x.setZero();
    flag = 99;
  }
  const RealVector r = b - A.apply(x);
  report.solution = x;
  report.residual_norm = r.norm();
  switch (flag) {
    case -1:
    case 1:
    case 3: report.flag = SolveFlag::converged; break;
    case 0:
    case 2:
    case 4:
    case 9: report.flag = SolveFlag::null_space_rhs_component; break;
    case 8: report.flag = SolveFlag::max_iter; break;
    case 5:
    case 6:
    case 7: {
      // Stopped on a conditioning safeguard; classify by the recomputed residuals.
      const double rel = report.residual_norm / (anorm * x.norm() + beta1);
      const double rel_ar = report.residual_norm > 0 ? A.apply(r).norm() / (anorm * report.residual_norm) : 0.0;
      if (rel <= 100 * tol)
        report.flag = SolveFlag::converged;
      else if (rel_ar <= 100 * tol)
        report.flag = SolveFlag::null_space_rhs_component;
      else
        report.flag = SolveFlag::breakdown;
      break;
    }
    default: report.flag = SolveFlag::breakdown; break;
  }
  return report;
}

SolveReport lsqr(const LinearOperator& A, const RealVector& b, double tol, int max_iter) {
  if (A.rows != b.size()) throw DimensionMismatch("lsqr: operator/rhs shape");
  if (!b.allFinite()) throw std::invalid_argument("lsqr: non-finite right-hand side");
  if (max_iter <= 0) max_iter = static_cast<int>(4 * std::max(A.rows, A.cols));

  SolveReport report;
  RealVector x = RealVector::Zero(A.cols);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    report.solution = x;
    return report;
  }

  RealVector u = b / bnorm;
  RealVector v = A.transpose_apply(u);
  double alpha = v.norm();
  if (alpha == 0.0) {
    // A^T b = 0: b is orthogonal to range(A)
    report.solution = x;
    report.residual_norm = bnorm;
    report.flag = SolveFlag::null_space_rhs_component;
    return report;
  }
  v /= alpha;
  RealVector w = v;
  double phibar = bnorm, rhobar = alpha, anorm = 0.0;
  int flag = 0;
  int iter = 0;
  while (iter < max_iter) {
    ++iter;
    u = A.apply(v) - alpha * u;
    const double beta = u.norm();
    if (beta > 0) u /= beta;
    anorm = norm3(anorm, alpha, beta);
    v = A.transpose_apply(u) - beta * v;
    alpha = v.norm();
    if (alpha > 0) v /= alpha;

    const double rho = norm2(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;
    x += (phi / rho) * w;
    w = v - (theta / rho) * w;

    const double rnorm = phibar;
    const double arnorm = alpha * std::abs(c * phibar);
    if (rnorm <= tol * bnorm + tol * anorm * x.norm()) {
      flag = 1;
      break;
    }
    if (arnorm <= tol * anorm * rnorm) {
      flag = 2;
      break;
    }
    if (alpha == 0.0 || beta == 0.0) {
      flag = rnorm <= std::sqrt(tol) * bnorm ? 1 : 2;
      break;
    }
  }
  report.iterations = iter;
  report.flag = flag == 1 ? SolveFlag::converged
                          : flag == 2 ? SolveFlag::null_space_rhs_component : SolveFlag::max_iter;
  if (!x.allFinite()) {
    x.setZero();
    report.flag = SolveFlag::breakdown;
  }
  report.solution = x;
  report.residual_norm = (A.apply(x) - b).norm();
  return report;
}

std::size_t DiagonalPreconditioner::pruned_count() const {
  return static_cast<std::size_t>(std::count(pruned_mask.begin(), pruned_mask.end(), true));
}

DiagonalPreconditioner build_preconditioner(const RealVector& diag, double max_abs, double threshold) {
  if (!diag.allFinite()) throw std::invalid_argument("build_preconditioner: non-finite diagonal");
  DiagonalPreconditioner p;
  p.m = RealVector::Zero(diag.size());
  p.pruned_mask.assign(static_cast<std::size_t>(diag.size()), false);
  const double cutoff = threshold * std::abs(max_abs);
  for (Eigen::Index j = 0; j < diag.size(); ++j) {
    const double a = std::abs(diag[j]);
    if (a == 0.0 || a < cutoff) {
      p.pruned_mask[static_cast<std::size_t>(j)] = true;
    } else {
      p.m[j] = 1.0 / a;
    }
  }
  return p;
}

SolveReport preconditioned_solve(const LinearOperator& K, const DiagonalPreconditioner& M, const RealVector& s,
                                 double tol, int max_iter, bool reorthogonalize) {
  if (K.rows != s.size() || M.m.size() != s.size()) throw DimensionMismatch("preconditioned_solve: shapes");
  const RealVector h = M.sqrt_m();
  const auto op = LinearOperator::symmetric(
      K.rows, [&K, &h](const RealVector& y) -> RealVector { return h.cwiseProduct(K.apply(h.cwiseProduct(y))); });
  SolveReport inner = minres_qlp(op, h.cwiseProduct(s), tol, max_iter, reorthogonalize);
  SolveReport out;
  out.solution = h.cwiseProduct(inner.solution);
  out.iterations = inner.iterations;
  out.flag = inner.flag;
  RealVector r = K.apply(out.solution) - s;
  for (Eigen::Index j = 0; j < r.size(); ++j)
    if (M.pruned_mask[static_cast<std::size_t>(j)]) r[j] = 0.0;
  out.residual_norm = r.norm();
  return out;
}

RealVector pinv_solve(const RealMatrix& K, const RealVector& s, double rcond, std::size_t size_cap) {
  if (static_cast<std::size_t>(std::max(K.rows(), K.cols())) > size_cap)
    throw std::length_error("pinv_solve: matrix exceeds dense size cap");
  if (K.rows() != s.size()) throw DimensionMismatch("pinv_solve: shapes");
  Eigen::BDCSVD<RealMatrix> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& sigma = svd.singularValues();
  const double cutoff = sigma.size() > 0 ? rcond * sigma[0] : 0.0;
  RealVector coeff = svd.matrixU().transpose() * s;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) coeff[k] = sigma[k] > cutoff ? coeff[k] / sigma[k] : 0.0;
  return svd.matrixV() * coeff;
}

RealVector project_out_constant(const RealVector& s) {
  return (s.array() - s.mean()).matrix();
}

}  // namespace tdks
