#include "afbart/tps_basis.hpp"

#include <Eigen/QR>
#include <cmath>
#include <limits>

namespace afbart {

double tps_eta(double r) {
  if (r <= 0.0) return 0.0;
  return r * r * std::log(r);
}

KnotSet select_knots(const GridDomain& grid, int count, std::uint64_t /*seed*/) {
  const int m = grid.size();
  if (count < 1) throw ValidationError("knot count must be >= 1");
  if (count > m) throw ValidationError("knot count exceeds grid size");
  const Matrix& pts = grid.points;

  Eigen::RowVector2d centroid = pts.colwise().mean();
  int first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    double d = (pts.row(i) - centroid).squaredNorm();
    if (d < best) {
      best = d;
      first = i;
    }
  }

  std::vector<int> chosen{first};
  std::vector<double> min_dist(m);
  for (int i = 0; i < m; ++i)
    min_dist[i] = (pts.row(i) - pts.row(first)).squaredNorm();

  while (static_cast<int>(chosen.size()) < count) {
    int next = -1;
    double far = -1.0;
    for (int i = 0; i < m; ++i) {
      if (min_dist[i] > far) {
        far = min_dist[i];
        next = i;
      }
    }
    chosen.push_back(next);
    for (int i = 0; i < m; ++i) {
      double d = (pts.row(i) - pts.row(next)).squaredNorm();
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }

  KnotSet ks;
  ks.knots.resize(count, 2);
  for (int r = 0; r < count; ++r) ks.knots.row(r) = pts.row(chosen[r]);
  return ks;
}

void build_raw_design(const GridDomain& grid, const KnotSet& knots,
                      Matrix& raw_design, Matrix& raw_penalty) {
  const int m = grid.size();
  const int r_dim = knots.size();
  const int k_dim = r_dim + 3;
  raw_design.resize(m, k_dim);
  for (int i = 0; i < m; ++i) {
    raw_design(i, 0) = 1.0;
    raw_design(i, 1) = grid.points(i, 0);
    raw_design(i, 2) = grid.points(i, 1);
    for (int r = 0; r < r_dim; ++r)
      raw_design(i, 3 + r) = tps_eta((grid.points.row(i) - knots.knots.row(r)).norm());
  }
  raw_penalty.setZero(k_dim, k_dim);
  for (int r = 0; r < r_dim; ++r)
    for (int rr = 0; rr < r_dim; ++rr)
      raw_penalty(3 + r, 3 + rr) = tps_eta((knots.knots.row(r) - knots.knots.row(rr)).norm());
  // symmetrize against rounding in the distance evaluations
  raw_penalty = 0.5 * (raw_penalty + raw_penalty.transpose()).eval();
}

BasisSystem orthonormalize(const Matrix& raw_design, const Matrix& raw_penalty,
                           const KnotSet& knots) {
  const int k_dim = static_cast<int>(raw_design.cols());
  Eigen::HouseholderQR<Matrix> qr(raw_design);
  Matrix r_factor = qr.matrixQR().topRows(k_dim).triangularView<Eigen::Upper>();

  double max_diag = r_factor.diagonal().cwiseAbs().maxCoeff();
  for (int i = 0; i < k_dim; ++i)
    if (std::abs(r_factor(i, i)) < 1e-10 * max_diag)
      throw ValidationError(
          "thin-plate design is rank deficient; use fewer knots");

  BasisSystem sys;
  sys.b_matrix = qr.householderQ() * Matrix::Identity(raw_design.rows(), k_dim);
  sys.knots = knots;

  // Omega_t = R^-T Omega_raw R^-1, so coefficient quadratic forms transfer.
  Matrix rinv = r_factor.triangularView<Eigen::Upper>().solve(
      Matrix::Identity(k_dim, k_dim));
  Matrix omega_t = rinv.transpose() * raw_penalty * rinv;
  omega_t = 0.5 * (omega_t + omega_t.transpose()).eval();

  // The radial kernel is conditionally positive definite only (its energy
  // form is nonnegative on the polynomial-orthogonal subspace), so Omega_t
  // carries negative eigenvalues. Clamp to the PSD part before ridging.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(omega_t);
  Vector vals = eig.eigenvalues().cwiseMax(0.0);
  Matrix psd = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  psd = 0.5 * (psd + psd.transpose()).eval();

  sys.ridge = 1e-8 * (psd.trace() / k_dim);
  if (sys.ridge <= 0.0) sys.ridge = 1e-12;
  sys.penalty = psd + sys.ridge * Matrix::Identity(k_dim, k_dim);
  return sys;
}

BasisSystem build_basis(const GridDomain& grid, int k_dim) {
  if (k_dim < 4) throw ValidationError("thin-plate dimension K must be >= 4");
  KnotSet ks = select_knots(grid, k_dim - 3);
  Matrix raw, pen;
  build_raw_design(grid, ks, raw, pen);
  return orthonormalize(raw, pen, ks);
}

}  // namespace afbart
