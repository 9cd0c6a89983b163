#include "afbart/simgen.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "afbart/tps_basis.hpp"

namespace afbart {

void SimSpec::validate() const {
  if (sim_case < 1 || sim_case > 3)
    throw ValidationError("simulation case must be 1, 2, or 3");
  if (grid < 2) throw ValidationError("grid resolution must be >= 2");
  if (sigma <= 0.0) throw ValidationError("noise level sigma must be > 0");
  if (n_train < 1 || n_test < 1)
    throw ValidationError("sample sizes must be >= 1");
}

GridDomain unit_square_grid(int g) {
  GridDomain grid;
  grid.points.resize(g * g, 2);
  int row = 0;
  for (int j = 0; j < g; ++j)
    for (int i = 0; i < g; ++i) {
      grid.points(row, 0) = static_cast<double>(i) / (g - 1);
      grid.points(row, 1) = static_cast<double>(j) / (g - 1);
      ++row;
    }
  return grid;
}

double h_case1(const Vector& x, int /*j*/) {
  const double i1 = x(0) < 0.5 ? 1.0 : 0.0;
  const double i2 = x(1) < 0.5 ? 1.0 : 0.0;
  const double i3 = x(2) < 0.5 ? 1.0 : 0.0;
  return i1 + i2 * (1.0 + i3);
}

double h_case2(const Vector& x, int j) {
  const double quad = (x(2) * (j + 2) - 3.0) / 6.0;
  return 5.0 * std::sin(M_PI * x(0) * x(1)) + 10.0 * quad * quad;
}

double gp_kernel(const Eigen::RowVector2d& s, const Eigen::RowVector2d& t) {
  double k = std::exp(-4.5 * (s - t).squaredNorm());
  if (s == t) k += 1e-6;
  return k;
}

Vector gp_sample(const GridDomain& grid, Rng& rng) {
  const int m = grid.size();
  Matrix gram(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      gram(i, j) = gp_kernel(grid.points.row(i), grid.points.row(j));

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    gram += 1e-8 * Matrix::Identity(m, m);
    llt.compute(gram);
    if (llt.info() != Eigen::Success)
      throw ValidationError("Gaussian process covariance factorization failed");
  }
  Vector xi(m);
  for (int i = 0; i < m; ++i) xi(i) = rng.normal();
  return llt.matrixL() * xi;
}

namespace {

// Seeded stand-in for the shot-chart generating surfaces: a mixture of
// 3-6 sharp Gaussian bumps with randomized centers, widths, and heights.
Vector bump_surface(const GridDomain& grid, Rng& rng) {
  const int n_bumps = 3 + static_cast<int>(rng.uniform_index(4));
  Vector out = Vector::Zero(grid.size());
  for (int b = 0; b < n_bumps; ++b) {
    const double cx = rng.uniform();
    const double cy = rng.uniform();
    const double width = 0.02 + 0.06 * rng.uniform();
    const double height = 1.0 + 2.0 * rng.uniform();
    for (int m = 0; m < grid.size(); ++m) {
      const double dx = grid.points(m, 0) - cx;
      const double dy = grid.points(m, 1) - cy;
      out(m) += height * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
    }
  }
  return out;
}

Matrix uniform_covariates(int n, Rng& rng) {
  Matrix x(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform();
  return x;
}

Matrix truth_matrix(const Matrix& x, const Matrix& f, int sim_case) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(f.rows());
  const int j_dim = static_cast<int>(f.cols());
  Matrix truth(n, m);
  for (int i = 0; i < n; ++i) {
    Vector xi = x.row(i).transpose();
    Vector h(j_dim);
    for (int j = 0; j < j_dim; ++j)
      h(j) = sim_case == 1 ? h_case1(xi, j + 1) : h_case2(xi, j + 1);
    truth.row(i) = (f * h).transpose();
  }
  return truth;
}

}  // namespace

SimulatedData generate(const SimSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  GridDomain grid = unit_square_grid(spec.grid);
  const int m = grid.size();

  // generating basis surfaces, one column per j
  Matrix f(m, spec.j_true);
  if (spec.sim_case == 1) {
    // small grids cannot support the full generating dimension
    const int k_eff = std::min(spec.k_true, m);
    BasisSystem basis = build_basis(grid, k_eff);
    for (int j = 0; j < spec.j_true; ++j) {
      Vector phi(k_eff);
      for (int k = 0; k < k_eff; ++k) phi(k) = rng.normal();
      f.col(j) = basis.b_matrix * phi;
    }
  } else if (spec.sim_case == 2) {
    for (int j = 0; j < spec.j_true; ++j) f.col(j) = gp_sample(grid, rng);
  } else {
    for (int j = 0; j < spec.j_true; ++j) f.col(j) = bump_surface(grid, rng);
  }

  Matrix x_train = uniform_covariates(spec.n_train, rng);
  Matrix x_test = uniform_covariates(spec.n_test, rng);

  SimulatedData out;
  out.train_truth = truth_matrix(x_train, f, spec.sim_case);
  out.test_truth = truth_matrix(x_test, f, spec.sim_case);

  Matrix z_train = out.train_truth;
  for (int i = 0; i < spec.n_train; ++i)
    for (int mm = 0; mm < m; ++mm) z_train(i, mm) += spec.sigma * rng.normal();
  Matrix z_test = out.test_truth;
  for (int i = 0; i < spec.n_test; ++i)
    for (int mm = 0; mm < m; ++mm) z_test(i, mm) += spec.sigma * rng.normal();

  std::vector<CovariateSchema> schema{{"x1", CovariateKind::Continuous},
                                      {"x2", CovariateKind::Continuous},
                                      {"x3", CovariateKind::Continuous}};
  out.train = validate_dataset({grid, z_train, x_train, schema});
  out.test = validate_dataset({grid, z_test, x_test, schema});
  return out;
}

}  // namespace afbart
