#include "afbart/kernels.hpp"

#include <omp.h>

namespace afbart::kernels {

namespace {
int g_threads = 0;  // 0 = library default

int effective_threads() {
  return g_threads > 0 ? g_threads : omp_get_max_threads();
}

inline void fitted_row(const Matrix& g, const Matrix& f, Matrix& out, int i) {
  const int m = static_cast<int>(f.rows());
  const int j_dim = static_cast<int>(f.cols());
  for (int mm = 0; mm < m; ++mm) {
    double acc = 0.0;
    for (int j = 0; j < j_dim; ++j) acc += g(i, j) * f(mm, j);
    out(i, mm) = acc;
  }
}

inline void project_row(const Matrix& z, const Matrix& f, Matrix& out, int i) {
  const int m = static_cast<int>(f.rows());
  const int j_dim = static_cast<int>(f.cols());
  for (int j = 0; j < j_dim; ++j) {
    double acc = 0.0;
    for (int mm = 0; mm < m; ++mm) acc += z(i, mm) * f(mm, j);
    out(i, j) = acc;
  }
}

inline double row_sq_diff(const Matrix& a, const Matrix& b, int i) {
  double acc = 0.0;
  for (int j = 0; j < a.cols(); ++j) {
    double d = a(i, j) - b(i, j);
    acc += d * d;
  }
  return acc;
}

}  // namespace

void set_threads(int n) { g_threads = n; }
int threads() { return effective_threads(); }

void fitted_surface_serial(const Matrix& g, const Matrix& f, Matrix& out) {
  out.resize(g.rows(), f.rows());
  for (int i = 0; i < g.rows(); ++i) fitted_row(g, f, out, i);
}

void fitted_surface(const Matrix& g, const Matrix& f, Matrix& out) {
  const int nt = effective_threads();
  if (nt <= 1 || g.rows() < 2) {
    fitted_surface_serial(g, f, out);
    return;
  }
  out.resize(g.rows(), f.rows());
  const int n = static_cast<int>(g.rows());
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < n; ++i) fitted_row(g, f, out, i);
}

void project_responses_serial(const Matrix& z, const Matrix& f, Matrix& out) {
  out.resize(z.rows(), f.cols());
  for (int i = 0; i < z.rows(); ++i) project_row(z, f, out, i);
}

void project_responses(const Matrix& z, const Matrix& f, Matrix& out) {
  const int nt = effective_threads();
  if (nt <= 1 || z.rows() < 2) {
    project_responses_serial(z, f, out);
    return;
  }
  out.resize(z.rows(), f.cols());
  const int n = static_cast<int>(z.rows());
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < n; ++i) project_row(z, f, out, i);
}

double sum_sq_diff_serial(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (int i = 0; i < a.rows(); ++i) total += row_sq_diff(a, b, i);
  return total;
}

double sum_sq_diff(const Matrix& a, const Matrix& b) {
  const int nt = effective_threads();
  const int n = static_cast<int>(a.rows());
  if (nt <= 1 || n < 2) return sum_sq_diff_serial(a, b);
  std::vector<double> partial(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int i = 0; i < n; ++i) partial[static_cast<std::size_t>(i)] = row_sq_diff(a, b, i);
  // fixed row-order reduction
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += partial[static_cast<std::size_t>(i)];
  return total;
}

}  // namespace afbart::kernels
