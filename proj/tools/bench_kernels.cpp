// Timing comparison of the serial reference kernels against the OpenMP
// versions, plus a bitwise equality check on the same inputs.
#include <chrono>
#include <cstdio>
#include <random>

#include "afbart/kernels.hpp"

using afbart::Matrix;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(gen);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 400;
  const int m = argc > 2 ? std::atoi(argv[2]) : 625;
  const int j = argc > 3 ? std::atoi(argv[3]) : 20;
  const int reps = argc > 4 ? std::atoi(argv[4]) : 50;

  std::mt19937_64 gen(12345);
  Matrix g = random_matrix(n, j, gen);
  Matrix f = random_matrix(m, j, gen);
  Matrix z = random_matrix(n, m, gen);
  Matrix a = random_matrix(n, m, gen);

  std::printf("n=%d M=%d J=%d reps=%d threads=%d\n", n, m, j, reps,
              afbart::kernels::threads());

  Matrix out_s, out_p;
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) afbart::kernels::fitted_surface_serial(g, f, out_s);
  double serial_ms = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) afbart::kernels::fitted_surface(g, f, out_p);
  std::printf("fitted_surface    serial %8.2f ms   parallel %8.2f ms   equal=%d\n",
              serial_ms, ms_since(t0), int(out_s == out_p));

  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) afbart::kernels::project_responses_serial(z, f, out_s);
  serial_ms = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) afbart::kernels::project_responses(z, f, out_p);
  std::printf("project_responses serial %8.2f ms   parallel %8.2f ms   equal=%d\n",
              serial_ms, ms_since(t0), int(out_s == out_p));

  double acc_s = 0.0, acc_p = 0.0;
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) acc_s += afbart::kernels::sum_sq_diff_serial(z, a);
  serial_ms = ms_since(t0);
  t0 = Clock::now();
  for (int r = 0; r < reps; ++r) acc_p += afbart::kernels::sum_sq_diff(z, a);
  std::printf("sum_sq_diff       serial %8.2f ms   parallel %8.2f ms   equal=%d\n",
              serial_ms, ms_since(t0), int(acc_s == acc_p));
  return 0;
}
