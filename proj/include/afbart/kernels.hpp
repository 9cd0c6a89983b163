#pragma once

#include "afbart/types.hpp"

namespace afbart::kernels {

// Hot inner loops of the sampler, shared by prediction and metrics. Each
// kernel has a serial reference and an OpenMP version parallelized over
// independent output rows with per-row arithmetic identical to the serial
// path, so the two are bit-for-bit equal and chains stay deterministic.

// Number of OpenMP threads used by the parallel kernels; <= 1 falls back
// to the serial path.
void set_threads(int n);
int threads();

// out (n x M) = g (n x J) * f^T, f is M x J.
void fitted_surface_serial(const Matrix& g, const Matrix& f, Matrix& out);
void fitted_surface(const Matrix& g, const Matrix& f, Matrix& out);

// out (n x J) = z (n x M) * f (M x J).
void project_responses_serial(const Matrix& z, const Matrix& f, Matrix& out);
void project_responses(const Matrix& z, const Matrix& f, Matrix& out);

// sum over all cells of (a - b)^2; per-row partials combined in row order.
double sum_sq_diff_serial(const Matrix& a, const Matrix& b);
double sum_sq_diff(const Matrix& a, const Matrix& b);

}  // namespace afbart::kernels
