#pragma once

#include <cstdint>

#include "afbart/types.hpp"

namespace afbart {

struct KnotSet {
  Matrix knots;  // R x 2, in selection order

  int size() const { return static_cast<int>(knots.rows()); }
};

// Orthonormal low-rank thin-plate design B (M x K, B^T B = I) and the
// congruently transformed roughness penalty Omega (K x K, SPD).
struct BasisSystem {
  Matrix b_matrix;  // M x K
  Matrix penalty;   // K x K
  KnotSet knots;
  double ridge = 0.0;

  int m() const { return static_cast<int>(b_matrix.rows()); }
  int k() const { return static_cast<int>(b_matrix.cols()); }
};

// Greedy maximin (farthest-point) knot selection over the grid points.
// First knot is the point nearest the grid centroid; ties break toward the
// lowest row-major index. Deterministic; the seed is accepted only for
// interface uniformity.
KnotSet select_knots(const GridDomain& grid, int count, std::uint64_t seed = 0);

// Raw thin-plate design [1, s1, s2, eta(||s - k_r||)] with eta(r) = r^2 log r,
// and the raw penalty: zero 3x3 polynomial block plus the radial energy
// block E_{rr'} = eta(||k_r - k_{r'}||).
void build_raw_design(const GridDomain& grid, const KnotSet& knots,
                      Matrix& raw_design, Matrix& raw_penalty);

// Thin QR of the raw design; the penalty is transformed congruently so
// coefficient-space quadratic forms are preserved, then ridged to strict
// positive definiteness.
BasisSystem orthonormalize(const Matrix& raw_design, const Matrix& raw_penalty,
                           const KnotSet& knots);

// select_knots + build_raw_design + orthonormalize with K = R + 3.
BasisSystem build_basis(const GridDomain& grid, int k_dim);

double tps_eta(double r);

}  // namespace afbart
