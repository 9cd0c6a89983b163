#pragma once

#include <cstdint>

#include "afbart/rng.hpp"
#include "afbart/types.hpp"

namespace afbart {

struct SimSpec {
  int sim_case = 1;  // 1 | 2 | 3
  int n_train = 100;
  int n_test = 200;
  int grid = 15;         // G x G resolution on [0,1]^2
  double sigma = 0.1;
  int j_true = 5;
  int k_true = 40;       // Case 1 generating thin-plate dimension
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedData {
  FunctionalDataset train;
  FunctionalDataset test;
  Matrix test_truth;   // n_test x M noiseless mean surfaces
  Matrix train_truth;  // n_train x M
};

// Case 1 coefficient function: indicator lattice, identical across j.
double h_case1(const Vector& x, int j);

// Case 2/3 coefficient functions: 5 sin(pi x1 x2) + 10(((j+2) x3 - 3)/6)^2.
double h_case2(const Vector& x, int j);

// Squared-exponential kernel with nugget used by the Case 2 surfaces.
double gp_kernel(const Eigen::RowVector2d& s, const Eigen::RowVector2d& t);

// One zero-mean draw over the grid from the gp_kernel Gram matrix.
Vector gp_sample(const GridDomain& grid, Rng& rng);

SimulatedData generate(const SimSpec& spec);

GridDomain unit_square_grid(int g);

}  // namespace afbart
