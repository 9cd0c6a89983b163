#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace afbart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CovariateKind { Continuous, Categorical };

struct CovariateSchema {
  std::string name;
  CovariateKind kind = CovariateKind::Continuous;
};

// Spatial observation grid: M coordinate pairs (s1, s2).
struct GridDomain {
  Matrix points;  // M x 2

  int size() const { return static_cast<int>(points.rows()); }
};

// The observable data: log-intensity surfaces Z (n x M) over a common grid,
// scalar covariates X (n x p) with a per-column schema.
struct FunctionalDataset {
  GridDomain grid;
  Matrix z;  // n x M
  Matrix x;  // n x p
  std::vector<CovariateSchema> schema;

  int n() const { return static_cast<int>(z.rows()); }
  int m() const { return static_cast<int>(z.cols()); }
  int p() const { return static_cast<int>(x.cols()); }
};

// One encoded column: identity pass-through of a continuous source column,
// or a 0/1 indicator for one level of a categorical source column.
struct EncodedColumn {
  int source = 0;         // source column in FunctionalDataset::x
  bool indicator = false; // true when this column is a categorical level
  int level = -1;         // category code when indicator
  std::string name;
};

struct EncodedCovariates {
  Matrix x_enc;  // n x p'
  std::vector<EncodedColumn> columns;

  int p_enc() const { return static_cast<int>(x_enc.cols()); }
};

enum class FitMode { Afbart, FbartTps, FbartFpc };

std::string to_string(FitMode mode);
FitMode fit_mode_from_string(const std::string& s);

struct ModelConfig {
  int T = 50;             // tree count
  int J = 20;             // basis dimension
  int K = 70;             // thin-plate dimension
  int n_mcmc = 2000;
  int burn_in = 1600;
  int thin = 1;
  double a = 0.95;        // tree prior
  double gamma = 0.5;     // tree prior depth decay
  double nu = 3.0;        // sigma^2 prior dof
  double sigma_quantile = 0.9;
  double k_shrink = 2.0;
  FitMode mode = FitMode::Afbart;
  std::uint64_t seed = 0;
  int n_cutpoints = 100;
  bool greedy_init = true;  // deterministic greedy tree initialization

  void validate() const;
};

// Checks all dataset invariants and normalizes grid ordering to row-major
// by (s2, s1). Errors name the offending row/column. grid_order, when
// given, receives the permutation applied to the grid columns.
FunctionalDataset validate_dataset(const FunctionalDataset& raw,
                                   std::vector<int>* grid_order = nullptr);

// One-hot encodes categorical columns (levels in first-appearance order);
// continuous columns pass through unchanged.
EncodedCovariates encode_covariates(const FunctionalDataset& data);

// Encodes new covariate rows with a previously built column map. Unseen
// categorical levels are an error naming the level.
Matrix encode_with_map(const Matrix& x_new,
                       const std::vector<CovariateSchema>& schema,
                       const std::vector<EncodedColumn>& columns);

}  // namespace afbart
