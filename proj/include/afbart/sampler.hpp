#pragma once

#include <optional>

#include "afbart/kernels.hpp"
#include "afbart/rng.hpp"
#include "afbart/tps_basis.hpp"
#include "afbart/tree.hpp"
#include "afbart/types.hpp"

namespace afbart {

struct PriorHyper {
  double a = 0.95;
  double gamma = 0.5;
  double nu = 3.0;
  double lambda_scale = 1.0;  // scale of the nu*lambda/chi2_nu prior on sigma^2
  Vector mu_mu;               // J
  Matrix v_mu;                // J x J, diagonal in the default construction
  double k_shrink = 2.0;
};

struct SamplerState {
  Matrix psi;        // K x J
  Ensemble ensemble;
  double sigma2 = 1.0;
  Vector lambda_j;   // J
  Matrix g_cache;    // n x J, ensemble predictions per training row
  Matrix fitted;     // n x M, g_cache * (B psi)^T

  Matrix basis_coeffs() const { return psi; }
};

struct Draw {
  Matrix psi;
  Ensemble ensemble;
  double sigma2 = 1.0;
  Vector lambda_j;
};

struct FitResult {
  std::vector<Draw> draws;
  ModelConfig config;
  BasisSystem basis;
  std::vector<CovariateSchema> schema;
  std::vector<EncodedColumn> columns;
  CutpointTable cutpoints;
};

struct PredictionResult {
  std::vector<Matrix> draws;  // per retained draw, n* x M
  Matrix mean;                // n* x M
  Matrix lower;               // pointwise 2.5% quantile
  Matrix upper;               // pointwise 97.5% quantile
};

// sigma^2-prior scale and leaf-parameter prior moments from the data:
// first J functional principal components of Z give initial scores, whose
// column means and ranges calibrate mu_mu and V_mu for the T-tree sum.
PriorHyper build_prior(const FunctionalDataset& data, const BasisSystem& basis,
                       const ModelConfig& config);

SamplerState init_state(const FunctionalDataset& data, const BasisSystem& basis,
                        const PriorHyper& prior, const ModelConfig& config);

// Leaf-parameter posterior N(mu_post, v_post) given n_tl observations whose
// projected residual sum is proj_resid_sum = sum of (B psi)^T r_i.
void leaf_posterior(int n_tl, const Vector& proj_resid_sum, double sigma2,
                    const Matrix& ftf, const PriorHyper& prior, Vector& mu_post,
                    Matrix& v_post);

// Log marginal likelihood of one tree's partition with node parameters
// integrated out. Leaves are listed as (n_tl, proj_resid_sum); resid_sq is
// the total sum over observations of r_i^T r_i; m_dim is the grid size.
double log_marginal_likelihood(const std::vector<std::pair<int, Vector>>& leaves,
                               double resid_sq, double sigma2, const Matrix& ftf,
                               int m_dim, const PriorHyper& prior);

// Posterior mean / credible band of the mean surface for new covariate rows.
PredictionResult predict(const FitResult& fit, const Matrix& x_new_raw);

// Posterior mean splitting proportions per encoded column, plus the
// aggregation of indicator columns to their source covariates.
struct ImportanceResult {
  Vector per_encoded;          // p'
  Vector per_source;           // p
  std::vector<std::string> source_names;
};
ImportanceResult variable_importance(const FitResult& fit);

class Sampler {
 public:
  Sampler(const FunctionalDataset& data, const BasisSystem& basis,
          const ModelConfig& config);

  FitResult run();

  // Deterministic greedy tree initialization run before the first MCMC
  // iteration (config.greedy_init). Grows each tree on the current score
  // residuals, aligns nearby same-variable cuts, and sets leaf parameters
  // to shrunk posterior means. Uses no random draws.
  void warm_start();

  // Test hooks: freeze individual update blocks.
  struct Toggles {
    bool update_trees = true;
    bool update_leaf_params = true;
    bool update_sigma2 = true;
    bool update_psi = true;  // forced off in fbart modes
  };
  Toggles& toggles() { return toggles_; }

  const PriorHyper& prior() const { return prior_; }
  SamplerState& state() { return state_; }
  Rng& rng() { return rng_; }
  const CutpointTable& cutpoints() const { return cutpoints_; }
  const Matrix& x_enc() const { return enc_.x_enc; }

  // One Gibbs iteration in Algorithm order: trees/leaves, sigma^2, psi,
  // lambda. Exposed for the invariant tests.
  void iterate();

  void update_tree_mh(int t);
  void update_sigma2();
  void update_psi_constrained();
  void update_lambda();

  // Max |F^T F - I_J| for the current state.
  double orthonormality_error() const;
  // Largest change of a fitted value across the last psi normalize/rescale.
  double last_rescale_drift() const { return last_rescale_drift_; }

  void refresh_fitted();

 private:
  void refresh_projection();
  double tree_log_marginal(const DecisionTree& tree,
                           const std::vector<int>& assign) const;
  void resample_leaf_params(int t);

  FunctionalDataset data_;
  BasisSystem basis_;
  ModelConfig config_;
  EncodedCovariates enc_;
  CutpointTable cutpoints_;
  PriorHyper prior_;
  SamplerState state_;
  Rng rng_;
  Toggles toggles_;

  Matrix f_;        // M x J, B * psi
  Matrix ftf_;      // J x J
  Matrix q_;        // n x J, Z * F
  Matrix bt_zt_;    // K x n, B^T Z^T (fixed)
  Vector z_sq_;     // per-row ||z_i||^2 (fixed)
  Matrix g_minus_;  // scratch, n x J
  double last_rescale_drift_ = 0.0;
  int iter_ = 0;
};

FitResult run_chain(const FunctionalDataset& data, const BasisSystem& basis,
                    const ModelConfig& config);

}  // namespace afbart
