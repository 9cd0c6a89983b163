#include "afbart/sampler.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <tuple>

// Draw order within one iteration (fixed for reproducibility):
//   for each tree t: proposal draws, one acceptance uniform, then J normals
//   per leaf for the parameter resample; one gamma for sigma^2; per basis
//   column j: K normals for the psi draw; per j: one gamma for lambda_j.

namespace afbart {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sample_variance(const Matrix& z) {
  const double n = static_cast<double>(z.size());
  const double mean = z.mean();
  return (z.array() - mean).square().sum() / (n - 1.0);
}

// First j_dim right singular vectors of the column-centered response matrix.
Matrix principal_directions(const Matrix& z, int j_dim) {
  Matrix centered = z.rowwise() - z.colwise().mean();
  if (centered.cwiseAbs().maxCoeff() == 0.0)
    throw ValidationError("degenerate response matrix: zero variance");
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  if (svd.rank() < 1)
    throw ValidationError("degenerate response matrix: rank zero");
  return svd.matrixV().leftCols(j_dim);
}

// Gram-Schmidt on psi columns; with B^T B = I this orthonormalizes F = B psi.
void gram_schmidt_columns(Matrix& psi, const Matrix& b) {
  for (int j = 0; j < psi.cols(); ++j) {
    for (int jj = 0; jj < j; ++jj)
      psi.col(j) -= (psi.col(jj).dot(psi.col(j))) * psi.col(jj);
    double norm = (b * psi.col(j)).norm();
    if (norm <= 0.0) throw ValidationError("rank-deficient basis initialization");
    psi.col(j) /= norm;
  }
}

double log_det_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}
}  // namespace

PriorHyper build_prior(const FunctionalDataset& data, const BasisSystem& basis,
                       const ModelConfig& config) {
  if (config.J > std::min(data.n(), data.m()))
    throw ValidationError("basis dimension J exceeds min(n, M)");
  (void)basis;

  PriorHyper prior;
  prior.a = config.a;
  prior.gamma = config.gamma;
  prior.nu = config.nu;
  prior.k_shrink = config.k_shrink;

  const double sigma_hat2 = sample_variance(data.z);
  if (sigma_hat2 <= 0.0)
    throw ValidationError("degenerate response matrix: zero variance");
  boost::math::chi_squared chi2(config.nu);
  const double q = boost::math::quantile(chi2, 1.0 - config.sigma_quantile);
  prior.lambda_scale = sigma_hat2 * q / config.nu;

  Matrix dirs = principal_directions(data.z, config.J);
  Matrix scores = data.z * dirs;  // n x J
  const double t = static_cast<double>(config.T);
  prior.mu_mu = scores.colwise().mean().transpose() / t;
  prior.v_mu = Matrix::Zero(config.J, config.J);
  for (int j = 0; j < config.J; ++j) {
    double range = scores.col(j).maxCoeff() - scores.col(j).minCoeff();
    double sd = range / (2.0 * config.k_shrink * std::sqrt(t));
    prior.v_mu(j, j) = std::max(sd * sd, 1e-8);
  }
  return prior;
}

SamplerState init_state(const FunctionalDataset& data, const BasisSystem& basis,
                        const PriorHyper& prior, const ModelConfig& config) {
  SamplerState st;
  const int k_dim = basis.k();
  const int j_dim = config.J;

  if (config.mode == FitMode::FbartTps) {
    st.psi = Matrix::Zero(k_dim, j_dim);
    st.psi.topRows(j_dim) = Matrix::Identity(j_dim, j_dim);
  } else {
    Matrix dirs = principal_directions(data.z, j_dim);  // M x J
    st.psi = basis.b_matrix.transpose() * dirs;
  }
  gram_schmidt_columns(st.psi, basis.b_matrix);

  st.ensemble.trees.resize(static_cast<std::size_t>(config.T));
  for (auto& [tree, params] : st.ensemble.trees) {
    params.mu.resize(1, j_dim);
    params.mu.row(0) = prior.mu_mu.transpose();
  }
  st.sigma2 = 0.1 * sample_variance(data.z);
  st.lambda_j = Vector::Ones(j_dim);

  st.g_cache.resize(data.n(), j_dim);
  for (int i = 0; i < data.n(); ++i)
    st.g_cache.row(i) = (static_cast<double>(config.T) * prior.mu_mu).transpose();
  Matrix f = basis.b_matrix * st.psi;
  kernels::fitted_surface(st.g_cache, f, st.fitted);
  return st;
}

void leaf_posterior(int n_tl, const Vector& proj_resid_sum, double sigma2,
                    const Matrix& ftf, const PriorHyper& prior, Vector& mu_post,
                    Matrix& v_post) {
  if (sigma2 <= 0.0) throw ValidationError("sigma2 must be positive");
  const int j_dim = static_cast<int>(prior.mu_mu.size());
  Eigen::LLT<Matrix> vmu_llt(prior.v_mu);
  Matrix vmu_inv = vmu_llt.solve(Matrix::Identity(j_dim, j_dim));
  Matrix prec = vmu_inv + (static_cast<double>(n_tl) / sigma2) * ftf;
  Eigen::LLT<Matrix> prec_llt(prec);
  if (prec_llt.info() != Eigen::Success)
    throw ValidationError("singular leaf posterior covariance");
  v_post = prec_llt.solve(Matrix::Identity(j_dim, j_dim));
  mu_post = prec_llt.solve(proj_resid_sum / sigma2 + vmu_inv * prior.mu_mu);
}

double log_marginal_likelihood(const std::vector<std::pair<int, Vector>>& leaves,
                               double resid_sq, double sigma2, const Matrix& ftf,
                               int m_dim, const PriorHyper& prior) {
  if (sigma2 <= 0.0) throw ValidationError("sigma2 must be positive");
  const int j_dim = static_cast<int>(prior.mu_mu.size());
  Eigen::LLT<Matrix> vmu_llt(prior.v_mu);
  Matrix vmu_inv = vmu_llt.solve(Matrix::Identity(j_dim, j_dim));
  const double log_det_vmu = log_det_llt(vmu_llt);
  const double prior_quad = prior.mu_mu.dot(vmu_inv * prior.mu_mu);

  double total = -resid_sq / (2.0 * sigma2);
  for (const auto& [n_tl, proj_sum] : leaves) {
    Matrix prec = vmu_inv + (static_cast<double>(n_tl) / sigma2) * ftf;
    Eigen::LLT<Matrix> prec_llt(prec);
    if (prec_llt.info() != Eigen::Success)
      throw ValidationError("singular leaf posterior covariance");
    Vector b = proj_sum / sigma2 + vmu_inv * prior.mu_mu;
    Vector mu_post = prec_llt.solve(b);
    // 0.5*log|V_post| = -0.5*log|precision|
    total += -(static_cast<double>(n_tl) * m_dim / 2.0) * std::log(2.0 * M_PI * sigma2)
             - 0.5 * log_det_llt(prec_llt) - 0.5 * log_det_vmu
             + 0.5 * mu_post.dot(b) - 0.5 * prior_quad;
  }
  return total;
}

Sampler::Sampler(const FunctionalDataset& data, const BasisSystem& basis,
                 const ModelConfig& config)
    : data_(data),
      basis_(basis),
      config_(config),
      enc_(encode_covariates(data)),
      cutpoints_(build_cutpoints(enc_.x_enc, enc_.columns, config.n_cutpoints)),
      prior_(build_prior(data, basis, config)),
      state_(init_state(data, basis, prior_, config)),
      rng_(config.seed) {
  config_.validate();
  if (basis_.m() != data_.m())
    throw ValidationError("basis grid size does not match dataset");
  bt_zt_ = basis_.b_matrix.transpose() * data_.z.transpose();
  z_sq_.resize(data_.n());
  for (int i = 0; i < data_.n(); ++i) z_sq_(i) = data_.z.row(i).squaredNorm();
  refresh_projection();
  if (config_.mode != FitMode::Afbart) toggles_.update_psi = false;
}

void Sampler::refresh_projection() {
  f_ = basis_.b_matrix * state_.psi;
  ftf_ = f_.transpose() * f_;
  kernels::project_responses(data_.z, f_, q_);
}

void Sampler::refresh_fitted() {
  kernels::fitted_surface(state_.g_cache, f_, state_.fitted);
}

double Sampler::orthonormality_error() const {
  const int j_dim = config_.J;
  return (ftf_ - Matrix::Identity(j_dim, j_dim)).cwiseAbs().maxCoeff();
}

double Sampler::tree_log_marginal(const DecisionTree& tree,
                                  const std::vector<int>& assign) const {
  const int n = data_.n();
  const int n_leaves = tree.num_leaves();
  std::vector<std::pair<int, Vector>> leaves(
      static_cast<std::size_t>(n_leaves), {0, Vector::Zero(config_.J)});
  double resid_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto& [cnt, sum] = leaves[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    ++cnt;
    Vector proj = q_.row(i).transpose() - ftf_ * g_minus_.row(i).transpose();
    sum += proj;
    resid_sq += z_sq_(i) - 2.0 * q_.row(i).dot(g_minus_.row(i)) +
                g_minus_.row(i) * ftf_ * g_minus_.row(i).transpose();
  }
  return log_marginal_likelihood(leaves, resid_sq, state_.sigma2, ftf_,
                                 data_.m(), prior_);
}

void Sampler::resample_leaf_params(int t) {
  auto& [tree, params] = state_.ensemble.trees[static_cast<std::size_t>(t)];
  const int n = data_.n();
  const int j_dim = config_.J;
  const int n_leaves = tree.num_leaves();
  std::vector<int> assign = tree.leaf_assignments(enc_.x_enc);

  std::vector<int> counts(static_cast<std::size_t>(n_leaves), 0);
  Matrix proj_sums = Matrix::Zero(n_leaves, j_dim);
  for (int i = 0; i < n; ++i) {
    int l = assign[static_cast<std::size_t>(i)];
    ++counts[static_cast<std::size_t>(l)];
    proj_sums.row(l) += q_.row(i) - g_minus_.row(i) * ftf_;
  }

  params.mu.resize(n_leaves, j_dim);
  Vector mu_post;
  Matrix v_post;
  for (int l = 0; l < n_leaves; ++l) {
    leaf_posterior(counts[static_cast<std::size_t>(l)], proj_sums.row(l).transpose(),
                   state_.sigma2, ftf_, prior_, mu_post, v_post);
    Eigen::LLT<Matrix> llt(v_post);
    Vector xi(j_dim);
    for (int j = 0; j < j_dim; ++j) xi(j) = rng_.normal();
    params.mu.row(l) = (mu_post + llt.matrixL() * xi).transpose();
  }

  for (int i = 0; i < n; ++i)
    state_.g_cache.row(i) =
        g_minus_.row(i) + params.mu.row(assign[static_cast<std::size_t>(i)]);
}

void Sampler::update_tree_mh(int t) {
  auto& [tree, params] = state_.ensemble.trees[static_cast<std::size_t>(t)];
  const int n = data_.n();

  // partial residuals exclude tree t
  std::vector<int> assign = tree.leaf_assignments(enc_.x_enc);
  g_minus_.resize(n, config_.J);
  for (int i = 0; i < n; ++i)
    g_minus_.row(i) =
        state_.g_cache.row(i) - params.mu.row(assign[static_cast<std::size_t>(i)]);

  if (toggles_.update_trees) {
    Proposal prop = propose(tree, enc_.x_enc, cutpoints_, rng_);
    if (prop.auto_rejected) return;  // state unchanged except the RNG advance

    std::vector<int> assign_star = prop.tree.leaf_assignments(enc_.x_enc);
    double log_alpha = prop.log_q_ratio +
                       tree_log_marginal(prop.tree, assign_star) -
                       tree_log_marginal(tree, assign) +
                       log_tree_prior(prop.tree, prior_.a, prior_.gamma, cutpoints_) -
                       log_tree_prior(tree, prior_.a, prior_.gamma, cutpoints_);
    double u = rng_.uniform();
    if (std::log(u) < log_alpha) tree = std::move(prop.tree);
  }

  if (toggles_.update_leaf_params) resample_leaf_params(t);
}

void Sampler::update_sigma2() {
  refresh_fitted();
  const double resid_sq = kernels::sum_sq_diff(data_.z, state_.fitted);
  const double shape = (prior_.nu + static_cast<double>(data_.n()) * data_.m()) / 2.0;
  const double scale = (prior_.lambda_scale * prior_.nu + resid_sq) / 2.0;
  state_.sigma2 = 1.0 / rng_.gamma(shape, 1.0 / scale);
}

void Sampler::update_psi_constrained() {
  const int k_dim = basis_.k();
  const int j_dim = config_.J;
  const int n = data_.n();
  const Matrix& omega = basis_.penalty;
  last_rescale_drift_ = 0.0;

  for (int j = 0; j < j_dim; ++j) {
    double sg = state_.g_cache.col(j).squaredNorm();
    Matrix prec = (sg / state_.sigma2) * Matrix::Identity(k_dim, k_dim) +
                  state_.lambda_j(j) * omega;
    Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success)
      throw ValidationError("psi full-conditional precision not positive definite");

    // B^T [ sum_i g_i(j) (z_i - sum_{j' != j} B psi_j' g_i(j')) ]
    Vector rhs = bt_zt_ * state_.g_cache.col(j);
    for (int jj = 0; jj < j_dim; ++jj) {
      if (jj == j) continue;
      double cross = state_.g_cache.col(j).dot(state_.g_cache.col(jj));
      rhs -= cross * state_.psi.col(jj);
    }
    Vector mu = llt.solve(rhs / state_.sigma2);

    Vector xi(k_dim);
    for (int k = 0; k < k_dim; ++k) xi(k) = rng_.normal();
    Vector w = mu + llt.matrixU().solve(xi);

    if (j_dim > 1) {
      // condition on B psi_j orthogonal to every other B psi_j'
      Matrix c(j_dim - 1, k_dim);
      int row = 0;
      for (int jj = 0; jj < j_dim; ++jj) {
        if (jj == j) continue;
        c.row(row++) = state_.psi.col(jj).transpose();
      }
      Matrix sigma_ct = llt.solve(c.transpose());  // K x (J-1)
      Matrix small = c * sigma_ct;
      Eigen::LLT<Matrix> small_llt(small);
      if (small_llt.info() != Eigen::Success) {
        std::cerr << "warning: singular constraint system in psi update; ridging\n";
        small += 1e-10 * Matrix::Identity(j_dim - 1, j_dim - 1);
        small_llt.compute(small);
      }
      w -= sigma_ct * small_llt.solve(c * w);
    }

    Vector f_new = basis_.b_matrix * w;
    const double norm = f_new.norm();
    state_.psi.col(j) = w / norm;
    f_.col(j) = f_new / norm;

    // Rescale component j of every node parameter so B psi g is invariant.
    for (auto& [tree, params] : state_.ensemble.trees) params.mu.col(j) *= norm;
    Vector g_old = state_.g_cache.col(j);
    state_.g_cache.col(j) *= norm;

    // fitted-value drift of the normalize-and-rescale step
    double drift = 0.0;
    for (int i = 0; i < n; ++i) {
      double a = g_old(i);
      double b = state_.g_cache(i, j);
      for (int m = 0; m < data_.m(); ++m)
        drift = std::max(drift, std::abs(b * f_(m, j) - a * f_new(m)));
    }
    last_rescale_drift_ = std::max(last_rescale_drift_, drift);
  }

  refresh_projection();
  refresh_fitted();
}

void Sampler::update_lambda() {
  const int k_dim = basis_.k();
  for (int j = 0; j < config_.J; ++j) {
    double quad = state_.psi.col(j).dot(basis_.penalty * state_.psi.col(j));
    if (quad <= 0.0)
      throw ValidationError("non-positive roughness quadratic form");
    state_.lambda_j(j) = rng_.gamma(k_dim / 2.0 + 1.0, 2.0 / quad);
  }
}

void Sampler::iterate() {
  ++iter_;
  for (int t = 0; t < config_.T; ++t) update_tree_mh(t);

  // drift guard: periodically rebuild the prediction cache from scratch
  if (iter_ % 100 == 0) {
    Matrix g_exact(data_.n(), config_.J);
    for (int i = 0; i < data_.n(); ++i)
      g_exact.row(i) =
          ensemble_predict(state_.ensemble, enc_.x_enc.row(i).transpose()).transpose();
    double drift = (g_exact - state_.g_cache).cwiseAbs().maxCoeff();
    if (drift > 1e-8)
      throw std::runtime_error("prediction cache drift exceeds 1e-8");
    state_.g_cache = g_exact;
  }

  if (toggles_.update_sigma2) update_sigma2();
  if (toggles_.update_psi) {
    update_psi_constrained();
    update_lambda();
  }
  refresh_fitted();
}

void Sampler::warm_start() {
  const int n = data_.n();
  const int j_dim = config_.J;
  const int p_enc = static_cast<int>(enc_.x_enc.cols());
  const Matrix& x = enc_.x_enc;

  // Noise floor from the off-basis reconstruction residual: the part of Z
  // orthogonal to the current basis span is pure noise under the model.
  Matrix recon = q_ * f_.transpose();
  const double denom = std::max(1.0, static_cast<double>(n) * (data_.m() - j_dim));
  double sigma2_hat = std::max((data_.z - recon).squaredNorm() / denom, 1e-12);
  // A deliberately small working variance makes the greedy pass prefer finer
  // structure than the MH equilibrium alone would discover.
  const double sigma2_greedy = sigma2_hat / 25.0;
  const double blend = 0.5;        // leaf shrinkage toward the prior mean
  const int max_leaves = 16;       // per-tree leaf cap for the greedy pass
  const int n_passes = 2;          // one build pass plus one backfit pass
  const double tie_window = 0.5;   // log-units within which cuts count as tied
  const double cluster_width = 0.15;  // same-variable cuts closer than this
                                      // are treated as one shared boundary

  Eigen::LLT<Matrix> vmu_llt(prior_.v_mu);
  Matrix vmu_inv = vmu_llt.solve(Matrix::Identity(j_dim, j_dim));
  const double log_det_vmu = log_det_llt(vmu_llt);
  // Marginal-likelihood contribution of one leaf, up to terms constant
  // across partitions of the same observations.
  auto leaf_term = [&](double n_l, const Vector& sum) {
    Matrix prec = vmu_inv + (n_l / sigma2_greedy) * ftf_;
    Eigen::LLT<Matrix> llt(prec);
    Vector b = sum / sigma2_greedy + vmu_inv * prior_.mu_mu;
    Vector mu = llt.solve(b);
    return -0.5 * log_det_llt(llt) - 0.5 * log_det_vmu + 0.5 * mu.dot(b);
  };
  auto leaf_mean = [&](double n_l, const Vector& sum) {
    Matrix prec = vmu_inv + (n_l / sigma2_greedy) * ftf_;
    return Vector(Eigen::LLT<Matrix>(prec).solve(sum / sigma2_greedy +
                                                 vmu_inv * prior_.mu_mu));
  };

  for (int pass = 0; pass < n_passes; ++pass) {
    for (int t = 0; t < config_.T; ++t) {
      auto& [tree, params] = state_.ensemble.trees[static_cast<std::size_t>(t)];
      // Residual scores excluding this tree's current fit.
      Matrix old_contrib(n, j_dim);
      {
        std::vector<int> a0 = tree.leaf_assignments(x);
        for (int i = 0; i < n; ++i)
          old_contrib.row(i) = params.mu.row(a0[static_cast<std::size_t>(i)]);
      }
      Matrix r(n, j_dim);
      for (int i = 0; i < n; ++i)
        r.row(i) = q_.row(i) - (state_.g_cache.row(i) - old_contrib.row(i));
      if (pass > 0) tree = DecisionTree();

      // allowed[v]: restricted candidate cut indexes for the regrow step
      // (empty = all candidates available).
      std::vector<std::vector<int>> allowed(static_cast<std::size_t>(p_enc));

      // Greedy growth: repeatedly apply the best-gain split, where gain is
      // the marginal-likelihood improvement plus the tree-prior delta.
      // Likelihood-tied cuts (thresholds inside the same data gap) resolve
      // to the one nearest the middle of the tied range.
      auto grow_tree = [&]() {
        bool grew = true;
        while (grew && tree.num_leaves() < max_leaves) {
          grew = false;
          std::vector<int> assign = tree.leaf_assignments(x);
          const int nl = tree.num_leaves();
          std::vector<double> cnt(static_cast<std::size_t>(nl), 0.0);
          std::vector<Vector> sum(static_cast<std::size_t>(nl),
                                  Vector::Zero(j_dim));
          for (int i = 0; i < n; ++i) {
            cnt[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1.0;
            sum[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] +=
                r.row(i).transpose();
          }
          double best_gain = 0.0;
          int best_leaf = -1, best_var = -1, best_ci = -1;
          double best_cut = 0.0;
          for (int l = 0; l < nl; ++l) {
            if (cnt[static_cast<std::size_t>(l)] < 2) continue;
            const double base = leaf_term(cnt[static_cast<std::size_t>(l)],
                                          sum[static_cast<std::size_t>(l)]);
            for (int v = 0; v < p_enc; ++v) {
              const auto& cuts = cutpoints_.cuts[static_cast<std::size_t>(v)];
              const auto& av = allowed[static_cast<std::size_t>(v)];
              for (int ci = 0; ci < static_cast<int>(cuts.size()); ++ci) {
                if (!av.empty() &&
                    !std::binary_search(av.begin(), av.end(), ci))
                  continue;
                const double c = cuts[static_cast<std::size_t>(ci)];
                double n_le = 0.0;
                Vector s_le = Vector::Zero(j_dim);
                for (int i = 0; i < n; ++i)
                  if (assign[static_cast<std::size_t>(i)] == l && x(i, v) <= c) {
                    n_le += 1.0;
                    s_le += r.row(i).transpose();
                  }
                if (n_le < 1.0 || n_le > cnt[static_cast<std::size_t>(l)] - 1.0)
                  continue;
                const double gain =
                    leaf_term(n_le, s_le) +
                    leaf_term(cnt[static_cast<std::size_t>(l)] - n_le,
                              sum[static_cast<std::size_t>(l)] - s_le) -
                    base;
                if (gain > best_gain + 1e-9) {
                  best_gain = gain;
                  best_leaf = l;
                  best_var = v;
                  best_ci = ci;
                  best_cut = c;
                }
              }
            }
          }
          if (best_leaf < 0) break;
          // Re-score every cut of the winning variable in the winning leaf
          // and pick, among near-ties, the cut closest to the value midpoint
          // of the tied range.
          {
            const auto& cuts = cutpoints_.cuts[static_cast<std::size_t>(best_var)];
            std::vector<int> tied;
            std::vector<int> assign2 = tree.leaf_assignments(x);
            double c_l = 0.0;
            Vector s_l = Vector::Zero(j_dim);
            for (int i = 0; i < n; ++i)
              if (assign2[static_cast<std::size_t>(i)] == best_leaf) {
                c_l += 1.0;
                s_l += r.row(i).transpose();
              }
            const double base = leaf_term(c_l, s_l);
            for (int ci = 0; ci < static_cast<int>(cuts.size()); ++ci) {
              const double c = cuts[static_cast<std::size_t>(ci)];
              double nn = 0.0;
              Vector ss = Vector::Zero(j_dim);
              for (int i = 0; i < n; ++i)
                if (assign2[static_cast<std::size_t>(i)] == best_leaf &&
                    x(i, best_var) <= c) {
                  nn += 1.0;
                  ss += r.row(i).transpose();
                }
              if (nn < 1.0 || nn > c_l - 1.0) continue;
              const double gain =
                  leaf_term(nn, ss) + leaf_term(c_l - nn, s_l - ss) - base;
              if (gain > best_gain - tie_window) tied.push_back(ci);
            }
            if (!tied.empty()) {
              const double mid = 0.5 * (cuts[static_cast<std::size_t>(tied.front())] +
                                        cuts[static_cast<std::size_t>(tied.back())]);
              best_ci = tied.front();
              for (int ci : tied)
                if (std::abs(cuts[static_cast<std::size_t>(ci)] - mid) <
                    std::abs(cuts[static_cast<std::size_t>(best_ci)] - mid))
                  best_ci = ci;
              best_cut = cuts[static_cast<std::size_t>(best_ci)];
            }
          }
          // Apply the split with the tree-prior delta as the final guard.
          const double lp_old =
              log_tree_prior(tree, prior_.a, prior_.gamma, cutpoints_);
          DecisionTree cand = tree;
          std::vector<TreeNode*> leaves;
          std::function<void(TreeNode&)> collect = [&](TreeNode& nd) {
            if (nd.is_leaf()) {
              leaves.push_back(&nd);
              return;
            }
            collect(*nd.left);
            collect(*nd.right);
          };
          collect(cand.root());
          TreeNode* nd = leaves[static_cast<std::size_t>(best_leaf)];
          nd->rule = {best_var, best_ci, best_cut};
          nd->left = std::make_unique<TreeNode>();
          nd->right = std::make_unique<TreeNode>();
          const double lp_new =
              log_tree_prior(cand, prior_.a, prior_.gamma, cutpoints_);
          if (std::isfinite(lp_new) && best_gain + lp_new - lp_old > 0.0) {
            tree = std::move(cand);
            grew = true;
          }
        }
      };
      grow_tree();

      // Joint cut refinement: same-variable nodes with nearby cuts describe
      // one shared boundary; re-optimize that boundary pooling the whole
      // tree's marginal likelihood. Nested same-variable nodes cannot share
      // a cut, so only the topmost nodes of a cluster move jointly.
      auto refine_tree = [&]() {
        if (tree.num_leaves() < 2) return;
        auto tree_marginal = [&](const DecisionTree& tr) {
          std::vector<int> asg = tr.leaf_assignments(x);
          const int nl2 = tr.num_leaves();
          std::vector<double> c2(static_cast<std::size_t>(nl2), 0.0);
          std::vector<Vector> s2(static_cast<std::size_t>(nl2),
                                 Vector::Zero(j_dim));
          for (int i = 0; i < n; ++i) {
            c2[static_cast<std::size_t>(asg[static_cast<std::size_t>(i)])] += 1.0;
            s2[static_cast<std::size_t>(asg[static_cast<std::size_t>(i)])] +=
                r.row(i).transpose();
          }
          double tot = 0.0;
          for (int l = 0; l < nl2; ++l) {
            if (c2[static_cast<std::size_t>(l)] < 1.0) return -1e300;
            tot += leaf_term(c2[static_cast<std::size_t>(l)],
                             s2[static_cast<std::size_t>(l)]);
          }
          return tot;
        };
        for (int sweep = 0; sweep < 3; ++sweep) {
          for (int v = 0; v < p_enc; ++v) {
            std::vector<TreeNode*> nodes;
            std::function<void(TreeNode&)> walk = [&](TreeNode& nd) {
              if (nd.is_leaf()) return;
              if (nd.rule.var == v) nodes.push_back(&nd);
              walk(*nd.left);
              walk(*nd.right);
            };
            walk(tree.root());
            if (nodes.empty()) continue;
            std::sort(nodes.begin(), nodes.end(),
                      [](TreeNode* a, TreeNode* b) { return a->rule.cut < b->rule.cut; });
            std::vector<std::vector<TreeNode*>> clusters;
            for (TreeNode* nd : nodes) {
              if (clusters.empty() ||
                  nd->rule.cut - clusters.back().back()->rule.cut > cluster_width)
                clusters.push_back({});
              clusters.back().push_back(nd);
            }
            auto is_ancestor = [&](TreeNode* a, TreeNode* b) {
              std::function<bool(TreeNode*)> down = [&](TreeNode* nd) {
                if (nd == b) return true;
                if (nd->is_leaf()) return false;
                return down(nd->left.get()) || down(nd->right.get());
              };
              return a != b && down(a);
            };
            std::vector<std::vector<TreeNode*>> groups;
            for (auto& cl0 : clusters) {
              std::vector<TreeNode*> top, rest;
              for (TreeNode* nd : cl0) {
                bool nested = false;
                for (TreeNode* other : cl0)
                  if (is_ancestor(other, nd)) {
                    nested = true;
                    break;
                  }
                (nested ? rest : top).push_back(nd);
              }
              if (!top.empty()) groups.push_back(top);
              for (TreeNode* nd : rest) groups.push_back({nd});
            }
            const auto& cuts = cutpoints_.cuts[static_cast<std::size_t>(v)];
            for (auto& cl : groups) {
              std::vector<std::pair<int, double>> saved;
              for (TreeNode* nd : cl) saved.push_back({nd->rule.cut_index, nd->rule.cut});
              std::vector<double> marg(cuts.size(), -1e300);
              for (int ci = 0; ci < static_cast<int>(cuts.size()); ++ci) {
                for (TreeNode* nd : cl) {
                  nd->rule.cut_index = ci;
                  nd->rule.cut = cuts[static_cast<std::size_t>(ci)];
                }
                const double lp =
                    log_tree_prior(tree, prior_.a, prior_.gamma, cutpoints_);
                if (std::isfinite(lp))
                  marg[static_cast<std::size_t>(ci)] = tree_marginal(tree) + lp;
              }
              const double mmax = *std::max_element(marg.begin(), marg.end());
              std::vector<int> tied_ci;
              for (int ci = 0; ci < static_cast<int>(cuts.size()); ++ci)
                if (marg[static_cast<std::size_t>(ci)] > mmax - tie_window)
                  tied_ci.push_back(ci);
              if (mmax > -1e299 && !tied_ci.empty()) {
                const double mid =
                    0.5 * (cuts[static_cast<std::size_t>(tied_ci.front())] +
                           cuts[static_cast<std::size_t>(tied_ci.back())]);
                int pick = tied_ci.front();
                for (int ci : tied_ci)
                  if (std::abs(cuts[static_cast<std::size_t>(ci)] - mid) <
                      std::abs(cuts[static_cast<std::size_t>(pick)] - mid))
                    pick = ci;
                for (TreeNode* nd : cl) {
                  nd->rule.cut_index = pick;
                  nd->rule.cut = cuts[static_cast<std::size_t>(pick)];
                }
              } else {
                for (std::size_t k = 0; k < cl.size(); ++k) {
                  cl[k]->rule.cut_index = saved[k].first;
                  cl[k]->rule.cut = saved[k].second;
                }
              }
            }
          }
        }
      };
      refine_tree();

      // Regrow restricted to one representative cut per refined boundary:
      // forces the same boundary on every branch and drops splits that no
      // longer pay for themselves.
      if (tree.num_leaves() > 2) {
        for (int v = 0; v < p_enc; ++v) {
          std::vector<std::tuple<double, int, int>> found;  // (cut, depth, index)
          std::function<void(const TreeNode&, int)> walk2 =
              [&](const TreeNode& nd, int d) {
                if (nd.is_leaf()) return;
                if (nd.rule.var == v)
                  found.push_back({nd.rule.cut, d, nd.rule.cut_index});
                walk2(*nd.left, d + 1);
                walk2(*nd.right, d + 1);
              };
          walk2(tree.root(), 0);
          std::sort(found.begin(), found.end());
          auto& av = allowed[static_cast<std::size_t>(v)];
          av.clear();
          std::size_t i0 = 0;
          while (i0 < found.size()) {
            std::size_t i1 = i0;
            while (i1 + 1 < found.size() &&
                   std::get<0>(found[i1 + 1]) - std::get<0>(found[i1]) <=
                       cluster_width)
              ++i1;
            int best_d = 1 << 20, best_idx = -1;
            for (std::size_t k = i0; k <= i1; ++k)
              if (std::get<1>(found[k]) < best_d) {
                best_d = std::get<1>(found[k]);
                best_idx = std::get<2>(found[k]);
              }
            av.push_back(best_idx);
            i0 = i1 + 1;
          }
          std::sort(av.begin(), av.end());
        }
        tree = DecisionTree();
        grow_tree();
        for (auto& av : allowed) av.clear();
        refine_tree();
      }

      // Leaf parameters: shrunk posterior means of the residual scores.
      std::vector<int> assign = tree.leaf_assignments(x);
      const int nl = tree.num_leaves();
      std::vector<double> cnt(static_cast<std::size_t>(nl), 0.0);
      std::vector<Vector> sum(static_cast<std::size_t>(nl), Vector::Zero(j_dim));
      for (int i = 0; i < n; ++i) {
        cnt[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1.0;
        sum[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] +=
            r.row(i).transpose();
      }
      params.mu.resize(nl, j_dim);
      for (int l = 0; l < nl; ++l)
        params.mu.row(l) =
            blend * leaf_mean(cnt[static_cast<std::size_t>(l)],
                              sum[static_cast<std::size_t>(l)]).transpose() +
            (1.0 - blend) * prior_.mu_mu.transpose();
      for (int i = 0; i < n; ++i)
        state_.g_cache.row(i) +=
            params.mu.row(assign[static_cast<std::size_t>(i)]) - old_contrib.row(i);
    }
  }

  // Spread the fitted structure across the whole ensemble: each remaining
  // stump receives a copy of a grown tree's topology, and the donor's leaf
  // parameters are split evenly between donor and copy (the stump's constant
  // folds into the copy), so the ensemble fit is unchanged. Starting every
  // tree with structure keeps later topology moves local edits rather than
  // fresh root splits.
  {
    std::vector<std::size_t> grown, stumps;
    for (std::size_t t = 0; t < state_.ensemble.trees.size(); ++t)
      (state_.ensemble.trees[t].first.num_leaves() > 1 ? grown : stumps)
          .push_back(t);
    std::size_t k = 0;
    for (std::size_t s : stumps) {
      if (grown.empty()) break;
      auto& donor = state_.ensemble.trees[grown[k++ % grown.size()]];
      auto& slot = state_.ensemble.trees[s];
      const Vector offset = slot.second.mu.row(0).transpose();
      slot.first = tree_from_json(tree_to_json(donor.first));
      donor.second.mu *= 0.5;
      slot.second.mu = donor.second.mu;
      slot.second.mu.rowwise() += offset.transpose();
    }
  }

  state_.sigma2 = sigma2_hat;
  refresh_fitted();
}

FitResult Sampler::run() {
  FitResult fit;
  fit.config = config_;
  fit.basis = basis_;
  fit.schema = data_.schema;
  fit.columns = enc_.columns;
  fit.cutpoints = cutpoints_;
  for (int it = 1; it <= config_.n_mcmc; ++it) {
    iterate();
    if (it > config_.burn_in && (it - config_.burn_in) % config_.thin == 0)
      fit.draws.push_back(
          {state_.psi, state_.ensemble, state_.sigma2, state_.lambda_j});
  }
  return fit;
}

FitResult run_chain(const FunctionalDataset& data, const BasisSystem& basis,
                    const ModelConfig& config) {
  Sampler sampler(data, basis, config);
  if (config.greedy_init) sampler.warm_start();
  return sampler.run();
}

namespace {
double interp_quantile(std::vector<double>& vals, double q) {
  std::sort(vals.begin(), vals.end());
  const double pos = q * (static_cast<double>(vals.size()) - 1.0);
  const int lo = static_cast<int>(std::floor(pos));
  const double frac = pos - lo;
  if (lo + 1 >= static_cast<int>(vals.size())) return vals.back();
  return vals[static_cast<std::size_t>(lo)] * (1.0 - frac) +
         vals[static_cast<std::size_t>(lo) + 1] * frac;
}
}  // namespace

PredictionResult predict(const FitResult& fit, const Matrix& x_new_raw) {
  Matrix x_enc = encode_with_map(x_new_raw, fit.schema, fit.columns);
  const int n_star = static_cast<int>(x_enc.rows());
  const int m_dim = fit.basis.m();
  const int n_draws = static_cast<int>(fit.draws.size());
  if (n_draws < 1) throw ValidationError("fit contains no retained draws");

  PredictionResult out;
  out.draws.reserve(static_cast<std::size_t>(n_draws));
  Matrix g_new(n_star, fit.config.J);
  for (const Draw& draw : fit.draws) {
    for (int i = 0; i < n_star; ++i)
      g_new.row(i) =
          ensemble_predict(draw.ensemble, x_enc.row(i).transpose()).transpose();
    Matrix f = fit.basis.b_matrix * draw.psi;
    Matrix pred;
    kernels::fitted_surface(g_new, f, pred);
    out.draws.push_back(std::move(pred));
  }

  out.mean = Matrix::Zero(n_star, m_dim);
  for (const Matrix& d : out.draws) out.mean += d;
  out.mean /= static_cast<double>(n_draws);

  out.lower.resize(n_star, m_dim);
  out.upper.resize(n_star, m_dim);
  std::vector<double> cell(static_cast<std::size_t>(n_draws));
  for (int i = 0; i < n_star; ++i)
    for (int m = 0; m < m_dim; ++m) {
      for (int d = 0; d < n_draws; ++d)
        cell[static_cast<std::size_t>(d)] = out.draws[static_cast<std::size_t>(d)](i, m);
      out.lower(i, m) = interp_quantile(cell, 0.025);
      out.upper(i, m) = interp_quantile(cell, 0.975);
    }
  return out;
}

ImportanceResult variable_importance(const FitResult& fit) {
  if (fit.draws.empty()) throw ValidationError("fit contains no retained draws");
  const int p_enc = static_cast<int>(fit.columns.size());
  ImportanceResult out;
  out.per_encoded = Vector::Zero(p_enc);
  for (const Draw& draw : fit.draws)
    out.per_encoded += splitting_proportions(draw.ensemble, p_enc);
  out.per_encoded /= static_cast<double>(fit.draws.size());

  const int p = static_cast<int>(fit.schema.size());
  out.per_source = Vector::Zero(p);
  for (int c = 0; c < p_enc; ++c)
    out.per_source(fit.columns[static_cast<std::size_t>(c)].source) += out.per_encoded(c);
  for (const CovariateSchema& s : fit.schema) out.source_names.push_back(s.name);
  return out;
}

}  // namespace afbart
