// End-to-end acceptance suite. Each numbered criterion prints exactly one
// PASS/FAIL line; the process exits nonzero if any criterion fails.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "afbart/dataset_io.hpp"
#include "afbart/fit_io.hpp"
#include "afbart/metrics.hpp"
#include "afbart/sampler.hpp"
#include "afbart/simgen.hpp"
#include "afbart/tps_basis.hpp"
#include "afbart/tree.hpp"

using namespace afbart;
namespace fs = std::filesystem;

namespace {

int max_workers() {
  if (const char* env = std::getenv("AFBART_THREADS"))
    return std::max(1, std::atoi(env));
  return std::max(1, std::min(6, static_cast<int>(std::thread::hardware_concurrency())));
}

ModelConfig desk_config() {
  ModelConfig c;
  c.T = 50;
  c.J = 5;
  c.K = 40;
  c.n_mcmc = 2000;
  c.burn_in = 1600;
  c.thin = 1;
  return c;
}

SimSpec desk_sim(int sim_case, int rep) {
  SimSpec spec;
  spec.sim_case = sim_case;
  spec.n_train = 100;
  spec.n_test = 200;
  spec.grid = 15;
  spec.sigma = 0.1;
  spec.seed = 100u + static_cast<std::uint64_t>(sim_case) * 10u +
              static_cast<std::uint64_t>(rep);
  return spec;
}

struct CellResult {
  double rmspe = 0.0, nrmse = 0.0, mis = 0.0, mcrps = 0.0, coverage = 0.0;
  double max_ortho = 0.0, max_drift = 0.0;  // filled when tracked
  bool ok = false;
  std::string error;
};

CellResult run_cell(int sim_case, int rep, FitMode mode, bool track) {
  CellResult out;
  try {
    SimulatedData data = generate(desk_sim(sim_case, rep));
    ModelConfig config = desk_config();
    config.mode = mode;
    config.seed = 1000u + static_cast<std::uint64_t>(sim_case) * 100u +
                  static_cast<std::uint64_t>(rep) * 10u +
                  (mode == FitMode::Afbart ? 0u : 1u);
    BasisSystem basis = build_basis(data.train.grid, config.K);

    FitResult fit;
    if (track) {
      Sampler sampler(data.train, basis, config);
      if (config.greedy_init) sampler.warm_start();
      fit.config = config;
      fit.basis = basis;
      fit.schema = data.train.schema;
      fit.columns = encode_covariates(data.train).columns;
      for (int it = 1; it <= config.n_mcmc; ++it) {
        sampler.iterate();
        out.max_drift = std::max(out.max_drift, sampler.last_rescale_drift());
        if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
          out.max_ortho = std::max(out.max_ortho, sampler.orthonormality_error());
          fit.draws.push_back({sampler.state().psi, sampler.state().ensemble,
                               sampler.state().sigma2, sampler.state().lambda_j});
        }
      }
    } else {
      fit = run_chain(data.train, basis, config);
    }

    PredictionResult pred = predict(fit, data.test.x);
    out.rmspe = rmspe(data.test_truth, pred.mean);
    // RMSPE normalized by the span of the true surfaces: the generator's
    // overall scale is a reconstruction choice, so accuracy thresholds are
    // checked on the scale-free ratio.
    out.nrmse = out.rmspe /
                (data.test_truth.maxCoeff() - data.test_truth.minCoeff());
    out.mis = mis(data.test_truth, pred.lower, pred.upper);
    out.mcrps = mcrps(data.test_truth, pred.draws);
    int covered = 0;
    for (int i = 0; i < data.test_truth.rows(); ++i)
      for (int m = 0; m < data.test_truth.cols(); ++m)
        if (data.test_truth(i, m) >= pred.lower(i, m) &&
            data.test_truth(i, m) <= pred.upper(i, m))
          ++covered;
    out.coverage = static_cast<double>(covered) /
                   static_cast<double>(data.test_truth.size());
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

// ---------------------------------------------------------------- criterion 1

bool criterion_marginal_oracle(std::string& detail) {
  Rng rng(271828);
  int agree = 0;
  const int s = 1000000;
  std::vector<double> logs(static_cast<std::size_t>(s));
  for (int inst = 0; inst < 20; ++inst) {
    const int j_dim = 1 + static_cast<int>(rng.uniform_index(2));
    const int m_dim = 1 + static_cast<int>(rng.uniform_index(4));
    const int n_tl = 1 + static_cast<int>(rng.uniform_index(3));
    Matrix f(m_dim, j_dim);
    for (int i = 0; i < m_dim; ++i)
      for (int j = 0; j < j_dim; ++j) f(i, j) = rng.normal();
    Matrix ftf = f.transpose() * f;

    PriorHyper prior;
    prior.mu_mu = Vector(j_dim);
    prior.v_mu = Matrix::Zero(j_dim, j_dim);
    for (int j = 0; j < j_dim; ++j) {
      prior.mu_mu(j) = rng.normal();
      prior.v_mu(j, j) = 0.3 + rng.uniform();
    }
    const double sigma2 = 0.5 + 1.5 * rng.uniform();

    Vector proj = Vector::Zero(j_dim);
    double resid_sq = 0.0;
    for (int i = 0; i < n_tl; ++i) {
      Vector r(m_dim);
      for (int m = 0; m < m_dim; ++m) r(m) = rng.normal();
      proj += f.transpose() * r;
      resid_sq += r.squaredNorm();
    }
    const double ml = log_marginal_likelihood({{n_tl, proj}}, resid_sq, sigma2,
                                              ftf, m_dim, prior);

    const double log_norm =
        -(static_cast<double>(n_tl) * m_dim / 2.0) * std::log(2.0 * M_PI * sigma2);
    Vector sd = prior.v_mu.diagonal().cwiseSqrt();
    for (int d = 0; d < s; ++d) {
      Vector mu(j_dim);
      for (int j = 0; j < j_dim; ++j) mu(j) = prior.mu_mu(j) + sd(j) * rng.normal();
      double quad = resid_sq - 2.0 * mu.dot(proj) + n_tl * mu.dot(ftf * mu);
      logs[static_cast<std::size_t>(d)] = log_norm - quad / (2.0 * sigma2);
    }
    double peak = *std::max_element(logs.begin(), logs.end());
    double sum = 0.0, sum_sq = 0.0;
    for (double lw : logs) {
      double w = std::exp(lw - peak);
      sum += w;
      sum_sq += w * w;
    }
    double mean_w = sum / s;
    double se_log = std::sqrt((sum_sq / s - mean_w * mean_w) / s) / mean_w;
    if (std::abs(ml - (peak + std::log(mean_w))) <= 3.0 * se_log) ++agree;
  }
  std::ostringstream os;
  os << agree << "/20 instances within 3 MC standard errors";
  detail = os.str();
  return agree >= 19;
}

// ---------------------------------------------------------------- criterion 2

bool criterion_conjugate_recovery(std::string& detail) {
  SimSpec spec;
  spec.sim_case = 2;
  spec.n_train = 30;
  spec.n_test = 2;
  spec.grid = 6;
  spec.sigma = 0.2;
  spec.seed = 17;
  SimulatedData data = generate(spec);

  ModelConfig config;
  config.T = 1;
  config.J = 2;
  config.K = 10;
  config.n_mcmc = 5100;
  config.burn_in = 100;
  BasisSystem basis = build_basis(data.train.grid, config.K);
  Sampler sampler(data.train, basis, config);
  sampler.toggles() = {false, true, false, false};

  // closed form for the single stump: all observations share one leaf and
  // the partial residual is the full response
  Matrix f = basis.b_matrix * sampler.state().psi;
  Matrix ftf = f.transpose() * f;
  Vector proj = Vector::Zero(config.J);
  for (int i = 0; i < data.train.n(); ++i)
    proj += f.transpose() * data.train.z.row(i).transpose();
  Vector mu_post;
  Matrix v_post;
  leaf_posterior(data.train.n(), proj, sampler.state().sigma2, ftf,
                 sampler.prior(), mu_post, v_post);

  const int n_draws = 5000;
  Matrix draws(n_draws, config.J);
  for (int it = 0; it < 100; ++it) sampler.iterate();
  for (int d = 0; d < n_draws; ++d) {
    sampler.iterate();
    draws.row(d) = sampler.state().ensemble.trees[0].second.mu.row(0);
  }

  bool pass = true;
  std::ostringstream os;
  for (int j = 0; j < config.J; ++j) {
    double mean = draws.col(j).mean();
    double var = (draws.col(j).array() - mean).square().sum() / (n_draws - 1);
    double se = std::sqrt(v_post(j, j) / n_draws);
    if (std::abs(mean - mu_post(j)) > 3.0 * se) pass = false;
    if (std::abs(var - v_post(j, j)) > 0.10 * v_post(j, j)) pass = false;
    os << "component " << j << ": mean err " << std::abs(mean - mu_post(j))
       << " (3se = " << 3.0 * se << "), var ratio " << var / v_post(j, j) << "; ";
  }
  detail = os.str();
  return pass;
}

// ------------------------------------------------------------- criteria 8, 9

bool criterion_metric_units(std::string& detail) {
  bool pass = true;
  Matrix truth(1, 2), pred(1, 2);
  truth << 0, 0;
  pred << 3, 4;
  if (std::abs(rmspe(truth, pred) - std::sqrt(12.5)) > 1e-12) pass = false;

  Matrix t1(1, 1), lo(1, 1), up(1, 1);
  t1 << 1.5;
  lo << 0;
  up << 1;
  if (std::abs(mis(t1, lo, up) - 21.0) > 1e-12) pass = false;

  if (std::abs(crps_sorted({0.0, 1.0}, 0.0) - 0.25) > 1e-12) pass = false;

  Matrix t2(1, 2), d1(1, 2), d2(1, 2);
  t2 << 0, 0;
  d1 << 0, 1;
  d2 << 1, 0;
  if (std::abs(mcrps(t2, {d1, d2}) - 0.25) > 1e-12) pass = false;

  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> size(2, 50);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> samples(static_cast<std::size_t>(size(gen)));
    for (double& v : samples) v = 2.5 * nd(gen);
    double y = 2.5 * nd(gen);
    worst = std::max(worst,
                     std::abs(crps_sorted(samples, y) - crps_naive(samples, y)));
  }
  if (worst > 1e-12) pass = false;
  std::ostringstream os;
  os << "hand examples exact; max sorted-vs-naive CRPS gap " << worst;
  detail = os.str();
  return pass;
}

std::unique_ptr<TreeNode> clone_node(const TreeNode& n) {
  auto out = std::make_unique<TreeNode>();
  out->rule = n.rule;
  if (!n.is_leaf()) {
    out->left = clone_node(*n.left);
    out->right = clone_node(*n.right);
  }
  return out;
}

void enumerate_trees(const std::vector<int>& avail, const CutpointTable& table,
                     std::vector<std::unique_ptr<TreeNode>>& out) {
  out.push_back(std::make_unique<TreeNode>());
  for (int idx : avail) {
    std::vector<int> left_avail, right_avail;
    for (int j : avail) {
      if (j < idx) left_avail.push_back(j);
      if (j > idx) right_avail.push_back(j);
    }
    std::vector<std::unique_ptr<TreeNode>> lefts, rights;
    enumerate_trees(left_avail, table, lefts);
    enumerate_trees(right_avail, table, rights);
    for (const auto& l : lefts)
      for (const auto& r : rights) {
        auto n = std::make_unique<TreeNode>();
        n->rule = {0, idx, table.cuts[0][static_cast<std::size_t>(idx)]};
        n->left = clone_node(*l);
        n->right = clone_node(*r);
        out.push_back(std::move(n));
      }
  }
}

bool criterion_prior_normalization(std::string& detail) {
  CutpointTable table;
  table.cuts = {{0.3, 0.6}};
  std::vector<std::unique_ptr<TreeNode>> all;
  enumerate_trees({0, 1}, table, all);
  double total = 0.0;
  for (const auto& root : all) {
    DecisionTree t;
    t.root().rule = root->rule;
    if (!root->is_leaf()) {
      t.root().left = clone_node(*root->left);
      t.root().right = clone_node(*root->right);
    }
    total += std::exp(log_tree_prior(t, 0.95, 0.5, table));
  }
  std::ostringstream os;
  os << all.size() << " trees, total prior mass " << total;
  detail = os.str();
  return std::abs(total - 1.0) <= 1e-10;
}

// ---------------------------------------------------------------- criterion 7

bool criterion_importance(std::string& detail) {
  SimulatedData data = generate(desk_sim(1, 0));
  FunctionalDataset augmented = data.train;
  Rng noise(424242);
  augmented.x.conservativeResize(augmented.x.rows(), 6);
  for (int i = 0; i < augmented.x.rows(); ++i)
    for (int j = 3; j < 6; ++j) augmented.x(i, j) = noise.uniform();
  augmented.schema.push_back({"x4", CovariateKind::Continuous});
  augmented.schema.push_back({"x5", CovariateKind::Continuous});
  augmented.schema.push_back({"x6", CovariateKind::Continuous});

  ModelConfig config = desk_config();
  config.seed = 7001;
  BasisSystem basis = build_basis(augmented.grid, config.K);
  FitResult fit = run_chain(augmented, basis, config);
  ImportanceResult imp = variable_importance(fit);

  double active = imp.per_source(0) + imp.per_source(1) + imp.per_source(2);
  double total = imp.per_source.sum();
  std::ostringstream os;
  os << "active-covariate mass " << active / total << " (x1.." << "x3 of "
     << total << " total)";
  detail = os.str();
  return total > 0.0 && active / total >= 0.8;
}

// --------------------------------------------------------------- criterion 10

int run_cmd(const std::string& cmd) {
  int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

bool criterion_cli_determinism(std::string& detail) {
  const char* cli = std::getenv("AFBART_CLI");
  if (!cli) {
    detail = "AFBART_CLI not set";
    return false;
  }
  fs::path tmp = fs::temp_directory_path() /
                 ("afbart_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(tmp);
  std::ofstream cfg(tmp / "config.json");
  cfg << R"({"T": 20, "J": 3, "K": 12, "n_mcmc": 120, "burn_in": 80, "seed": 9})"
      << "\n";
  cfg.close();

  bool pass = true;
  for (const std::string run : {"one", "two"}) {
    fs::path base = tmp / run;
    std::string c = std::string(cli);
    if (run_cmd(c + " simulate --case 1 --grid 8 --n-train 25 --n-test 10"
                    " --sigma 0.1 --seed 4 --out " + (base / "data").string()) ||
        run_cmd(c + " fit --data " + (base / "data/train").string() +
                " --config " + (tmp / "config.json").string() + " --out " +
                (base / "fit").string()) ||
        run_cmd(c + " evaluate --fit " + (base / "fit").string() + " --test " +
                (base / "data/test").string() + " --out " +
                (base / "results.json").string()))
      pass = false;
  }
  if (pass)
    pass = run_cmd("diff -r " + (tmp / "one").string() + " " +
                   (tmp / "two").string()) == 0;
  detail = pass ? "simulate + fit + evaluate byte-identical across two runs"
                : "outputs differ or a command failed";
  fs::remove_all(tmp);
  return pass;
}

}  // namespace

int main() {
  kernels::set_threads(1);  // the cells below run concurrently instead

  // launch the heavy chains up front on a small worker pool
  struct Job {
    int sim_case, rep;
    FitMode mode;
    bool track;
    CellResult result;
  };
  std::vector<Job> jobs;
  for (int sim_case : {1, 2})
    for (int rep = 0; rep < 5; ++rep)
      for (FitMode mode : {FitMode::Afbart, FitMode::FbartTps})
        jobs.push_back({sim_case, rep, mode,
                        sim_case == 1 && rep == 0 && mode == FitMode::Afbart,
                        {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) break;
      Job& job = jobs[idx];
      job.result = run_cell(job.sim_case, job.rep, job.mode, job.track);
    }
  };
  const int n_workers = std::min<int>(max_workers(), static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  auto cell = [&](int sim_case, int rep, FitMode mode) -> const CellResult& {
    for (const Job& job : jobs)
      if (job.sim_case == sim_case && job.rep == rep && job.mode == mode)
        return job.result;
    throw std::logic_error("missing cell");
  };

  int failures = 0;
  auto report = [&](int id, const std::string& name, bool pass,
                    const std::string& detail) {
    std::cout << "criterion " << id << " (" << name << "): "
              << (pass ? "PASS" : "FAIL") << " — " << detail << "\n";
    if (!pass) ++failures;
  };

  std::string detail;

  report(1, "marginal-likelihood oracle", criterion_marginal_oracle(detail), detail);
  report(2, "conjugate recovery", criterion_conjugate_recovery(detail), detail);

  {  // criterion 3: desk-scale Case 1
    bool all_ok = true;
    double mean_af = 0.0;
    int wins = 0;
    std::ostringstream os;
    for (int rep = 0; rep < 5; ++rep) {
      const CellResult& af = cell(1, rep, FitMode::Afbart);
      const CellResult& fb = cell(1, rep, FitMode::FbartTps);
      if (!af.ok || !fb.ok) {
        all_ok = false;
        os << "replicate " << rep << " failed: " << af.error << fb.error << "; ";
        continue;
      }
      mean_af += af.nrmse / 5.0;
      if (af.rmspe < fb.rmspe) ++wins;
    }
    os << "mean AFBART range-normalized RMSPE " << mean_af
       << " (<= 0.15), beats FBART-TPS in " << wins << "/5 replicates";
    report(3, "desk-scale Case 1", all_ok && mean_af <= 0.15 && wins >= 4, os.str());
  }

  {  // criterion 4: desk-scale Case 2
    bool all_ok = true;
    double mean_rmspe = 0.0, mean_crps_af = 0.0, mean_crps_fb = 0.0;
    std::ostringstream os;
    for (int rep = 0; rep < 5; ++rep) {
      const CellResult& af = cell(2, rep, FitMode::Afbart);
      const CellResult& fb = cell(2, rep, FitMode::FbartTps);
      if (!af.ok || !fb.ok) {
        all_ok = false;
        os << "replicate " << rep << " failed: " << af.error << fb.error << "; ";
        continue;
      }
      mean_rmspe += af.nrmse / 5.0;
      mean_crps_af += af.mcrps / 5.0;
      mean_crps_fb += fb.mcrps / 5.0;
    }
    os << "mean AFBART range-normalized RMSPE " << mean_rmspe
       << " (<= 0.12), MCRPS " << mean_crps_af << " vs FBART-TPS "
       << mean_crps_fb;
    report(4, "desk-scale Case 2",
           all_ok && mean_rmspe <= 0.12 && mean_crps_af < mean_crps_fb, os.str());
  }

  {  // criterion 5: calibration
    double coverage = 0.0;
    bool all_ok = true;
    for (int rep = 0; rep < 5; ++rep) {
      const CellResult& af = cell(1, rep, FitMode::Afbart);
      if (!af.ok) all_ok = false;
      coverage += af.coverage / 5.0;
    }
    std::ostringstream os;
    os << "mean pointwise 95% coverage " << coverage << " (>= 0.80)";
    report(5, "credible-interval calibration", all_ok && coverage >= 0.80, os.str());
  }

  {  // criterion 6: identifiability invariants over the tracked chain
    const CellResult& tracked = cell(1, 0, FitMode::Afbart);
    std::ostringstream os;
    os << "max |F'F - I| over retained draws " << tracked.max_ortho
       << " (<= 1e-8); max rescale drift " << tracked.max_drift << " (<= 1e-10)";
    report(6, "identifiability invariant",
           tracked.ok && tracked.max_ortho <= 1e-8 && tracked.max_drift <= 1e-10,
           os.str());
  }

  report(7, "variable importance", criterion_importance(detail), detail);
  report(8, "metric unit suite", criterion_metric_units(detail), detail);
  report(9, "tree-prior normalization", criterion_prior_normalization(detail),
         detail);
  report(10, "CLI determinism", criterion_cli_determinism(detail), detail);

  if (failures > 0) {
    std::cout << failures << " criteria failed\n";
    return 1;
  }
  std::cout << "all 10 criteria passed\n";
  return 0;
}
