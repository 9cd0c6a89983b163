#include "afbart/benchmark.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include "afbart/dataset_io.hpp"
#include "afbart/metrics.hpp"
#include "afbart/tps_basis.hpp"

namespace afbart {

void BenchmarkSpec::validate() const {
  if (replicates < 1) throw ValidationError("replicates must be >= 1");
  if (methods.empty()) throw ValidationError("method list must be nonempty");
  if (settings.empty()) throw ValidationError("setting list must be nonempty");
}

std::uint64_t benchmark_data_seed(const BenchmarkSpec& spec, int setting, int rep) {
  return spec.base_seed + 1000000u +
         static_cast<std::uint64_t>(setting) * spec.replicates + rep;
}

std::uint64_t benchmark_fit_seed(const BenchmarkSpec& spec, int setting,
                                 int method, int rep) {
  const auto cell = (static_cast<std::uint64_t>(setting) * spec.methods.size() +
                     method) * spec.replicates + rep;
  return spec.base_seed + 1u + cell;
}

namespace {

BenchmarkRow run_cell(const BenchmarkSpec& spec, int setting, int method, int rep) {
  BenchmarkRow row;
  row.sim_case = spec.settings[static_cast<std::size_t>(setting)].first;
  row.sigma = spec.settings[static_cast<std::size_t>(setting)].second;
  row.method = spec.methods[static_cast<std::size_t>(method)];
  row.replicate = rep;
  try {
    SimSpec sim = spec.sim;
    sim.sim_case = row.sim_case;
    sim.sigma = row.sigma;
    sim.seed = benchmark_data_seed(spec, setting, rep);
    SimulatedData data = generate(sim);

    ModelConfig config = spec.config;
    config.mode = row.method;
    config.seed = benchmark_fit_seed(spec, setting, method, rep);

    BasisSystem basis = build_basis(data.train.grid, config.K);
    FitResult fit = run_chain(data.train, basis, config);
    PredictionResult pred = predict(fit, data.test.x);

    row.rmspe = rmspe(data.test_truth, pred.mean);
    row.mis = mis(data.test_truth, pred.lower, pred.upper);
    row.mcrps = mcrps(data.test_truth, pred.draws);
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec, int max_threads) {
  spec.validate();
  struct Cell {
    int setting, method, rep;
  };
  std::vector<Cell> cells;
  for (int s = 0; s < static_cast<int>(spec.settings.size()); ++s)
    for (int m = 0; m < static_cast<int>(spec.methods.size()); ++m)
      for (int r = 0; r < spec.replicates; ++r) cells.push_back({s, m, r});

  std::vector<BenchmarkRow> rows(cells.size());
  const int n_workers =
      std::max(1, std::min<int>(max_threads, static_cast<int>(cells.size())));
  if (n_workers == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c)
      rows[c] = run_cell(spec, cells[c].setting, cells[c].method, cells[c].rep);
    return rows;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= cells.size()) break;
      rows[c] = run_cell(spec, cells[c].setting, cells[c].method, cells[c].rep);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

void write_benchmark_csv(const std::filesystem::path& path,
                         const std::vector<BenchmarkRow>& rows) {
  std::ofstream out(path);
  out << "case,sigma,method,replicate,rmspe,mis,mcrps,status\n";
  for (const BenchmarkRow& r : rows) {
    out << r.sim_case << "," << format_double(r.sigma) << "," << to_string(r.method)
        << "," << r.replicate << ",";
    if (r.failed) {
      out << ",,," << "failed: " << r.error << "\n";
    } else {
      out << format_double(r.rmspe) << "," << format_double(r.mis) << ","
          << format_double(r.mcrps) << ",ok\n";
    }
  }
}

void write_benchmark_aggregate(const std::filesystem::path& path,
                               const std::vector<BenchmarkRow>& rows) {
  struct Acc {
    double rmspe = 0, mis = 0, mcrps = 0;
    int n = 0;
  };
  std::map<std::tuple<int, double, std::string>, Acc> agg;
  for (const BenchmarkRow& r : rows) {
    if (r.failed) continue;
    Acc& a = agg[{r.sim_case, r.sigma, to_string(r.method)}];
    a.rmspe += r.rmspe;
    a.mis += r.mis;
    a.mcrps += r.mcrps;
    ++a.n;
  }
  std::ofstream out(path);
  out << "case,sigma,method,mean_rmspe,mean_mis,mean_mcrps,replicates\n";
  for (const auto& [key, a] : agg) {
    const auto& [c, sigma, method] = key;
    out << c << "," << format_double(sigma) << "," << method << ","
        << format_double(a.rmspe / a.n) << "," << format_double(a.mis / a.n) << ","
        << format_double(a.mcrps / a.n) << "," << a.n << "\n";
  }
}

CvResult cross_validate(const FunctionalDataset& data, int k_folds,
                        const ModelConfig& config) {
  if (k_folds < 2 || k_folds > data.n())
    throw ValidationError("need 2 <= k <= n for cross-validation");
  CvResult out;
  for (int fold = 0; fold < k_folds; ++fold) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < data.n(); ++i)
      (i % k_folds == fold ? test_rows : train_rows).push_back(i);

    FunctionalDataset train;
    train.grid = data.grid;
    train.schema = data.schema;
    train.z.resize(static_cast<int>(train_rows.size()), data.m());
    train.x.resize(static_cast<int>(train_rows.size()), data.p());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      train.z.row(static_cast<int>(i)) = data.z.row(train_rows[i]);
      train.x.row(static_cast<int>(i)) = data.x.row(train_rows[i]);
    }
    Matrix z_test(static_cast<int>(test_rows.size()), data.m());
    Matrix x_test(static_cast<int>(test_rows.size()), data.p());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      z_test.row(static_cast<int>(i)) = data.z.row(test_rows[i]);
      x_test.row(static_cast<int>(i)) = data.x.row(test_rows[i]);
    }

    ModelConfig fold_config = config;
    fold_config.seed = config.seed + static_cast<std::uint64_t>(fold) + 1u;
    BasisSystem basis = build_basis(train.grid, fold_config.K);
    FitResult fit = run_chain(train, basis, fold_config);
    PredictionResult pred = predict(fit, x_test);

    out.fold_rmspe.push_back(rmspe(z_test, pred.mean));
    out.fold_mcrps.push_back(mcrps(z_test, pred.draws));
  }
  for (double v : out.fold_rmspe) out.mean_rmspe += v;
  for (double v : out.fold_mcrps) out.mean_mcrps += v;
  out.mean_rmspe /= k_folds;
  out.mean_mcrps /= k_folds;
  return out;
}

}  // namespace afbart
