#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "afbart/sampler.hpp"
#include "afbart/simgen.hpp"

namespace afbart {

struct BenchmarkSpec {
  std::vector<std::pair<int, double>> settings;  // (case, sigma)
  int replicates = 1;
  std::vector<FitMode> methods{FitMode::Afbart};
  ModelConfig config;   // per-fit settings; seed is derived per cell
  SimSpec sim;          // sizes shared by all settings
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct BenchmarkRow {
  int sim_case = 1;
  double sigma = 0.1;
  FitMode method = FitMode::Afbart;
  int replicate = 0;
  double rmspe = 0.0, mis = 0.0, mcrps = 0.0;
  bool failed = false;
  std::string error;
};

// Seeds derived per cell; the dataset seed is shared across methods within
// a replicate so comparisons are paired, the fit seed is disjoint across
// (setting, method, replicate).
std::uint64_t benchmark_data_seed(const BenchmarkSpec& spec, int setting, int rep);
std::uint64_t benchmark_fit_seed(const BenchmarkSpec& spec, int setting,
                                 int method, int rep);

// Runs replicates x settings x methods, up to max_threads cells at a time.
// Failed cells are recorded and the run continues.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec, int max_threads);

void write_benchmark_csv(const std::filesystem::path& path,
                         const std::vector<BenchmarkRow>& rows);
void write_benchmark_aggregate(const std::filesystem::path& path,
                               const std::vector<BenchmarkRow>& rows);

struct CvResult {
  std::vector<double> fold_rmspe;
  std::vector<double> fold_mcrps;
  double mean_rmspe = 0.0;
  double mean_mcrps = 0.0;
};

// k-fold cross-validation against held-out observed surfaces.
CvResult cross_validate(const FunctionalDataset& data, int k_folds,
                        const ModelConfig& config);

}  // namespace afbart
