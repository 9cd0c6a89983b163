#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <thread>

#include "afbart/benchmark.hpp"
#include "afbart/dataset_io.hpp"
#include "afbart/fit_io.hpp"
#include "afbart/heatmap.hpp"
#include "afbart/metrics.hpp"
#include "afbart/sampler.hpp"
#include "afbart/simgen.hpp"
#include "afbart/tps_basis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace afbart;

namespace {

void ensure_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ValidationError("output directory " + dir.string() +
                          " is not empty (use --force to overwrite)");
  fs::create_directories(dir);
}

void amend_meta(const fs::path& dir, const json& extra) {
  std::ifstream in(dir / "meta.json");
  json meta = json::parse(in);
  in.close();
  meta.update(extra);
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

ModelConfig load_config(const std::string& config_path, const std::string& preset,
                        const std::string& mode, std::int64_t seed) {
  ModelConfig config;
  if (preset == "real") {
    config.n_mcmc = 48000;
    config.burn_in = 40000;
    config.thin = 20;
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ValidationError("cannot open config file " + config_path);
    config = config_from_json(json::parse(in));
  }
  if (!mode.empty()) config.mode = fit_mode_from_string(mode);
  if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
  config.validate();
  return config;
}

int benchmark_threads() {
  if (const char* env = std::getenv("AFBART_THREADS"))
    return std::max(1, std::atoi(env));
  return static_cast<int>(std::thread::hardware_concurrency());
}

int cmd_simulate(int sim_case, int n_train, int n_test, int grid, double sigma,
                 std::int64_t seed, const std::string& out, bool force) {
  SimSpec spec;
  spec.sim_case = sim_case;
  spec.n_train = n_train;
  spec.n_test = n_test;
  spec.grid = grid;
  spec.sigma = sigma;
  spec.seed = static_cast<std::uint64_t>(seed);
  spec.validate();

  ensure_output_dir(out, force);
  SimulatedData data = generate(spec);
  write_dataset(fs::path(out) / "train", data.train, data.train_truth);
  write_dataset(fs::path(out) / "test", data.test, data.test_truth);
  json extra{{"case", sim_case}, {"sigma", sigma}, {"seed", seed}};
  if (sim_case == 3)
    extra["surface_note"] =
        "case-3 surfaces are seeded synthetic bump mixtures";
  amend_meta(fs::path(out) / "train", extra);
  extra["n_star"] = n_test;
  amend_meta(fs::path(out) / "test", extra);
  std::cout << "wrote " << out << "/train and " << out << "/test\n";
  return 0;
}

int cmd_fit(const std::string& data_dir, const std::string& config_path,
            const std::string& preset, const std::string& mode, std::int64_t seed,
            const std::string& out, bool force) {
  ModelConfig config = load_config(config_path, preset, mode, seed);
  LoadedDataset loaded = read_dataset(data_dir);
  if (config.mode == FitMode::FbartFpc && loaded.data.n() < config.J)
    throw ValidationError(
        "fbart-fpc needs n >= J: the FPC basis rank is limited by the " +
        std::to_string(loaded.data.n()) + " observations");

  ensure_output_dir(out, force);
  BasisSystem basis = build_basis(loaded.data.grid, config.K);
  FitResult fit = run_chain(loaded.data, basis, config);
  write_fit(out, fit);
  std::cout << "wrote " << fit.draws.size() << " retained draws to " << out << "\n";
  return 0;
}

Matrix average_by_rows(const FunctionalDataset& data, const std::string& column,
                       std::vector<int>& levels_out) {
  int col = -1;
  for (int j = 0; j < data.p(); ++j)
    if (data.schema[static_cast<std::size_t>(j)].name == column) col = j;
  if (col < 0) throw ValidationError("no covariate column named " + column);
  if (data.schema[static_cast<std::size_t>(col)].kind != CovariateKind::Categorical)
    throw ValidationError("--average-by needs a categorical column");

  std::vector<int> levels;
  for (int i = 0; i < data.n(); ++i) {
    int code = static_cast<int>(data.x(i, col));
    if (std::find(levels.begin(), levels.end(), code) == levels.end())
      levels.push_back(code);
  }
  Matrix rows = Matrix::Zero(static_cast<int>(levels.size()), data.p());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::map<int, int> mode_count;
    int group = 0;
    for (int i = 0; i < data.n(); ++i) {
      if (static_cast<int>(data.x(i, col)) != levels[l]) continue;
      ++group;
      for (int j = 0; j < data.p(); ++j) {
        if (data.schema[static_cast<std::size_t>(j)].kind == CovariateKind::Continuous)
          rows(static_cast<int>(l), j) += data.x(i, j);
        else if (j != col)
          ++mode_count[static_cast<int>(data.x(i, j)) * (data.p() + 1) + j];
      }
    }
    for (int j = 0; j < data.p(); ++j) {
      if (data.schema[static_cast<std::size_t>(j)].kind == CovariateKind::Continuous)
        rows(static_cast<int>(l), j) /= group;
      else if (j == col)
        rows(static_cast<int>(l), j) = levels[l];
      else {
        // most frequent code within the group
        int best = 0, best_count = -1;
        for (const auto& [key, cnt] : mode_count)
          if (key % (data.p() + 1) == j && cnt > best_count) {
            best_count = cnt;
            best = key / (data.p() + 1);
          }
        rows(static_cast<int>(l), j) = best;
      }
    }
  }
  levels_out = levels;
  return rows;
}

int cmd_predict(const std::string& fit_dir, const std::string& data_dir,
                const std::string& average_by, const std::string& out, bool force) {
  FitResult fit = read_fit(fit_dir);
  LoadedDataset loaded = read_dataset(data_dir);

  Matrix x_new = loaded.data.x;
  std::vector<int> levels;
  if (!average_by.empty()) x_new = average_by_rows(loaded.data, average_by, levels);

  PredictionResult pred = predict(fit, x_new);
  ensure_output_dir(out, force);
  write_matrix_csv(fs::path(out) / "mean.csv", pred.mean);
  write_matrix_csv(fs::path(out) / "lower.csv", pred.lower);
  write_matrix_csv(fs::path(out) / "upper.csv", pred.upper);
  write_matrix_csv(fs::path(out) / "x.csv", x_new);
  if (!levels.empty()) {
    json j;
    j["average_by"] = average_by;
    j["levels"] = levels;
    std::ofstream meta(fs::path(out) / "rows.json");
    meta << j.dump(2) << "\n";
  }
  std::cout << "wrote predictions for " << x_new.rows() << " rows to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& fit_dir, const std::string& test_dir,
                 const std::string& out) {
  FitResult fit = read_fit(fit_dir);
  LoadedDataset test = read_dataset(test_dir);
  if (!test.truth)
    throw ValidationError(
        "test set has no xi.csv: the metrics need the true mean surfaces");

  PredictionResult pred = predict(fit, test.data.x);
  json results;
  results["rmspe"] = rmspe(*test.truth, pred.mean);
  results["mis"] = mis(*test.truth, pred.lower, pred.upper);
  results["mcrps"] = mcrps(*test.truth, pred.draws);
  results["n_star"] = test.data.n();
  results["m"] = test.data.m();
  results["draws"] = fit.draws.size();

  fs::create_directories(fs::path(out).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out).parent_path());
  std::ofstream os(out);
  os << results.dump(2) << "\n";
  std::cout << results.dump(2) << "\n";
  return 0;
}

int cmd_benchmark(const std::string& cases_str, const std::string& sigmas_str,
                  int replicates, const std::string& methods_str,
                  const std::string& config_path, std::int64_t seed,
                  const std::string& out, bool force, int cv_folds,
                  const std::string& data_dir, int n_train, int n_test, int grid) {
  ModelConfig config = load_config(config_path, "", "", -1);

  if (cv_folds > 0) {
    if (data_dir.empty())
      throw ValidationError("--cv needs --data with a user dataset");
    LoadedDataset loaded = read_dataset(data_dir);
    config.seed = static_cast<std::uint64_t>(seed < 0 ? 0 : seed);
    CvResult cv = cross_validate(loaded.data, cv_folds, config);
    json j;
    j["folds"] = cv_folds;
    j["fold_rmspe"] = cv.fold_rmspe;
    j["fold_mcrps"] = cv.fold_mcrps;
    j["mean_rmspe"] = cv.mean_rmspe;
    j["mean_mcrps"] = cv.mean_mcrps;
    ensure_output_dir(out, force);
    std::ofstream os(fs::path(out) / "cv.json");
    os << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  BenchmarkSpec spec;
  spec.config = config;
  spec.replicates = replicates;
  spec.base_seed = static_cast<std::uint64_t>(seed < 0 ? 0 : seed);
  spec.sim.n_train = n_train;
  spec.sim.n_test = n_test;
  spec.sim.grid = grid;

  std::vector<int> cases;
  for (auto& tok : CLI::detail::split(cases_str, ','))
    cases.push_back(std::stoi(tok));
  std::vector<double> sigmas;
  for (auto& tok : CLI::detail::split(sigmas_str, ','))
    sigmas.push_back(std::stod(tok));
  for (int c : cases)
    for (double s : sigmas) spec.settings.emplace_back(c, s);
  spec.methods.clear();
  for (auto& tok : CLI::detail::split(methods_str, ','))
    spec.methods.push_back(fit_mode_from_string(tok));

  ensure_output_dir(out, force);
  // the cells already run concurrently; keep each chain's kernels serial
  if (benchmark_threads() > 1) kernels::set_threads(1);
  std::vector<BenchmarkRow> rows = run_benchmark(spec, benchmark_threads());
  write_benchmark_csv(fs::path(out) / "rows.csv", rows);
  write_benchmark_aggregate(fs::path(out) / "aggregate.csv", rows);
  int failures = 0;
  for (const auto& r : rows) failures += r.failed ? 1 : 0;
  std::cout << "benchmark complete: " << rows.size() << " cells, " << failures
            << " failures; results in " << out << "\n";
  return 0;
}

int cmd_importance(const std::string& fit_dir, const std::string& out, bool force) {
  FitResult fit = read_fit(fit_dir);
  ImportanceResult imp = variable_importance(fit);

  std::vector<std::pair<std::string, double>> sorted;
  for (int j = 0; j < imp.per_source.size(); ++j)
    sorted.emplace_back(imp.source_names[static_cast<std::size_t>(j)],
                        imp.per_source(j));
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  ensure_output_dir(out, force);
  json j;
  for (const auto& [name, value] : sorted)
    j["proportions"].push_back({{"name", name}, {"value", value}});
  std::vector<double> enc(imp.per_encoded.data(),
                          imp.per_encoded.data() + imp.per_encoded.size());
  j["per_encoded_column"] = enc;
  std::ofstream os(fs::path(out) / "importance.json");
  os << j.dump(2) << "\n";

  std::ofstream csv(fs::path(out) / "importance.csv");
  csv << "covariate,proportion\n";
  for (const auto& [name, value] : sorted)
    csv << name << "," << format_double(value) << "\n";
  std::cout << "wrote importance for " << sorted.size() << " covariates to " << out
            << "\n";
  return 0;
}

int cmd_heatmap(const std::string& values_path, int rows, int cols,
                const std::string& out, bool use_exp, bool force) {
  Matrix mat = read_matrix_csv(values_path);
  std::vector<double> values;
  for (int i = 0; i < mat.rows(); ++i)
    for (int j = 0; j < mat.cols(); ++j) values.push_back(mat(i, j));
  if (static_cast<int>(values.size()) != rows * cols)
    throw ValidationError("rows*cols does not match value count in " + values_path);
  if (use_exp)
    for (double& v : values) v = std::exp(v);

  ensure_output_dir(out, force);
  write_pgm(fs::path(out) / "heatmap.pgm", values, rows, cols);
  write_surface_csv(fs::path(out) / "surface.csv", values, rows, cols);
  std::cout << "wrote " << out << "/heatmap.pgm and surface.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive functional BART for gridded surface responses"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a simulation dataset");
  int sim_case = 1, n_train = 100, n_test = 200, grid = 15;
  double sigma = 0.1;
  std::int64_t seed = 0;
  std::string out;
  bool force = false;
  sim->add_option("--case", sim_case, "Simulation case")->check(CLI::Range(1, 3));
  sim->add_option("--n-train", n_train, "Training set size");
  sim->add_option("--n-test", n_test, "Test set size");
  sim->add_option("--grid", grid, "Grid resolution G (M = G*G)");
  sim->add_option("--sigma", sigma, "Noise standard deviation");
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out, "Output directory")->required();
  sim->add_flag("--force", force, "Overwrite a non-empty output directory");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a dataset");
  std::string data_dir, config_path, preset, mode, fit_out;
  std::int64_t fit_seed = -1;
  bool fit_force = false;
  fit_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  fit_cmd->add_option("--config", config_path, "Config JSON (see docs/config.md)");
  fit_cmd->add_option("--preset", preset, "desk (default) or real")
      ->check(CLI::IsMember({"desk", "real"}));
  fit_cmd->add_option("--mode", mode, "afbart | fbart-tps | fbart-fpc");
  fit_cmd->add_option("--seed", fit_seed, "Seed override");
  fit_cmd->add_option("--out", fit_out, "Fit output directory")->required();
  fit_cmd->add_flag("--force", fit_force, "Overwrite a non-empty output directory");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "Predict surfaces for covariates");
  std::string pred_fit, pred_data, average_by, pred_out;
  bool pred_force = false;
  pred_cmd->add_option("--fit", pred_fit, "Fit directory")->required();
  pred_cmd->add_option("--data", pred_data, "Dataset directory with covariates")
      ->required();
  pred_cmd->add_option("--average-by", average_by,
                       "Predict one synthetic row per level of this "
                       "categorical column, other covariates averaged");
  pred_cmd->add_option("--out", pred_out, "Output directory")->required();
  pred_cmd->add_flag("--force", pred_force, "Overwrite a non-empty output directory");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a fit against test truth");
  std::string eval_fit, eval_test, eval_out = "results.json";
  eval_cmd->add_option("--fit", eval_fit, "Fit directory")->required();
  eval_cmd->add_option("--test", eval_test, "Test dataset directory (needs xi.csv)")
      ->required();
  eval_cmd->add_option("--out", eval_out, "Output results.json path");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Replicated simulation benchmark");
  std::string cases_str = "1", sigmas_str = "0.1", methods_str = "afbart";
  std::string bench_config, bench_out, bench_data;
  int replicates = 1, cv_folds = 0, bench_n_train = 100, bench_n_test = 200,
      bench_grid = 15;
  std::int64_t bench_seed = 0;
  bool bench_force = false;
  bench_cmd->add_option("--cases", cases_str, "Comma-separated case list");
  bench_cmd->add_option("--sigmas", sigmas_str, "Comma-separated noise levels");
  bench_cmd->add_option("--replicates", replicates, "Replicates per setting");
  bench_cmd->add_option("--methods", methods_str, "Comma-separated method list");
  bench_cmd->add_option("--config", bench_config, "Config JSON for every fit");
  bench_cmd->add_option("--seed", bench_seed, "Base seed");
  bench_cmd->add_option("--n-train", bench_n_train, "Training set size");
  bench_cmd->add_option("--n-test", bench_n_test, "Test set size");
  bench_cmd->add_option("--grid", bench_grid, "Grid resolution");
  bench_cmd->add_option("--cv", cv_folds, "k-fold cross-validation on --data");
  bench_cmd->add_option("--data", bench_data, "User dataset for --cv mode");
  bench_cmd->add_option("--out", bench_out, "Output directory")->required();
  bench_cmd->add_flag("--force", bench_force, "Overwrite a non-empty output directory");

  // importance
  auto* imp_cmd = app.add_subcommand("importance", "Posterior splitting proportions");
  std::string imp_fit, imp_out;
  bool imp_force = false;
  imp_cmd->add_option("--fit", imp_fit, "Fit directory")->required();
  imp_cmd->add_option("--out", imp_out, "Output directory")->required();
  imp_cmd->add_flag("--force", imp_force, "Overwrite a non-empty output directory");

  // heatmap
  auto* heat_cmd = app.add_subcommand("heatmap", "Render a surface as PGM + CSV");
  std::string heat_values, heat_out;
  int heat_rows = 0, heat_cols = 0;
  bool heat_exp = false, heat_force = false;
  heat_cmd->add_option("--grid-values", heat_values, "CSV of surface values")
      ->required();
  heat_cmd->add_option("--rows", heat_rows, "Raster rows")->required();
  heat_cmd->add_option("--cols", heat_cols, "Raster columns")->required();
  heat_cmd->add_flag("--exp", heat_exp, "Exponentiate log-intensity first");
  heat_cmd->add_option("--out", heat_out, "Output directory")->required();
  heat_cmd->add_flag("--force", heat_force, "Overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
    if (sim->parsed())
      return cmd_simulate(sim_case, n_train, n_test, grid, sigma, seed, out, force);
    if (fit_cmd->parsed())
      return cmd_fit(data_dir, config_path, preset, mode, fit_seed, fit_out,
                     fit_force);
    if (pred_cmd->parsed())
      return cmd_predict(pred_fit, pred_data, average_by, pred_out, pred_force);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_fit, eval_test, eval_out);
    if (bench_cmd->parsed())
      return cmd_benchmark(cases_str, sigmas_str, replicates, methods_str,
                           bench_config, bench_seed, bench_out, bench_force,
                           cv_folds, bench_data, bench_n_train, bench_n_test,
                           bench_grid);
    if (imp_cmd->parsed()) return cmd_importance(imp_fit, imp_out, imp_force);
    if (heat_cmd->parsed())
      return cmd_heatmap(heat_values, heat_rows, heat_cols, heat_out, heat_exp,
                         heat_force);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
