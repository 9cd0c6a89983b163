#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "afbart/dataset_io.hpp"
#include "afbart/fit_io.hpp"
#include "afbart/simgen.hpp"
#include "afbart/tps_basis.hpp"

using namespace afbart;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("afbart_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("seventeen significant digits survive a round trip") {
  std::mt19937_64 gen(55);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 200; ++rep) {
    double v = nd(gen) * std::pow(10.0, (rep % 13) - 6);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.0) == "0");
}

TEST_CASE("matrix csv round trip") {
  TempDir tmp;
  std::mt19937_64 gen(66);
  std::normal_distribution<double> nd;
  Matrix mat(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) mat(i, j) = nd(gen);
  write_matrix_csv(tmp.path / "m.csv", mat, {"a", "b", "c"});
  Matrix back = read_matrix_csv(tmp.path / "m.csv", true);
  CHECK(back == mat);
  CHECK_THROWS_AS(read_matrix_csv(tmp.path / "missing.csv"), ValidationError);
}

TEST_CASE("dataset directory round trip with truth") {
  TempDir tmp;
  SimSpec spec;
  spec.sim_case = 1;
  spec.n_train = 8;
  spec.n_test = 3;
  spec.grid = 4;
  spec.seed = 2;
  SimulatedData data = generate(spec);

  write_dataset(tmp.path / "d", data.test, data.test_truth);
  LoadedDataset back = read_dataset(tmp.path / "d");
  CHECK(back.data.z == data.test.z);
  CHECK(back.data.x == data.test.x);
  CHECK(back.data.grid.points == data.test.grid.points);
  REQUIRE(back.truth.has_value());
  CHECK(*back.truth == data.test_truth);
  CHECK(back.data.schema[0].name == "x1");
}

TEST_CASE("grid reordering permutes truth columns consistently") {
  TempDir tmp;
  SimSpec spec;
  spec.n_train = 5;
  spec.n_test = 2;
  spec.grid = 3;
  spec.seed = 8;
  SimulatedData data = generate(spec);

  // write a scrambled copy of the same dataset
  FunctionalDataset scrambled = data.test;
  Matrix truth = data.test_truth;
  std::vector<int> perm{4, 0, 7, 2, 8, 1, 5, 3, 6};
  for (int k = 0; k < 9; ++k) {
    scrambled.grid.points.row(k) = data.test.grid.points.row(perm[k]);
    scrambled.z.col(k) = data.test.z.col(perm[k]);
    truth.col(k) = data.test_truth.col(perm[k]);
  }
  write_dataset(tmp.path / "d", scrambled, truth);
  LoadedDataset back = read_dataset(tmp.path / "d");
  CHECK(back.data.grid.points == data.test.grid.points);
  CHECK(back.data.z == data.test.z);
  CHECK(*back.truth == data.test_truth);
}

TEST_CASE("config json round trip") {
  ModelConfig config;
  config.J = 4;
  config.K = 11;
  config.mode = FitMode::FbartFpc;
  config.seed = 99;
  config.thin = 2;
  ModelConfig back = config_from_json(config_to_json(config));
  CHECK(back.J == 4);
  CHECK(back.K == 11);
  CHECK(back.mode == FitMode::FbartFpc);
  CHECK(back.seed == 99);
  CHECK(back.thin == 2);
  CHECK(back.T == config.T);
  CHECK(back.a == config.a);
}

TEST_CASE("fit directory round trip reproduces predictions") {
  TempDir tmp;
  SimSpec spec;
  spec.sim_case = 2;
  spec.n_train = 15;
  spec.n_test = 4;
  spec.grid = 5;
  spec.seed = 31;
  SimulatedData data = generate(spec);

  ModelConfig config;
  config.T = 5;
  config.J = 2;
  config.K = 8;
  config.n_mcmc = 12;
  config.burn_in = 8;
  config.thin = 2;
  BasisSystem basis = build_basis(data.train.grid, config.K);
  FitResult fit = run_chain(data.train, basis, config);
  REQUIRE(fit.draws.size() == 2);

  write_fit(tmp.path / "fit", fit);
  FitResult back = read_fit(tmp.path / "fit");
  REQUIRE(back.draws.size() == fit.draws.size());
  CHECK(back.config.J == config.J);
  CHECK(back.basis.b_matrix == fit.basis.b_matrix);
  for (std::size_t d = 0; d < fit.draws.size(); ++d) {
    CHECK(back.draws[d].psi == fit.draws[d].psi);
    CHECK(back.draws[d].sigma2 == fit.draws[d].sigma2);
    CHECK(back.draws[d].lambda_j == fit.draws[d].lambda_j);
  }

  PredictionResult p1 = predict(fit, data.test.x);
  PredictionResult p2 = predict(back, data.test.x);
  CHECK(p1.mean == p2.mean);
  CHECK(p1.lower == p2.lower);
  CHECK(p1.upper == p2.upper);
}
