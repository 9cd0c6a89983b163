#include "afbart/fit_io.hpp"

#include <fstream>

#include "afbart/dataset_io.hpp"

namespace afbart {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"T", c.T},
              {"J", c.J},
              {"K", c.K},
              {"n_mcmc", c.n_mcmc},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"a", c.a},
              {"gamma", c.gamma},
              {"nu", c.nu},
              {"sigma_quantile", c.sigma_quantile},
              {"k_shrink", c.k_shrink},
              {"mode", to_string(c.mode)},
              {"seed", c.seed},
              {"n_cutpoints", c.n_cutpoints},
              {"greedy_init", c.greedy_init}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.T = j.value("T", c.T);
  c.J = j.value("J", c.J);
  c.K = j.value("K", c.K);
  c.n_mcmc = j.value("n_mcmc", c.n_mcmc);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.thin = j.value("thin", c.thin);
  c.a = j.value("a", c.a);
  c.gamma = j.value("gamma", c.gamma);
  c.nu = j.value("nu", c.nu);
  c.sigma_quantile = j.value("sigma_quantile", c.sigma_quantile);
  c.k_shrink = j.value("k_shrink", c.k_shrink);
  if (j.contains("mode")) c.mode = fit_mode_from_string(j.at("mode").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.n_cutpoints = j.value("n_cutpoints", c.n_cutpoints);
  c.greedy_init = j.value("greedy_init", c.greedy_init);
  c.validate();
  return c;
}

namespace {

json matrix_to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& flat = j.at("data");
  std::size_t idx = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = flat[idx++].get<double>();
  return m;
}

}  // namespace

void write_fit(const fs::path& dir, const FitResult& fit) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    out << config_to_json(fit.config).dump(2) << "\n";
  }
  write_matrix_csv(dir / "basis.csv", fit.basis.b_matrix);
  write_matrix_csv(dir / "penalty.csv", fit.basis.penalty);
  write_matrix_csv(dir / "grid.csv", fit.basis.knots.knots);

  json enc;
  for (const auto& s : fit.schema)
    enc["schema"].push_back(
        {{"name", s.name},
         {"kind", s.kind == CovariateKind::Continuous ? "continuous" : "categorical"}});
  for (const auto& c : fit.columns)
    enc["columns"].push_back({{"source", c.source},
                              {"indicator", c.indicator},
                              {"level", c.level},
                              {"name", c.name}});
  {
    std::ofstream out(dir / "encoding.json");
    out << enc.dump(2) << "\n";
  }

  std::ofstream draws(dir / "draws.jsonl");
  for (const Draw& d : fit.draws) {
    json j;
    j["psi"] = matrix_to_json(d.psi);
    j["sigma2"] = d.sigma2;
    j["lambda"] = std::vector<double>(d.lambda_j.data(),
                                      d.lambda_j.data() + d.lambda_j.size());
    for (const auto& [tree, params] : d.ensemble.trees)
      j["trees"].push_back(
          {{"topology", tree_to_json(tree)}, {"mu", matrix_to_json(params.mu)}});
    draws << j.dump() << "\n";
  }
}

FitResult read_fit(const fs::path& dir) {
  FitResult fit;
  {
    std::ifstream in(dir / "config.json");
    if (!in) throw ValidationError("not a fit directory: " + dir.string());
    fit.config = config_from_json(json::parse(in));
  }
  fit.basis.b_matrix = read_matrix_csv(dir / "basis.csv");
  fit.basis.penalty = read_matrix_csv(dir / "penalty.csv");
  fit.basis.knots.knots = read_matrix_csv(dir / "grid.csv");

  std::ifstream enc_in(dir / "encoding.json");
  json enc = json::parse(enc_in);
  for (const auto& s : enc.at("schema"))
    fit.schema.push_back({s.at("name").get<std::string>(),
                          s.at("kind").get<std::string>() == "categorical"
                              ? CovariateKind::Categorical
                              : CovariateKind::Continuous});
  for (const auto& c : enc.at("columns"))
    fit.columns.push_back({c.at("source").get<int>(), c.at("indicator").get<bool>(),
                           c.at("level").get<int>(), c.at("name").get<std::string>()});

  std::ifstream draws(dir / "draws.jsonl");
  std::string line;
  while (std::getline(draws, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Draw d;
    d.psi = matrix_from_json(j.at("psi"));
    d.sigma2 = j.at("sigma2").get<double>();
    auto lambda = j.at("lambda").get<std::vector<double>>();
    d.lambda_j = Eigen::Map<Vector>(lambda.data(), static_cast<int>(lambda.size()));
    for (const auto& tj : j.at("trees"))
      d.ensemble.trees.emplace_back(tree_from_json(tj.at("topology")),
                                    NodeParams{matrix_from_json(tj.at("mu"))});
    fit.draws.push_back(std::move(d));
  }
  return fit;
}

}  // namespace afbart
