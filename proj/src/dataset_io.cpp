#include "afbart/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace afbart {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix_csv(const fs::path& path, const Matrix& mat,
                      const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      out << (i ? "," : "") << header[i];
    out << "\n";
  }
  for (int i = 0; i < mat.rows(); ++i) {
    for (int j = 0; j < mat.cols(); ++j)
      out << (j ? "," : "") << format_double(mat(i, j));
    out << "\n";
  }
}

Matrix read_matrix_csv(const fs::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (has_header) std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError("ragged CSV rows in " + path.string());
    rows.push_back(std::move(row));
  }
  Matrix mat(static_cast<int>(rows.size()),
             rows.empty() ? 0 : static_cast<int>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      mat(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return mat;
}

void write_dataset(const fs::path& dir, const FunctionalDataset& data,
                   const std::optional<Matrix>& truth) {
  fs::create_directories(dir);
  write_matrix_csv(dir / "points.csv", data.grid.points, {"s1", "s2"});
  write_matrix_csv(dir / "z.csv", data.z);
  std::vector<std::string> names;
  for (const auto& s : data.schema) names.push_back(s.name);
  write_matrix_csv(dir / "x.csv", data.x, names);

  json meta;
  meta["names"] = names;
  std::vector<std::string> kinds;
  for (const auto& s : data.schema)
    kinds.push_back(s.kind == CovariateKind::Continuous ? "continuous" : "categorical");
  meta["kinds"] = kinds;
  if (truth) {
    write_matrix_csv(dir / "xi.csv", *truth);
    meta["xi.csv"] = "xi.csv";
  }
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

LoadedDataset read_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "meta.json"))
    throw ValidationError("not a dataset directory: " + dir.string());
  std::ifstream meta_in(dir / "meta.json");
  json meta = json::parse(meta_in);

  FunctionalDataset raw;
  raw.grid.points = read_matrix_csv(dir / "points.csv", true);
  raw.z = read_matrix_csv(dir / "z.csv");
  raw.x = read_matrix_csv(dir / "x.csv", true);
  auto names = meta.at("names").get<std::vector<std::string>>();
  auto kinds = meta.at("kinds").get<std::vector<std::string>>();
  if (names.size() != kinds.size())
    throw ValidationError("meta.json names/kinds length mismatch");
  for (std::size_t i = 0; i < names.size(); ++i)
    raw.schema.push_back({names[i], kinds[i] == "categorical"
                                        ? CovariateKind::Categorical
                                        : CovariateKind::Continuous});

  LoadedDataset out;
  std::vector<int> order;
  out.data = validate_dataset(raw, &order);
  if (meta.contains("xi.csv")) {
    Matrix truth_raw = read_matrix_csv(dir / meta.at("xi.csv").get<std::string>());
    if (truth_raw.cols() != static_cast<int>(order.size()))
      throw ValidationError("xi.csv column count does not match the grid");
    Matrix truth(truth_raw.rows(), truth_raw.cols());
    for (std::size_t k = 0; k < order.size(); ++k)
      truth.col(static_cast<int>(k)) = truth_raw.col(order[k]);
    out.truth = truth;
  }
  return out;
}

}  // namespace afbart
