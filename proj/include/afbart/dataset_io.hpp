#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "afbart/types.hpp"

namespace afbart {

// Dataset directory layout: points.csv (s1,s2 header), z.csv (no header),
// x.csv (named header), meta.json; optional xi.csv with true mean surfaces.
// All numerics are written with 17 significant digits.

void write_matrix_csv(const std::filesystem::path& path, const Matrix& mat,
                      const std::vector<std::string>& header = {});
Matrix read_matrix_csv(const std::filesystem::path& path, bool has_header = false);

void write_dataset(const std::filesystem::path& dir, const FunctionalDataset& data,
                   const std::optional<Matrix>& truth = std::nullopt);

struct LoadedDataset {
  FunctionalDataset data;
  std::optional<Matrix> truth;
};

LoadedDataset read_dataset(const std::filesystem::path& dir);

std::string format_double(double v);

}  // namespace afbart
