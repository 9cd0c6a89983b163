#include "afbart/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "afbart/dataset_io.hpp"

namespace afbart {

std::vector<std::uint8_t> to_pgm_bytes(const std::vector<double>& values) {
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<std::uint8_t> bytes(values.size(), 0);
  if (hi <= lo) return bytes;  // zero-range guard
  for (std::size_t i = 0; i < values.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(
        std::lround(255.0 * (values[i] - lo) / (hi - lo)));
  return bytes;
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& values,
               int rows, int cols) {
  if (static_cast<int>(values.size()) != rows * cols)
    throw ValidationError("rows*cols does not match value count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string());
  out << "P5\n" << cols << " " << rows << "\n255\n";
  auto bytes = to_pgm_bytes(values);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void write_surface_csv(const std::filesystem::path& path,
                       const std::vector<double>& values, int rows, int cols) {
  if (static_cast<int>(values.size()) != rows * cols)
    throw ValidationError("rows*cols does not match value count");
  Matrix mat(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      mat(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  write_matrix_csv(path, mat);
}

}  // namespace afbart
