#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afbart/types.hpp"

namespace afbart {

// Min-max normalizes row-major values to 8-bit; constant surfaces map to 0.
std::vector<std::uint8_t> to_pgm_bytes(const std::vector<double>& values);

// Binary PGM (P5) with header "P5\n<cols> <rows>\n255\n".
void write_pgm(const std::filesystem::path& path, const std::vector<double>& values,
               int rows, int cols);

// surface.csv companion: rows x cols grid of raw values.
void write_surface_csv(const std::filesystem::path& path,
                       const std::vector<double>& values, int rows, int cols);

}  // namespace afbart
