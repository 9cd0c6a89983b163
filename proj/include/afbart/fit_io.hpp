#pragma once

#include <filesystem>

#include "afbart/sampler.hpp"

namespace afbart {

// Fit directory layout: config.json, basis.csv (B), penalty.csv (Omega),
// encoding.json (schema + column map), draws.jsonl (one retained draw per
// line: psi row-major, serialized trees, sigma^2, lambda vector).
void write_fit(const std::filesystem::path& dir, const FitResult& fit);
FitResult read_fit(const std::filesystem::path& dir);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace afbart
