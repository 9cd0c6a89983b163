#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "afbart/heatmap.hpp"

using namespace afbart;
namespace fs = std::filesystem;

TEST_CASE("min-max normalization to bytes") {
  auto bytes = to_pgm_bytes({0.0, 1.0, 2.0, 3.0});
  CHECK(bytes == std::vector<std::uint8_t>{0, 85, 170, 255});
  // constant surfaces map to 0 under the zero-range guard
  CHECK(to_pgm_bytes({7.0, 7.0, 7.0}) == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("pgm file layout") {
  fs::path path = fs::temp_directory_path() /
                  ("afbart_pgm_" + std::to_string(std::random_device{}()) + ".pgm");
  write_pgm(path, {0.0, 1.0, 2.0, 3.0}, 2, 2);

  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(contents.size() == header.size() + 4);
  CHECK(contents.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(contents[header.size() + 0]) == 0);
  CHECK(static_cast<unsigned char>(contents[header.size() + 1]) == 85);
  CHECK(static_cast<unsigned char>(contents[header.size() + 2]) == 170);
  CHECK(static_cast<unsigned char>(contents[header.size() + 3]) == 255);
  fs::remove(path);

  CHECK_THROWS_AS(write_pgm(path, {1.0, 2.0}, 2, 2), ValidationError);
}

TEST_CASE("surface csv companion") {
  fs::path path = fs::temp_directory_path() /
                  ("afbart_surf_" + std::to_string(std::random_device{}()) + ".csv");
  write_surface_csv(path, {0.5, 1.5, 2.5, 3.5, 4.5, 5.5}, 2, 3);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "0.5,1.5,2.5");
  std::getline(in, line);
  CHECK(line == "3.5,4.5,5.5");
  fs::remove(path);
}
