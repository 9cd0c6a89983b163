#include <doctest.h>

#include <cmath>
#include <random>

#include "afbart/metrics.hpp"

using namespace afbart;

TEST_CASE("rmspe hand example") {
  Matrix truth(1, 2), pred(1, 2);
  truth << 0, 0;
  pred << 3, 4;
  CHECK(rmspe(truth, pred) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK(rmspe(truth, truth) == 0.0);
  Matrix wrong(2, 2);
  CHECK_THROWS_AS(rmspe(truth, wrong), ValidationError);
}

TEST_CASE("interval score hand example") {
  Matrix truth(1, 1), lower(1, 1), upper(1, 1);
  truth << 1.5;
  lower << 0;
  upper << 1;
  CHECK(mis(truth, lower, upper) == doctest::Approx(21.0).epsilon(1e-12));
  truth << 0.5;  // inside: width only
  CHECK(mis(truth, lower, upper) == doctest::Approx(1.0).epsilon(1e-12));
  truth << -0.25;  // below: width + 40 * 0.25
  CHECK(mis(truth, lower, upper) == doctest::Approx(11.0).epsilon(1e-12));
  lower << 2;
  CHECK_THROWS_AS(mis(truth, lower, upper), ValidationError);
}

TEST_CASE("two-draw CRPS hand example") {
  CHECK(crps_sorted({0.0, 1.0}, 0.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(crps_naive({0.0, 1.0}, 0.0) == doctest::Approx(0.25).epsilon(1e-12));
  // a point mass at the truth scores zero
  CHECK(crps_sorted({2.0, 2.0, 2.0}, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sorted identity equals the quadratic oracle") {
  std::mt19937_64 gen(314);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> size(2, 40);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> samples(static_cast<std::size_t>(size(gen)));
    for (double& v : samples) v = 3.0 * nd(gen);
    double truth = 3.0 * nd(gen);
    CHECK(crps_sorted(samples, truth) ==
          doctest::Approx(crps_naive(samples, truth)).epsilon(1e-12));
  }
}

TEST_CASE("mcrps averages cells") {
  Matrix truth(1, 2);
  truth << 0, 0;
  Matrix d1(1, 2), d2(1, 2);
  d1 << 0, 1;
  d2 << 1, 0;
  // each cell has draws {0, 1} against truth 0
  CHECK(mcrps(truth, {d1, d2}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(mcrps(truth, {d1}), ValidationError);
}
