#include "afbart/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace afbart {

double rmspe(const Matrix& truth, const Matrix& pred_mean) {
  if (truth.size() == 0) throw ValidationError("empty input to rmspe");
  if (truth.rows() != pred_mean.rows() || truth.cols() != pred_mean.cols())
    throw ValidationError("shape mismatch in rmspe");
  return std::sqrt((truth - pred_mean).squaredNorm() /
                   static_cast<double>(truth.size()));
}

double mis(const Matrix& truth, const Matrix& lower, const Matrix& upper,
           double alpha) {
  if (truth.size() == 0) throw ValidationError("empty input to mis");
  const double penalty = 2.0 / alpha;
  double total = 0.0;
  for (int i = 0; i < truth.rows(); ++i)
    for (int m = 0; m < truth.cols(); ++m) {
      const double l = lower(i, m), u = upper(i, m), y = truth(i, m);
      if (l > u) throw ValidationError("interval with lower > upper");
      double dist = 0.0;
      if (y < l) dist = l - y;
      else if (y > u) dist = y - u;
      total += (u - l) + penalty * dist;
    }
  return total / static_cast<double>(truth.size());
}

double crps_sorted(std::vector<double> samples, double truth) {
  const auto s = static_cast<double>(samples.size());
  std::sort(samples.begin(), samples.end());
  double abs_term = 0.0, pair_term = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    abs_term += std::abs(samples[i] - truth);
    // sum over ordered pairs of |x_i - x_j| via rank weights
    pair_term += (2.0 * static_cast<double>(i) - s + 1.0) * samples[i];
  }
  return abs_term / s - pair_term / (s * s);
}

double crps_naive(const std::vector<double>& samples, double truth) {
  const auto s = static_cast<double>(samples.size());
  double abs_term = 0.0, pair_term = 0.0;
  for (double a : samples) {
    abs_term += std::abs(a - truth);
    for (double b : samples) pair_term += std::abs(a - b);
  }
  return abs_term / s - pair_term / (2.0 * s * s);
}

double mcrps(const Matrix& truth, const std::vector<Matrix>& samples) {
  if (samples.size() < 2)
    throw ValidationError("mcrps needs at least 2 draws per cell");
  std::vector<double> cell(samples.size());
  double total = 0.0;
  for (int i = 0; i < truth.rows(); ++i)
    for (int m = 0; m < truth.cols(); ++m) {
      for (std::size_t d = 0; d < samples.size(); ++d) cell[d] = samples[d](i, m);
      total += crps_sorted(cell, truth(i, m));
    }
  return total / static_cast<double>(truth.size());
}

}  // namespace afbart
