#pragma once

#include <vector>

#include "afbart/types.hpp"

namespace afbart {

// Root mean squared prediction error with 1/(M n*) normalization.
double rmspe(const Matrix& truth, const Matrix& pred_mean);

// Mean negatively oriented interval score: width plus (2/alpha) times the
// distance from truth to the interval, averaged over cells.
double mis(const Matrix& truth, const Matrix& lower, const Matrix& upper,
           double alpha = 0.05);

// Mean CRPS of the empirical predictive distribution given per-draw
// surfaces, via the sorted-sample O(S log S) identity.
double mcrps(const Matrix& truth, const std::vector<Matrix>& samples);

// Empirical CRPS of one sample set against a scalar; sorted identity.
double crps_sorted(std::vector<double> samples, double truth);
// Naive O(S^2) double-sum CRPS, kept as the oracle for the sorted identity.
double crps_naive(const std::vector<double>& samples, double truth);

}  // namespace afbart
