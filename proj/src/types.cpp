#include "afbart/types.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace afbart {

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::Afbart: return "afbart";
    case FitMode::FbartTps: return "fbart-tps";
    case FitMode::FbartFpc: return "fbart-fpc";
  }
  return "afbart";
}

FitMode fit_mode_from_string(const std::string& s) {
  if (s == "afbart") return FitMode::Afbart;
  if (s == "fbart-tps") return FitMode::FbartTps;
  if (s == "fbart-fpc") return FitMode::FbartFpc;
  throw ValidationError("unknown mode: " + s);
}

void ModelConfig::validate() const {
  if (T < 1) throw ValidationError("T must be >= 1");
  if (J < 1 || J > K) throw ValidationError("need 1 <= J <= K");
  if (a <= 0.0 || a > 1.0) throw ValidationError("a must be in (0,1]");
  if (gamma <= 0.0 || gamma >= 1.0) throw ValidationError("gamma must be in (0,1)");
  if (nu < 1.0) throw ValidationError("nu must be >= 1");
  if (sigma_quantile <= 0.0 || sigma_quantile >= 1.0)
    throw ValidationError("sigma_quantile must be in (0,1)");
  if (thin < 1) throw ValidationError("thin must be >= 1");
  if (burn_in >= n_mcmc) throw ValidationError("burn_in must be < n_mcmc");
  if (n_cutpoints < 1) throw ValidationError("n_cutpoints must be >= 1");
}

namespace {

void check_finite(const Matrix& mat, const std::string& name) {
  for (int i = 0; i < mat.rows(); ++i)
    for (int j = 0; j < mat.cols(); ++j)
      if (!std::isfinite(mat(i, j))) {
        std::ostringstream os;
        os << "non-finite value in " << name << " at (" << i << ", " << j << ")";
        throw ValidationError(os.str());
      }
}

}  // namespace

FunctionalDataset validate_dataset(const FunctionalDataset& raw,
                                   std::vector<int>* grid_order) {
  const int m = raw.grid.size();
  if (m < 1) throw ValidationError("grid must contain at least one point");
  if (raw.grid.points.cols() != 2)
    throw ValidationError("grid points must be coordinate pairs");
  check_finite(raw.grid.points, "grid points");

  const int n = static_cast<int>(raw.z.rows());
  if (n < 1) throw ValidationError("dataset must contain at least one observation");
  if (raw.z.cols() != m) {
    std::ostringstream os;
    os << "dimension mismatch: z has " << raw.z.cols() << " columns but grid has "
       << m << " points";
    throw ValidationError(os.str());
  }
  if (raw.x.rows() != n) {
    std::ostringstream os;
    os << "dimension mismatch: z has " << n << " rows but x has " << raw.x.rows();
    throw ValidationError(os.str());
  }
  if (static_cast<int>(raw.schema.size()) != raw.x.cols())
    throw ValidationError("schema size does not match covariate column count");
  check_finite(raw.z, "z");
  check_finite(raw.x, "x");

  for (int j = 0; j < raw.x.cols(); ++j) {
    if (raw.schema[j].kind != CovariateKind::Categorical) continue;
    for (int i = 0; i < n; ++i) {
      double v = raw.x(i, j);
      if (v < 0.0 || v != std::floor(v)) {
        std::ostringstream os;
        os << "categorical column " << j << " has non-integer code at row " << i;
        throw ValidationError(os.str());
      }
    }
  }

  // Canonical row-major grid ordering by (s2, s1).
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  const Matrix& pts = raw.grid.points;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (pts(a, 1) != pts(b, 1)) return pts(a, 1) < pts(b, 1);
    return pts(a, 0) < pts(b, 0);
  });

  FunctionalDataset out;
  out.grid.points.resize(m, 2);
  out.z.resize(n, m);
  for (int k = 0; k < m; ++k) {
    out.grid.points.row(k) = pts.row(order[k]);
    out.z.col(k) = raw.z.col(order[k]);
  }
  out.x = raw.x;
  out.schema = raw.schema;
  if (grid_order) *grid_order = order;

  for (int k = 1; k < m; ++k) {
    if (out.grid.points(k, 0) == out.grid.points(k - 1, 0) &&
        out.grid.points(k, 1) == out.grid.points(k - 1, 1)) {
      std::ostringstream os;
      os << "duplicate grid point (" << out.grid.points(k, 0) << ", "
         << out.grid.points(k, 1) << ")";
      throw ValidationError(os.str());
    }
  }
  return out;
}

EncodedCovariates encode_covariates(const FunctionalDataset& data) {
  const int n = data.n();
  EncodedCovariates enc;

  // First pass: the level sets, in first-appearance order.
  std::vector<std::vector<int>> levels(data.p());
  for (int j = 0; j < data.p(); ++j) {
    if (data.schema[j].kind != CovariateKind::Categorical) continue;
    for (int i = 0; i < n; ++i) {
      int code = static_cast<int>(data.x(i, j));
      auto& lv = levels[j];
      if (std::find(lv.begin(), lv.end(), code) == lv.end()) lv.push_back(code);
    }
    if (levels[j].size() == 1)
      std::cerr << "warning: categorical column '" << data.schema[j].name
                << "' has a single level\n";
  }

  int p_enc = 0;
  for (int j = 0; j < data.p(); ++j)
    p_enc += data.schema[j].kind == CovariateKind::Categorical
                 ? static_cast<int>(levels[j].size())
                 : 1;

  enc.x_enc.setZero(n, p_enc);
  int col = 0;
  for (int j = 0; j < data.p(); ++j) {
    if (data.schema[j].kind == CovariateKind::Continuous) {
      enc.x_enc.col(col) = data.x.col(j);
      enc.columns.push_back({j, false, -1, data.schema[j].name});
      ++col;
    } else {
      for (int code : levels[j]) {
        for (int i = 0; i < n; ++i)
          enc.x_enc(i, col) = static_cast<int>(data.x(i, j)) == code ? 1.0 : 0.0;
        enc.columns.push_back(
            {j, true, code, data.schema[j].name + "=" + std::to_string(code)});
        ++col;
      }
    }
  }
  return enc;
}

Matrix encode_with_map(const Matrix& x_new,
                       const std::vector<CovariateSchema>& schema,
                       const std::vector<EncodedColumn>& columns) {
  const int n = static_cast<int>(x_new.rows());
  Matrix out = Matrix::Zero(n, static_cast<int>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const EncodedColumn& ec = columns[c];
    if (!ec.indicator) {
      out.col(static_cast<int>(c)) = x_new.col(ec.source);
    } else {
      for (int i = 0; i < n; ++i)
        out(i, static_cast<int>(c)) =
            static_cast<int>(x_new(i, ec.source)) == ec.level ? 1.0 : 0.0;
    }
  }
  // Every categorical row must land on a known level.
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].kind != CovariateKind::Categorical) continue;
    for (int i = 0; i < n; ++i) {
      int code = static_cast<int>(x_new(i, static_cast<int>(j)));
      bool seen = false;
      for (const EncodedColumn& ec : columns)
        if (ec.indicator && ec.source == static_cast<int>(j) && ec.level == code)
          seen = true;
      if (!seen) {
        std::ostringstream os;
        os << "unseen categorical level " << code << " in column '"
           << schema[j].name << "' at row " << i;
        throw ValidationError(os.str());
      }
    }
  }
  return out;
}

}  // namespace afbart
