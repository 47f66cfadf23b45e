#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "flare/errors.hpp"

namespace flare {

// Flat d-dimensional weight vector. One representation for models, deltas
// and accumulators. All reductions run left-to-right in index order so
// repeated calls are bitwise identical.
using ParamVector = std::vector<double>;

enum class Norm { L1, L2sq };

inline void check_same_dim(const ParamVector& x, const ParamVector& y,
                           const char* who) {
  if (x.size() != y.size())
    throw DimensionError(std::string(who) + ": length mismatch");
}

// alpha*x + y, elementwise.
inline ParamVector axpy(double alpha, const ParamVector& x,
                        const ParamVector& y) {
  check_same_dim(x, y, "axpy");
  ParamVector out(y);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
  return out;
}

inline void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y) {
  check_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double norm(const ParamVector& x, Norm which) {
  double acc = 0.0;
  if (which == Norm::L1) {
    for (double v : x) acc += std::fabs(v);
  } else {
    for (double v : x) acc += v * v;
  }
  return acc;
}

inline double dot(const ParamVector& x, const ParamVector& y) {
  check_same_dim(x, y, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline ParamVector sub(const ParamVector& x, const ParamVector& y) {
  check_same_dim(x, y, "sub");
  ParamVector out(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] -= y[i];
  return out;
}

inline ParamVector add(const ParamVector& x, const ParamVector& y) {
  return axpy(1.0, x, y);
}

inline bool all_finite(const ParamVector& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace flare
