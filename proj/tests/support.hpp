#pragma once

// Hand-rolled generators shared by the property tests.

#include "must/common.hpp"
#include "must/graph.hpp"

#include <random>

namespace must::testkit {

using Gen = std::mt19937_64;

inline double uniform(Gen& g, double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(g); }
inline int uniform_int(Gen& g, int a, int b) { return std::uniform_int_distribution<int>(a, b)(g); }

/// Symmetric non-negative zero-diagonal weights; each pair linked with probability p.
inline Matrix random_weights(Gen& g, int n, double p, double wmax = 5.0) {
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (uniform(g) < p) m(i, j) = m(j, i) = uniform(g, 0.01, wmax);
  return m;
}

inline WeightedSnapshot random_snapshot(Gen& g, int n, double p) { return WeightedSnapshot(random_weights(g, n, p)); }

inline Matrix random_matrix(Gen& g, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(g, -scale, scale);
  return m;
}

}  // namespace must::testkit
