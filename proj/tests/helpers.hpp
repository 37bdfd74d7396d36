#pragma once

#include "opclab/linalg.hpp"

#include <initializer_list>

namespace testutil {

inline opclab::Vector vec(std::initializer_list<double> xs) {
  opclab::Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Row-major fill.
inline opclab::Matrix mat(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> xs) {
  opclab::Matrix m(rows, cols);
  auto it = xs.begin();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = *it++;
  return m;
}

inline opclab::Matrix scalar(double x) { return opclab::Matrix::Constant(1, 1, x); }

inline double max_abs_diff(const opclab::Matrix& a, const opclab::Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
