#pragma once

#include <initializer_list>
#include <vector>

#include "reconmil/rng.hpp"

namespace reconmil {

// Dense row-major matrix of doubles. The only tensor rank in this project
// is 2; vectors are stored as n x 1 or 1 x n as the context dictates.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  static Matrix from(std::initializer_list<std::initializer_list<double>> values);

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
  bool all_finite() const;

  bool operator==(const Matrix& other) const {
    return rows == other.rows && cols == other.cols && data == other.data;
  }
};

// Entries ~ N(0, sigma^2).
Matrix randn(Rng& rng, int rows, int cols, double sigma = 1.0);

// Entries ~ U(-limit, limit); limit = 1/sqrt(fan_in) is the default init.
Matrix rand_uniform(Rng& rng, int rows, int cols, double limit);

}  // namespace reconmil
