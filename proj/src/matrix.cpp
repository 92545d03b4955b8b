#include "reconmil/matrix.hpp"

#include <cmath>

namespace reconmil {

Matrix Matrix::from(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m;
  m.rows = static_cast<int>(values.size());
  m.cols = m.rows > 0 ? static_cast<int>(values.begin()->size()) : 0;
  m.data.reserve(static_cast<std::size_t>(m.rows) * m.cols);
  for (const auto& row : values) {
    for (double v : row) m.data.push_back(v);
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix randn(Rng& rng, int rows, int cols, double sigma) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = sigma * rng.normal();
  return m;
}

Matrix rand_uniform(Rng& rng, int rows, int cols, double limit) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace reconmil
