#include "reconmil/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace reconmil {

void adam_init(AdamState& state, const std::vector<Matrix*>& params) {
  state.m.clear();
  state.v.clear();
  state.t = 0;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Matrix* p : params) {
    state.m.emplace_back(p->rows, p->cols, 0.0);
    state.v.emplace_back(p->rows, p->cols, 0.0);
  }
}

void adam_step(const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& param = *params[p];
    const Matrix& grad = *grads[p];
    Matrix& m = state.m[p];
    Matrix& v = state.v[p];
    if (!param.same_shape(grad)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < param.data.size(); ++i) {
      param.data[i] -= cfg.lr * cfg.weight_decay * param.data[i];
      const double g = grad.data[i];
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      param.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace reconmil
