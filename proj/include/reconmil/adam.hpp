#pragma once

#include <vector>

#include "reconmil/matrix.hpp"

namespace reconmil {

struct AdamConfig {
  double lr = 5e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators, one pair per parameter tensor, in the
// same order the parameters are visited.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long t = 0;
};

void adam_init(AdamState& state, const std::vector<Matrix*>& params);

// One optimizer step. Weight decay is decoupled: p <- p - lr*wd*p before
// the bias-corrected moment update.
void adam_step(const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace reconmil
