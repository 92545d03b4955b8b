#pragma once

#include <functional>
#include <string>
#include <vector>

#include "reconmil/tape.hpp"

namespace reconmil {

// Builds a scalar (1 x 1) output from leaves created on the given tape.
// The leaves appear in the same order as the input matrices.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central-difference check of every input coordinate against the
// reverse-mode gradient. Relative error |a - n| / max(1e-8, |a| + |n|).
GradCheckCase grad_check(const std::string& name, const ScalarFn& fn,
                         const std::vector<Matrix>& inputs, double h = 1e-5,
                         double tol = 1e-4);

}  // namespace reconmil
