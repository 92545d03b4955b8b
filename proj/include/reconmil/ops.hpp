#pragma once

#include <optional>

#include "reconmil/tape.hpp"

namespace reconmil {

enum class Act { gelu, sigmoid, softplus, tanh };

// Selective-scan parameters staged on a tape. Shapes for d channels and
// state size n:
//   decay       d x n   strictly negative state-decay coefficients
//   step_w      d x 1   per-channel step-size projection weight
//   step_b      d x 1   per-channel step-size projection bias
//   in_proj     d x n   input-dependent state injection
//   out_proj    d x n   input-dependent state readout
//   passthrough d x 1   residual channel skip
struct SsmVars {
  Var decay;
  Var step_w;
  Var step_b;
  Var in_proj;
  Var out_proj;
  Var passthrough;
};

// y = x * w (+ bias broadcast per row). x: N x a, w: a x b, bias: 1 x b.
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var bias);

// Per-row normalization with population variance (divisor d), then
// scale/shift. gamma, beta: 1 x d.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Elementwise activation. GELU is the tanh form with constant 0.044715;
// sigmoid uses the sign-stable branch; softplus switches to identity
// above x = 30.
Var activation(Var x, Act kind);

// Depthwise 1-D convolution over the row (instance) axis, one kernel per
// channel, zero padding, cross-correlation orientation. kernels: d x k,
// k odd.
Var dwconv1d(Var x, Var kernels);

// Diagonal selective scan over rows. x: N x d -> N x d.
Var ssm_scan(Var x, const SsmVars& p);

// Mean over rows of squared L2 row norms of (pred - target): divides by
// N only, never by the feature width.
Var mse(Var pred, Var target);

// Softmax cross-entropy for a single 1 x C logit row.
Var cross_entropy(Var logits, int class_index);

// Discrete-time hazard negative log likelihood for a single 1 x T logit
// row. Hazards are sigmoid(logits); observed events pay -log h_j plus the
// survival terms before j, censored records pay survival terms through j.
Var hazard_nll(Var logits, int interval_index, bool observed);

// Elementwise combinators.
Var add(Var a, Var b);
Var add_scaled(Var a, Var b, double c);  // a + c*b
Var mul(Var a, Var b);

// Structure ops.
Var concat_cols(Var a, Var b);
Var transpose(Var x);
Var reverse_rows(Var x);
Var mean_rows(Var x);                    // N x d -> 1 x d
Var softmax_col(Var x);                  // N x 1 -> N x 1, sums to 1

}  // namespace reconmil
