#include "reconmil/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace reconmil {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_stable(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": vars from different tapes");
  }
}

void check_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

int next_id(Tape& t) { return static_cast<int>(t.size()); }

void accumulate(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

Var linear(Var x, Var w) { return linear(x, w, Var{}); }

Var linear(Var x, Var w, Var bias) {
  check_same_tape(x, w, "linear");
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  const Matrix& wm = w.value();
  if (xm.cols != wm.rows) throw std::invalid_argument("linear: shape mismatch");
  const bool has_bias = bias.tape != nullptr;
  if (has_bias) {
    check_same_tape(x, bias, "linear");
    const Matrix& bm = bias.value();
    if (bm.rows != 1 || bm.cols != wm.cols) {
      throw std::invalid_argument("linear: shape mismatch");
    }
  }

  Matrix out(xm.rows, wm.cols);
  for (int i = 0; i < xm.rows; ++i) {
    const double* xi = xm.row(i);
    double* oi = out.row(i);
    if (has_bias) {
      const double* b = bias.value().row(0);
      for (int j = 0; j < wm.cols; ++j) oi[j] = b[j];
    }
    for (int k = 0; k < xm.cols; ++k) {
      const double xv = xi[k];
      const double* wk = wm.row(k);
      for (int j = 0; j < wm.cols; ++j) oi[j] += xv * wk[j];
    }
  }

  const bool needs = x.requires_grad() || w.requires_grad() ||
                     (has_bias && bias.requires_grad());
  const int self = next_id(tape);
  const int xid = x.id, wid = w.id, bid = has_bias ? bias.id : -1;
  return tape.push(std::move(out), needs, [self, xid, wid, bid](Tape& t) {
    const Matrix& gy = t.grad(self);
    const Matrix& xv = t.value(xid);
    const Matrix& wv = t.value(wid);
    if (t.requires_grad(xid)) {
      Matrix& gx = t.grad(xid);
      for (int i = 0; i < xv.rows; ++i) {
        const double* gyi = gy.row(i);
        double* gxi = gx.row(i);
        for (int k = 0; k < xv.cols; ++k) {
          const double* wk = wv.row(k);
          double acc = 0.0;
          for (int j = 0; j < wv.cols; ++j) acc += gyi[j] * wk[j];
          gxi[k] += acc;
        }
      }
    }
    if (t.requires_grad(wid)) {
      Matrix& gw = t.grad(wid);
      for (int i = 0; i < xv.rows; ++i) {
        const double* gyi = gy.row(i);
        const double* xi = xv.row(i);
        for (int k = 0; k < xv.cols; ++k) {
          double* gwk = gw.row(k);
          const double xik = xi[k];
          for (int j = 0; j < wv.cols; ++j) gwk[j] += xik * gyi[j];
        }
      }
    }
    if (bid >= 0 && t.requires_grad(bid)) {
      Matrix& gb = t.grad(bid);
      for (int i = 0; i < gy.rows; ++i) {
        const double* gyi = gy.row(i);
        for (int j = 0; j < gy.cols; ++j) gb.at(0, j) += gyi[j];
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma, "layer_norm");
  check_same_tape(x, beta, "layer_norm");
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  const int d = xm.cols;
  if (gamma.value().rows != 1 || gamma.value().cols != d ||
      beta.value().rows != 1 || beta.value().cols != d) {
    throw std::invalid_argument("layer_norm: shape mismatch");
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");

  Matrix out(xm.rows, d);
  Matrix xhat(xm.rows, d);        // saved for backward
  std::vector<double> inv_std(xm.rows);
  const double* g = gamma.value().row(0);
  const double* b = beta.value().row(0);
  for (int i = 0; i < xm.rows; ++i) {
    const double* xi = xm.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xi[j] - mean;
      var += c * c;
    }
    var /= d;  // population variance
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    double* hi = xhat.row(i);
    double* oi = out.row(i);
    for (int j = 0; j < d; ++j) {
      hi[j] = (xi[j] - mean) * inv;
      oi[j] = g[j] * hi[j] + b[j];
    }
  }

  const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  const int self = next_id(tape);
  const int xid = x.id, gid = gamma.id, bid = beta.id;
  return tape.push(std::move(out), needs,
                   [self, xid, gid, bid, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape& t) {
    const Matrix& gy = t.grad(self);
    const int rows = gy.rows, d = gy.cols;
    const double* g = t.value(gid).row(0);
    if (t.requires_grad(gid)) {
      Matrix& gg = t.grad(gid);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < d; ++j) gg.at(0, j) += gy.at(i, j) * xhat.at(i, j);
      }
    }
    if (t.requires_grad(bid)) {
      Matrix& gb = t.grad(bid);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < d; ++j) gb.at(0, j) += gy.at(i, j);
      }
    }
    if (t.requires_grad(xid)) {
      Matrix& gx = t.grad(xid);
      for (int i = 0; i < rows; ++i) {
        const double* gyi = gy.row(i);
        const double* hi = xhat.row(i);
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (int j = 0; j < d; ++j) {
          const double dh = gyi[j] * g[j];
          mean_dh += dh;
          mean_dh_h += dh * hi[j];
        }
        mean_dh /= d;
        mean_dh_h /= d;
        double* gxi = gx.row(i);
        for (int j = 0; j < d; ++j) {
          const double dh = gyi[j] * g[j];
          gxi[j] += inv_std[i] * (dh - mean_dh - hi[j] * mean_dh_h);
        }
      }
    }
  });
}

Var activation(Var x, Act kind) {
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  Matrix out(xm.rows, xm.cols);
  for (std::size_t i = 0; i < xm.data.size(); ++i) {
    const double v = xm.data[i];
    switch (kind) {
      case Act::gelu: {
        const double u = kGeluScale * (v + kGeluCubic * v * v * v);
        out.data[i] = 0.5 * v * (1.0 + std::tanh(u));
        break;
      }
      case Act::sigmoid:
        out.data[i] = sigmoid_stable(v);
        break;
      case Act::softplus:
        out.data[i] = softplus_stable(v);
        break;
      case Act::tanh:
        out.data[i] = std::tanh(v);
        break;
    }
  }

  const int self = next_id(tape);
  const int xid = x.id;
  return tape.push(std::move(out), x.requires_grad(), [self, xid, kind](Tape& t) {
    if (!t.requires_grad(xid)) return;
    const Matrix& gy = t.grad(self);
    const Matrix& xv = t.value(xid);
    const Matrix& yv = t.value(self);
    Matrix& gx = t.grad(xid);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      const double v = xv.data[i];
      double deriv = 0.0;
      switch (kind) {
        case Act::gelu: {
          const double u = kGeluScale * (v + kGeluCubic * v * v * v);
          const double th = std::tanh(u);
          const double sech2 = 1.0 - th * th;
          deriv = 0.5 * (1.0 + th) +
                  0.5 * v * sech2 * kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
          break;
        }
        case Act::sigmoid: {
          const double s = yv.data[i];
          deriv = s * (1.0 - s);
          break;
        }
        case Act::softplus:
          deriv = sigmoid_stable(v);
          break;
        case Act::tanh: {
          const double th = yv.data[i];
          deriv = 1.0 - th * th;
          break;
        }
      }
      gx.data[i] += gy.data[i] * deriv;
    }
  });
}

Var dwconv1d(Var x, Var kernels) {
  check_same_tape(x, kernels, "dwconv1d");
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  const Matrix& km = kernels.value();
  const int n = xm.rows, d = xm.cols, k = km.cols;
  if (km.rows != d) throw std::invalid_argument("dwconv1d: shape mismatch");
  if (k % 2 == 0) throw std::invalid_argument("dwconv1d: kernel width must be odd");
  const int half = (k - 1) / 2;

  Matrix out(n, d);
  for (int t = 0; t < n; ++t) {
    double* ot = out.row(t);
    for (int j = 0; j < k; ++j) {
      const int s = t + j - half;
      if (s < 0 || s >= n) continue;
      const double* xs = xm.row(s);
      for (int c = 0; c < d; ++c) ot[c] += km.at(c, j) * xs[c];
    }
  }

  const bool needs = x.requires_grad() || kernels.requires_grad();
  const int self = next_id(tape);
  const int xid = x.id, kid = kernels.id;
  return tape.push(std::move(out), needs, [self, xid, kid, half, k](Tape& t) {
    const Matrix& gy = t.grad(self);
    const Matrix& xv = t.value(xid);
    const Matrix& kv = t.value(kid);
    const int n = xv.rows, d = xv.cols;
    if (t.requires_grad(xid)) {
      Matrix& gx = t.grad(xid);
      for (int s = 0; s < n; ++s) {
        double* gxs = gx.row(s);
        for (int j = 0; j < k; ++j) {
          const int ty = s - j + half;
          if (ty < 0 || ty >= n) continue;
          const double* gyt = gy.row(ty);
          for (int c = 0; c < d; ++c) gxs[c] += kv.at(c, j) * gyt[c];
        }
      }
    }
    if (t.requires_grad(kid)) {
      Matrix& gk = t.grad(kid);
      for (int ty = 0; ty < n; ++ty) {
        const double* gyt = gy.row(ty);
        for (int j = 0; j < k; ++j) {
          const int s = ty + j - half;
          if (s < 0 || s >= n) continue;
          const double* xs = xv.row(s);
          for (int c = 0; c < d; ++c) gk.at(c, j) += gyt[c] * xs[c];
        }
      }
    }
  });
}

Var ssm_scan(Var x, const SsmVars& p) {
  check_same_tape(x, p.decay, "ssm_scan");
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  const Matrix& am = p.decay.value();
  const int n_steps = xm.rows, d = xm.cols, n = am.cols;
  if (am.rows != d || p.in_proj.value().rows != d || p.in_proj.value().cols != n ||
      p.out_proj.value().rows != d || p.out_proj.value().cols != n ||
      p.step_w.value().rows != d || p.step_w.value().cols != 1 ||
      p.step_b.value().rows != d || p.step_b.value().cols != 1 ||
      p.passthrough.value().rows != d || p.passthrough.value().cols != 1) {
    throw std::invalid_argument("ssm_scan: shape mismatch");
  }
  for (double a : am.data) {
    if (!(a < 0.0)) throw std::invalid_argument("ssm_scan: decay entries must be strictly negative");
  }

  // Saved intermediates for the backward recurrence.
  Matrix states(n_steps, d * n);   // h_t, flattened (c, i)
  Matrix deltas(n_steps, d);       // softplus step sizes
  Matrix in_mix(n_steps, n);       // B_t = x_t^T in_proj
  Matrix out_mix(n_steps, n);      // C_t = x_t^T out_proj

  Matrix out(n_steps, d);
  std::vector<double> h(static_cast<std::size_t>(d) * n, 0.0);
  const double* sw = p.step_w.value().data.data();
  const double* sb = p.step_b.value().data.data();
  const double* pass = p.passthrough.value().data.data();
  const Matrix& bmat = p.in_proj.value();
  const Matrix& cmat = p.out_proj.value();
  for (int t = 0; t < n_steps; ++t) {
    const double* xt = xm.row(t);
    double* bt = in_mix.row(t);
    double* ct = out_mix.row(t);
    for (int c = 0; c < d; ++c) {
      const double xv = xt[c];
      const double* brow = bmat.row(c);
      const double* crow = cmat.row(c);
      for (int i = 0; i < n; ++i) {
        bt[i] += xv * brow[i];
        ct[i] += xv * crow[i];
      }
    }
    double* dt = deltas.row(t);
    double* ht = states.row(t);
    double* yt = out.row(t);
    for (int c = 0; c < d; ++c) {
      dt[c] = softplus_stable(xt[c] * sw[c] + sb[c]);
      const double* arow = am.row(c);
      double* hc = h.data() + static_cast<std::size_t>(c) * n;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double abar = std::exp(dt[c] * arow[i]);
        hc[i] = abar * hc[i] + dt[c] * bt[i] * xt[c];
        acc += ct[i] * hc[i];
      }
      yt[c] = acc + pass[c] * xt[c];
      for (int i = 0; i < n; ++i) ht[static_cast<std::size_t>(c) * n + i] = hc[i];
    }
  }

  const bool needs = x.requires_grad() || p.decay.requires_grad() ||
                     p.step_w.requires_grad() || p.step_b.requires_grad() ||
                     p.in_proj.requires_grad() || p.out_proj.requires_grad() ||
                     p.passthrough.requires_grad();
  const int self = next_id(tape);
  const int xid = x.id;
  const int aid = p.decay.id, swid = p.step_w.id, sbid = p.step_b.id;
  const int bmid = p.in_proj.id, cmid = p.out_proj.id, pid = p.passthrough.id;
  return tape.push(
      std::move(out), needs,
      [self, xid, aid, swid, sbid, bmid, cmid, pid, states = std::move(states),
       deltas = std::move(deltas), in_mix = std::move(in_mix),
       out_mix = std::move(out_mix)](Tape& t) {
    const Matrix& gy = t.grad(self);
    const Matrix& xv = t.value(xid);
    const Matrix& am = t.value(aid);
    const Matrix& bmat = t.value(bmid);
    const Matrix& cmat = t.value(cmid);
    const double* sw = t.value(swid).data.data();
    const double* pass = t.value(pid).data.data();
    const int n_steps = xv.rows, d = xv.cols, n = am.cols;

    Matrix gx_local(n_steps, d);
    Matrix ga(d, n), gb(d, n), gc(d, n);
    std::vector<double> gsw(d, 0.0), gsb(d, 0.0), gpass(d, 0.0);
    std::vector<double> gh(static_cast<std::size_t>(d) * n, 0.0);
    std::vector<double> gb_step(n), gc_step(n);

    for (int step = n_steps - 1; step >= 0; --step) {
      const double* xt = xv.row(step);
      const double* gyt = gy.row(step);
      const double* dt = deltas.row(step);
      const double* bt = in_mix.row(step);
      const double* ct = out_mix.row(step);
      const double* ht = states.row(step);
      const double* hprev = step > 0 ? states.row(step - 1) : nullptr;
      double* gxt = gx_local.row(step);

      std::fill(gb_step.begin(), gb_step.end(), 0.0);
      std::fill(gc_step.begin(), gc_step.end(), 0.0);

      for (int c = 0; c < d; ++c) {
        const double g = gyt[c];
        const double* hc = ht + static_cast<std::size_t>(c) * n;
        double* ghc = gh.data() + static_cast<std::size_t>(c) * n;
        // y_t[c] = sum_i C_t[i] h_t[c,i] + pass[c] x_t[c]
        for (int i = 0; i < n; ++i) {
          gc_step[i] += g * hc[i];
          ghc[i] += g * ct[i];
        }
        gpass[c] += g * xt[c];
        gxt[c] += g * pass[c];
      }

      // Recurrence: h_t = exp(delta A) h_{t-1} + delta B_t x_t
      for (int c = 0; c < d; ++c) {
        const double* arow = am.row(c);
        double* ghc = gh.data() + static_cast<std::size_t>(c) * n;
        double gdelta = 0.0;
        const double delta = dt[c];
        for (int i = 0; i < n; ++i) {
          const double abar = std::exp(delta * arow[i]);
          const double hp = hprev ? hprev[static_cast<std::size_t>(c) * n + i] : 0.0;
          const double g_abar = ghc[i] * hp;
          ga.at(c, i) += g_abar * abar * delta;
          gdelta += g_abar * abar * arow[i];
          gdelta += ghc[i] * bt[i] * xt[c];
          gb_step[i] += ghc[i] * delta * xt[c];
          gxt[c] += ghc[i] * delta * bt[i];
          ghc[i] *= abar;  // becomes gradient w.r.t. h_{t-1}
        }
        // delta = softplus(u); dsoftplus = sigmoid(u) = 1 - exp(-delta)
        const double g_u = gdelta * (1.0 - std::exp(-delta));
        gsw[c] += g_u * xt[c];
        gsb[c] += g_u;
        gxt[c] += g_u * sw[c];
      }

      // B_t[i] = sum_c x_t[c] in_proj[c,i]; C_t likewise with out_proj.
      for (int c = 0; c < d; ++c) {
        const double* brow = bmat.row(c);
        const double* crow = cmat.row(c);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          gb.at(c, i) += gb_step[i] * xt[c];
          gc.at(c, i) += gc_step[i] * xt[c];
          acc += gb_step[i] * brow[i] + gc_step[i] * crow[i];
        }
        gxt[c] += acc;
      }
    }

    if (t.requires_grad(xid)) accumulate(t.grad(xid), gx_local);
    if (t.requires_grad(aid)) accumulate(t.grad(aid), ga);
    if (t.requires_grad(bmid)) accumulate(t.grad(bmid), gb);
    if (t.requires_grad(cmid)) accumulate(t.grad(cmid), gc);
    if (t.requires_grad(swid)) {
      Matrix& g = t.grad(swid);
      for (int c = 0; c < d; ++c) g.at(c, 0) += gsw[c];
    }
    if (t.requires_grad(sbid)) {
      Matrix& g = t.grad(sbid);
      for (int c = 0; c < d; ++c) g.at(c, 0) += gsb[c];
    }
    if (t.requires_grad(pid)) {
      Matrix& g = t.grad(pid);
      for (int c = 0; c < d; ++c) g.at(c, 0) += gpass[c];
    }
  });
}

Var mse(Var pred, Var target) {
  check_same_tape(pred, target, "mse");
  check_same_shape(pred, target, "mse");
  Tape& tape = *pred.tape;
  const Matrix& pm = pred.value();
  const Matrix& tm = target.value();
  const int n = pm.rows;
  double total = 0.0;
  for (std::size_t i = 0; i < pm.data.size(); ++i) {
    const double diff = pm.data[i] - tm.data[i];
    total += diff * diff;
  }
  Matrix out(1, 1);
  out.at(0, 0) = total / n;

  const bool needs = pred.requires_grad() || target.requires_grad();
  const int self = next_id(tape);
  const int pid = pred.id, tid = target.id;
  return tape.push(std::move(out), needs, [self, pid, tid](Tape& t) {
    const double g = t.grad(self).at(0, 0);
    const Matrix& pm = t.value(pid);
    const Matrix& tm = t.value(tid);
    const double scale = 2.0 * g / pm.rows;
    if (t.requires_grad(pid)) {
      Matrix& gp = t.grad(pid);
      for (std::size_t i = 0; i < pm.data.size(); ++i) {
        gp.data[i] += scale * (pm.data[i] - tm.data[i]);
      }
    }
    if (t.requires_grad(tid)) {
      Matrix& gt = t.grad(tid);
      for (std::size_t i = 0; i < pm.data.size(); ++i) {
        gt.data[i] -= scale * (pm.data[i] - tm.data[i]);
      }
    }
  });
}

Var cross_entropy(Var logits, int class_index) {
  Tape& tape = *logits.tape;
  const Matrix& lm = logits.value();
  if (lm.rows != 1) throw std::invalid_argument("cross_entropy: logits must be 1 x C");
  const int c = lm.cols;
  if (class_index < 0 || class_index >= c) {
    throw std::out_of_range("cross_entropy: class index out of range");
  }
  double max_logit = lm.data[0];
  for (double v : lm.data) max_logit = std::max(max_logit, v);
  double sum_exp = 0.0;
  std::vector<double> soft(c);
  for (int j = 0; j < c; ++j) {
    soft[j] = std::exp(lm.data[j] - max_logit);
    sum_exp += soft[j];
  }
  for (int j = 0; j < c; ++j) soft[j] /= sum_exp;
  Matrix out(1, 1);
  out.at(0, 0) = -(lm.data[class_index] - max_logit - std::log(sum_exp));

  const int self = next_id(tape);
  const int lid = logits.id;
  return tape.push(std::move(out), logits.requires_grad(),
                   [self, lid, class_index, soft = std::move(soft)](Tape& t) {
    if (!t.requires_grad(lid)) return;
    const double g = t.grad(self).at(0, 0);
    Matrix& gl = t.grad(lid);
    for (std::size_t j = 0; j < soft.size(); ++j) {
      const double onehot = (static_cast<int>(j) == class_index) ? 1.0 : 0.0;
      gl.data[j] += g * (soft[j] - onehot);
    }
  });
}

Var hazard_nll(Var logits, int interval_index, bool observed) {
  Tape& tape = *logits.tape;
  const Matrix& lm = logits.value();
  if (lm.rows != 1) throw std::invalid_argument("hazard_nll: logits must be 1 x T");
  const int T = lm.cols;
  if (interval_index < 0 || interval_index >= T) {
    throw std::out_of_range("hazard_nll: interval index out of range");
  }
  // -log h_j = softplus(-l_j); -log(1 - h_s) = softplus(l_s)
  double loss = 0.0;
  if (observed) {
    loss += softplus_stable(-lm.data[interval_index]);
    for (int s = 0; s < interval_index; ++s) loss += softplus_stable(lm.data[s]);
  } else {
    for (int s = 0; s <= interval_index; ++s) loss += softplus_stable(lm.data[s]);
  }
  Matrix out(1, 1);
  out.at(0, 0) = loss;

  const int self = next_id(tape);
  const int lid = logits.id;
  return tape.push(std::move(out), logits.requires_grad(),
                   [self, lid, interval_index, observed](Tape& t) {
    if (!t.requires_grad(lid)) return;
    const double g = t.grad(self).at(0, 0);
    const Matrix& lm = t.value(lid);
    Matrix& gl = t.grad(lid);
    if (observed) {
      gl.data[interval_index] += g * (sigmoid_stable(lm.data[interval_index]) - 1.0);
      for (int s = 0; s < interval_index; ++s) {
        gl.data[s] += g * sigmoid_stable(lm.data[s]);
      }
    } else {
      for (int s = 0; s <= interval_index; ++s) {
        gl.data[s] += g * sigmoid_stable(lm.data[s]);
      }
    }
  });
}

Var add(Var a, Var b) { return add_scaled(a, b, 1.0); }

Var add_scaled(Var a, Var b, double c) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tape& tape = *a.tape;
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c * b.value().data[i];

  const bool needs = a.requires_grad() || b.requires_grad();
  const int self = next_id(tape);
  const int aid = a.id, bid = b.id;
  return tape.push(std::move(out), needs, [self, aid, bid, c](Tape& t) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(aid)) accumulate(t.grad(aid), gy);
    if (t.requires_grad(bid)) {
      Matrix& gb = t.grad(bid);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += c * gy.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  Tape& tape = *a.tape;
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];

  const bool needs = a.requires_grad() || b.requires_grad();
  const int self = next_id(tape);
  const int aid = a.id, bid = b.id;
  return tape.push(std::move(out), needs, [self, aid, bid](Tape& t) {
    const Matrix& gy = t.grad(self);
    const Matrix& av = t.value(aid);
    const Matrix& bv = t.value(bid);
    if (t.requires_grad(aid)) {
      Matrix& ga = t.grad(aid);
      for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] * bv.data[i];
    }
    if (t.requires_grad(bid)) {
      Matrix& gb = t.grad(bid);
      for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += gy.data[i] * av.data[i];
    }
  });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b, "concat_cols");
  Tape& tape = *a.tape;
  const Matrix& am = a.value();
  const Matrix& bm = b.value();
  if (am.rows != bm.rows) throw std::invalid_argument("concat_cols: shape mismatch");
  Matrix out(am.rows, am.cols + bm.cols);
  for (int i = 0; i < am.rows; ++i) {
    double* oi = out.row(i);
    const double* ai = am.row(i);
    const double* bi = bm.row(i);
    for (int j = 0; j < am.cols; ++j) oi[j] = ai[j];
    for (int j = 0; j < bm.cols; ++j) oi[am.cols + j] = bi[j];
  }

  const bool needs = a.requires_grad() || b.requires_grad();
  const int self = next_id(tape);
  const int aid = a.id, bid = b.id;
  const int a_cols = am.cols, b_cols = bm.cols;
  return tape.push(std::move(out), needs, [self, aid, bid, a_cols, b_cols](Tape& t) {
    const Matrix& gy = t.grad(self);
    if (t.requires_grad(aid)) {
      Matrix& ga = t.grad(aid);
      for (int i = 0; i < gy.rows; ++i) {
        for (int j = 0; j < a_cols; ++j) ga.at(i, j) += gy.at(i, j);
      }
    }
    if (t.requires_grad(bid)) {
      Matrix& gb = t.grad(bid);
      for (int i = 0; i < gy.rows; ++i) {
        for (int j = 0; j < b_cols; ++j) gb.at(i, j) += gy.at(i, a_cols + j);
      }
    }
  });
}

Var transpose(Var x) {
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  Matrix out(xm.cols, xm.rows);
  for (int i = 0; i < xm.rows; ++i) {
    for (int j = 0; j < xm.cols; ++j) out.at(j, i) = xm.at(i, j);
  }
  const int self = next_id(tape);
  const int xid = x.id;
  return tape.push(std::move(out), x.requires_grad(), [self, xid](Tape& t) {
    if (!t.requires_grad(xid)) return;
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(xid);
    for (int i = 0; i < gy.rows; ++i) {
      for (int j = 0; j < gy.cols; ++j) gx.at(j, i) += gy.at(i, j);
    }
  });
}

Var reverse_rows(Var x) {
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  Matrix out(xm.rows, xm.cols);
  for (int i = 0; i < xm.rows; ++i) {
    const double* src = xm.row(xm.rows - 1 - i);
    double* dst = out.row(i);
    for (int j = 0; j < xm.cols; ++j) dst[j] = src[j];
  }
  const int self = next_id(tape);
  const int xid = x.id;
  return tape.push(std::move(out), x.requires_grad(), [self, xid](Tape& t) {
    if (!t.requires_grad(xid)) return;
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(xid);
    for (int i = 0; i < gy.rows; ++i) {
      const double* src = gy.row(gy.rows - 1 - i);
      double* dst = gx.row(i);
      for (int j = 0; j < gy.cols; ++j) dst[j] += src[j];
    }
  });
}

Var mean_rows(Var x) {
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  Matrix out(1, xm.cols);
  for (int i = 0; i < xm.rows; ++i) {
    const double* xi = xm.row(i);
    for (int j = 0; j < xm.cols; ++j) out.at(0, j) += xi[j];
  }
  for (int j = 0; j < xm.cols; ++j) out.at(0, j) /= xm.rows;

  const int self = next_id(tape);
  const int xid = x.id;
  const int n = xm.rows;
  return tape.push(std::move(out), x.requires_grad(), [self, xid, n](Tape& t) {
    if (!t.requires_grad(xid)) return;
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(xid);
    for (int i = 0; i < n; ++i) {
      double* gxi = gx.row(i);
      for (int j = 0; j < gy.cols; ++j) gxi[j] += gy.at(0, j) / n;
    }
  });
}

Var softmax_col(Var x) {
  Tape& tape = *x.tape;
  const Matrix& xm = x.value();
  if (xm.cols != 1) throw std::invalid_argument("softmax_col: expected N x 1");
  double max_v = xm.data[0];
  for (double v : xm.data) max_v = std::max(max_v, v);
  Matrix out(xm.rows, 1);
  double sum = 0.0;
  for (int i = 0; i < xm.rows; ++i) {
    out.data[i] = std::exp(xm.data[i] - max_v);
    sum += out.data[i];
  }
  for (int i = 0; i < xm.rows; ++i) out.data[i] /= sum;

  const int self = next_id(tape);
  const int xid = x.id;
  return tape.push(std::move(out), x.requires_grad(), [self, xid](Tape& t) {
    if (!t.requires_grad(xid)) return;
    const Matrix& gy = t.grad(self);
    const Matrix& s = t.value(self);
    Matrix& gx = t.grad(xid);
    double dot = 0.0;
    for (std::size_t i = 0; i < s.data.size(); ++i) dot += gy.data[i] * s.data[i];
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      gx.data[i] += s.data[i] * (gy.data[i] - dot);
    }
  });
}

}  // namespace reconmil
