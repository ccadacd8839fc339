// Copyright 2026 The dgm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dgm/autodiff.h"

#include <algorithm>
#include <cmath>

#include "dgm/error.h"

namespace dgm {

Var conv2d_t(Tape& tape, Var input, Var filters, Pad pad) {
  Tensor out = conv2d(tape.value(input), tape.value(filters), pad);
  const Shape in_shape = tape.value(input).shape;
  const Shape f_shape = tape.value(filters).shape;
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(input, conv2d_transpose(g, t.value(filters), pad, in_shape));
    t.accumulate_grad(filters, conv2d_grad_filters(t.value(input), g, pad, f_shape));
  });
}

Var conv2d_const_in_t(Tape& tape, Tensor input, Var filters, Pad pad) {
  Tensor out = conv2d(input, tape.value(filters), pad);
  const Shape f_shape = tape.value(filters).shape;
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=, x = std::move(input)](Tape& t) {
    t.accumulate_grad(filters, conv2d_grad_filters(x, t.grad(self), pad, f_shape));
  });
}

Var conv2d_transpose_t(Tape& tape, Var input, Var filters, Pad pad, const Shape& out_shape) {
  Tensor out = conv2d_transpose(tape.value(input), tape.value(filters), pad, out_shape);
  const Shape f_shape = tape.value(filters).shape;
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    // Forward is the adjoint of conv2d, so the input adjoint is conv2d
    // itself; the filter adjoint swaps the roles of input and gradient.
    t.accumulate_grad(input, conv2d(g, t.value(filters), pad));
    t.accumulate_grad(filters, conv2d_grad_filters(g, t.value(input), pad, f_shape));
  });
}

Var add_bias_t(Tape& tape, Var input, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& b = tape.value(bias);
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.dim(0)) {
    throw_data("add_bias: input " + shape_str(x.shape) + " incompatible with bias " +
               shape_str(b.shape));
  }
  Tensor out = x;
  const std::int64_t plane = x.dim(1) * x.dim(2);
  for (std::int64_t f = 0; f < x.dim(0); ++f) {
    double* row = out.data.data() + f * plane;
    for (std::int64_t i = 0; i < plane; ++i) row[i] += b.data[static_cast<std::size_t>(f)];
  }
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(input, g);
    const std::int64_t f_count = g.dim(0);
    const std::int64_t pl = g.dim(1) * g.dim(2);
    Tensor gb({f_count});
    for (std::int64_t f = 0; f < f_count; ++f) {
      double acc = 0.0;
      const double* row = g.data.data() + f * pl;
      for (std::int64_t i = 0; i < pl; ++i) acc += row[i];
      gb.data[static_cast<std::size_t>(f)] = acc;
    }
    t.accumulate_grad(bias, gb);
  });
}

namespace {

Var unary_masked(Tape& tape, Var input, Tensor out, Tensor mask_grad) {
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=, m = std::move(mask_grad)](Tape& t) {
    const Tensor& g = t.grad(self);
    Tensor gi(g.shape);
    for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] = g.data[i] * m.data[i];
    t.accumulate_grad(input, gi);
  });
}

}  // namespace

Var relu_t(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape), mask(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool on = x.data[i] > 0.0;
    out.data[i] = on ? x.data[i] : 0.0;
    mask.data[i] = on ? 1.0 : 0.0;
  }
  return unary_masked(tape, input, std::move(out), std::move(mask));
}

Var nrelu_t(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape), mask(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool on = x.data[i] < 0.0;
    out.data[i] = on ? x.data[i] : 0.0;
    mask.data[i] = on ? 1.0 : 0.0;
  }
  return unary_masked(tape, input, std::move(out), std::move(mask));
}

Var leaky_relu_t(Tape& tape, Var input, double alpha) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape), mask(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool on = x.data[i] > 0.0;
    out.data[i] = on ? x.data[i] : alpha * x.data[i];
    mask.data[i] = on ? 1.0 : alpha;
  }
  return unary_masked(tape, input, std::move(out), std::move(mask));
}

Var nleaky_relu_t(Tape& tape, Var input, double alpha) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape), mask(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool on = x.data[i] < 0.0;
    out.data[i] = on ? x.data[i] : alpha * x.data[i];
    mask.data[i] = on ? 1.0 : alpha;
  }
  return unary_masked(tape, input, std::move(out), std::move(mask));
}

namespace {

PoolVar pool_t_impl(Tape& tape, Var input, std::int64_t window, std::int64_t stride, bool max) {
  PoolResult r = max ? maxpool(tape.value(input), window, stride)
                     : minpool(tape.value(input), window, stride);
  const Shape in_shape = tape.value(input).shape;
  Var self{static_cast<std::int32_t>(tape.size())};
  IndexTensor idx = r.indices;
  Var v = tape.emit(std::move(r.values), [=, ix = std::move(idx)](Tape& t) {
    t.accumulate_grad(input, unpool(t.grad(self), ix, in_shape));
  });
  return PoolVar{v, std::move(r.indices)};
}

}  // namespace

PoolVar maxpool_t(Tape& tape, Var input, std::int64_t window, std::int64_t stride) {
  return pool_t_impl(tape, input, window, stride, true);
}

PoolVar minpool_t(Tape& tape, Var input, std::int64_t window, std::int64_t stride) {
  return pool_t_impl(tape, input, window, stride, false);
}

Var unpool_fixed_t(Tape& tape, Var values, IndexTensor indices, const Shape& out_shape) {
  Tensor out = unpool(tape.value(values), indices, out_shape);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=, ix = std::move(indices)](Tape& t) {
    const Tensor& g = t.grad(self);
    const Tensor& v = t.value(values);
    Tensor gv(v.shape);
    const std::int64_t c = v.dim(0);
    const std::int64_t n = v.dim(1) * v.dim(2);
    const std::int64_t plane = g.dim(1) * g.dim(2);
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const std::int64_t* id = ix.data.data() + ci * n;
      const double* gp = g.data.data() + ci * plane;
      double* o = gv.data.data() + ci * n;
      for (std::int64_t i = 0; i < n; ++i) o[i] = gp[id[i]];
    }
    t.accumulate_grad(values, gv);
  });
}

Var mul_mask_t(Tape& tape, Var input, Tensor mask) {
  const Tensor& x = tape.value(input);
  if (x.shape != mask.shape) {
    throw_data("mul_mask: input " + shape_str(x.shape) + " vs mask " + shape_str(mask.shape));
  }
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] * mask.data[i];
  return unary_masked(tape, input, std::move(out), std::move(mask));
}

Var add_t(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  if (ta.shape != tb.shape) {
    throw_data("add: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = ta;
  axpy(1.0, tb, out);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(a, g);
    t.accumulate_grad(b, g);
  });
}

Var sub_t(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  if (ta.shape != tb.shape) {
    throw_data("sub: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = ta;
  axpy(-1.0, tb, out);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    t.accumulate_grad(a, g);
    t.accumulate_grad_scaled(b, -1.0, g);
  });
}

Var neg_t(Tape& tape, Var a) { return scale_t(tape, a, -1.0); }

Var scale_t(Tape& tape, Var a, double c) {
  Tensor out = tape.value(a);
  scale_in_place(out, c);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out),
                   [=](Tape& t) { t.accumulate_grad_scaled(a, c, t.grad(self)); });
}

Var add_const_t(Tape& tape, Var a, Tensor c) {
  const Tensor& ta = tape.value(a);
  if (ta.shape != c.shape) {
    throw_data("add_const: shape " + shape_str(ta.shape) + " vs " + shape_str(c.shape));
  }
  Tensor out = ta;
  axpy(1.0, c, out);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) { t.accumulate_grad(a, t.grad(self)); });
}

Var dot_t(Tape& tape, Var a, Var b) {
  const double v = dot(tape.value(a), tape.value(b));
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(v), [=](Tape& t) {
    const double g = t.grad(self).item();
    t.accumulate_grad_scaled(a, g, t.value(b));
    t.accumulate_grad_scaled(b, g, t.value(a));
  });
}

Var dot_const_t(Tape& tape, Var a, Tensor b) {
  const double v = dot(tape.value(a), b);
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(v), [=, c = std::move(b)](Tape& t) {
    t.accumulate_grad_scaled(a, t.grad(self).item(), c);
  });
}

Var sqdiff_half_t(Tape& tape, Var a, Tensor target) {
  const Tensor& x = tape.value(a);
  if (x.shape != target.shape) {
    throw_data("sqdiff_half: shape " + shape_str(x.shape) + " vs " + shape_str(target.shape));
  }
  double v = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - target.data[i];
    v += d * d;
  }
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(0.5 * v), [=, tgt = std::move(target)](Tape& t) {
    const double g = t.grad(self).item();
    const Tensor& xa = t.value(a);
    Tensor ga(xa.shape);
    for (std::size_t i = 0; i < xa.data.size(); ++i) ga.data[i] = g * (xa.data[i] - tgt.data[i]);
    t.accumulate_grad(a, ga);
  });
}

Var stack_scalars_t(Tape& tape, const std::vector<Var>& scalars) {
  if (scalars.empty()) throw_data("stack_scalars: empty input");
  Tensor out({static_cast<std::int64_t>(scalars.size())});
  for (std::size_t i = 0; i < scalars.size(); ++i) out.data[i] = tape.value(scalars[i]).item();
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=, vs = scalars](Tape& t) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      t.accumulate_grad(vs[i], Tensor::scalar(g.data[i]));
    }
  });
}

Var concat_maps_t(Tape& tape, Var a, Var b) {
  const Tensor& ta = tape.value(a);
  const Tensor& tb = tape.value(b);
  if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(1) != tb.dim(1) || ta.dim(2) != tb.dim(2)) {
    throw_data("concat_maps: spatial extents differ, " + shape_str(ta.shape) + " vs " +
               shape_str(tb.shape));
  }
  Tensor out({ta.dim(0) + tb.dim(0), ta.dim(1), ta.dim(2)});
  std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
  std::copy(tb.data.begin(), tb.data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(ta.data.size()));
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(std::move(out), [=](Tape& t) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor ga(va.shape), gb(vb.shape);
    std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(va.data.size()),
              ga.data.begin());
    std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(va.data.size()), g.data.end(),
              gb.data.begin());
    t.accumulate_grad(a, ga);
    t.accumulate_grad(b, gb);
  });
}

Var weighted_sum_t(Tape& tape, const std::vector<std::pair<Var, double>>& terms) {
  if (terms.empty()) throw_data("weighted_sum: empty input");
  double v = 0.0;
  for (const auto& [var, c] : terms) v += c * tape.value(var).item();
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(v), [=, ts = terms](Tape& t) {
    const double g = t.grad(self).item();
    for (const auto& [var, c] : ts) t.accumulate_grad(var, Tensor::scalar(g * c));
  });
}

Var masked_bias_dot_t(Tape& tape, Var h, Var bias, Tensor mask) {
  const Tensor& hv = tape.value(h);
  const Tensor& bv = tape.value(bias);
  if (hv.shape != mask.shape || hv.rank() != 3 || bv.rank() != 1 || bv.dim(0) != hv.dim(0)) {
    throw_data("masked_bias_dot: h " + shape_str(hv.shape) + ", bias " + shape_str(bv.shape) +
               ", mask " + shape_str(mask.shape) + " incompatible");
  }
  const std::int64_t f_count = hv.dim(0);
  const std::int64_t plane = hv.dim(1) * hv.dim(2);
  double v = 0.0;
  for (std::int64_t f = 0; f < f_count; ++f) {
    double acc = 0.0;
    const double* hp = hv.data.data() + f * plane;
    const double* mp = mask.data.data() + f * plane;
    for (std::int64_t i = 0; i < plane; ++i) acc += mp[i] * hp[i];
    v += bv.data[static_cast<std::size_t>(f)] * acc;
  }
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(v), [=, m = std::move(mask)](Tape& t) {
    const double g = t.grad(self).item();
    const Tensor& hh = t.value(h);
    const Tensor& bb = t.value(bias);
    const std::int64_t fc = hh.dim(0);
    const std::int64_t pl = hh.dim(1) * hh.dim(2);
    Tensor gh(hh.shape), gb(bb.shape);
    for (std::int64_t f = 0; f < fc; ++f) {
      const double* hp = hh.data.data() + f * pl;
      const double* mp = m.data.data() + f * pl;
      double* gp = gh.data.data() + f * pl;
      double acc = 0.0;
      for (std::int64_t i = 0; i < pl; ++i) {
        gp[i] = g * bb.data[static_cast<std::size_t>(f)] * mp[i];
        acc += mp[i] * hp[i];
      }
      gb.data[static_cast<std::size_t>(f)] = g * acc;
    }
    t.accumulate_grad(h, gh);
    t.accumulate_grad(bias, gb);
  });
}

Var ce_from_logits_t(Tape& tape, Var logits, std::int64_t label) {
  const Tensor& l = tape.value(logits);
  if (l.rank() != 1 || label < 0 || label >= l.dim(0)) {
    throw_data("ce_from_logits: label " + std::to_string(label) + " invalid for logits " +
               shape_str(l.shape));
  }
  const double lse = log_sum_exp(l);
  const double v = lse - l.data[static_cast<std::size_t>(label)];
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(v), [=](Tape& t) {
    const double g = t.grad(self).item();
    Tensor q = softmax_logits(t.value(logits));
    q.data[static_cast<std::size_t>(label)] -= 1.0;
    scale_in_place(q, g);
    t.accumulate_grad(logits, q);
  });
}

Var kl_logits_prior_t(Tape& tape, Var logits, Tensor prior) {
  const Tensor& l = tape.value(logits);
  if (l.shape != prior.shape) {
    throw_data("kl_logits_prior: logits " + shape_str(l.shape) + " vs prior " +
               shape_str(prior.shape));
  }
  // KL(q || pi) with q = softmax(logits), in log space:
  //   sum_i q_i * (logit_i - lse - log pi_i).
  const double lse = log_sum_exp(l);
  const Tensor q = softmax_logits(l);
  double kl = 0.0;
  for (std::size_t i = 0; i < q.data.size(); ++i) {
    if (prior.data[i] <= 0.0) {
      throw_numeric("kl_logits_prior: prior has non-positive entry " +
                    std::to_string(prior.data[i]));
    }
    kl += q.data[i] * (l.data[i] - lse - std::log(prior.data[i]));
  }
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(kl), [=, pi = std::move(prior)](Tape& t) {
    const double g = t.grad(self).item();
    const Tensor& lg = t.value(logits);
    const double shift = log_sum_exp(lg);
    const Tensor qq = softmax_logits(lg);
    double klv = 0.0;
    for (std::size_t i = 0; i < qq.data.size(); ++i) {
      klv += qq.data[i] * (lg.data[i] - shift - std::log(pi.data[i]));
    }
    // d KL / d logit_i = q_i * (log(q_i/pi_i) - KL).
    Tensor gl(lg.shape);
    for (std::size_t i = 0; i < qq.data.size(); ++i) {
      gl.data[i] = g * qq.data[i] * ((lg.data[i] - shift - std::log(pi.data[i])) - klv);
    }
    t.accumulate_grad(logits, gl);
  });
}

Var log_sum_exp_t(Tape& tape, Var v) {
  const double lse = log_sum_exp(tape.value(v));
  Var self{static_cast<std::int32_t>(tape.size())};
  return tape.emit(Tensor::scalar(lse), [=](Tape& t) {
    Tensor q = softmax_logits(t.value(v));
    scale_in_place(q, t.grad(self).item());
    t.accumulate_grad(v, q);
  });
}

double grad_check(const std::function<double(const Tensor&)>& value_fn,
                  const std::function<Tensor(const Tensor&)>& grad_fn, const Tensor& point,
                  double eps) {
  const Tensor g_ad = grad_fn(point);
  require_shape(g_ad, point.shape, "grad_check analytic gradient");
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.data.size(); ++i) {
    probe.data[i] = point.data[i] + eps;
    const double fp = value_fn(probe);
    probe.data[i] = point.data[i] - eps;
    const double fm = value_fn(probe);
    probe.data[i] = point.data[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw_numeric("grad_check: non-finite objective at probe coordinate " + std::to_string(i));
    }
    const double g_fd = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({1.0, std::abs(g_ad.data[i]), std::abs(g_fd)});
    const double err = std::abs(g_ad.data[i] - g_fd) / denom;
    worst = (err > worst) ? err : worst;
  }
  return worst;
}

}  // namespace dgm
