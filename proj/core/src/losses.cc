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

#include "dgm/losses.h"

#include <cmath>

#include "dgm/error.h"

namespace dgm {

void LossWeights::validate() const {
  const double all[] = {alpha_ce, alpha_rc, alpha_kl, alpha_mm, alpha_pn, alpha_max, alpha_min};
  for (double a : all) {
    if (a < 0.0 || !std::isfinite(a)) {
      throw_config("loss weights must be finite and non-negative");
    }
  }
  if (max_min && alpha_max + alpha_min <= 0.0) {
    throw_config("max-min mode needs alpha_max + alpha_min > 0");
  }
}

void LossReport::set(const std::string& name, double value, double weight) {
  components[name] = Entry{value, weight};
}

double LossReport::value_of(const std::string& name) const {
  const auto it = components.find(name);
  return it == components.end() ? 0.0 : it->second.value;
}

void LossReport::finalize() {
  total = 0.0;
  for (const auto& [name, e] : components) total += e.weight * e.value;
}

double cross_entropy_logits(const Tensor& logits, std::int64_t label) {
  if (logits.rank() != 1 || label < 0 || label >= logits.dim(0)) {
    throw_data("cross_entropy_logits: label " + std::to_string(label) + " invalid for logits " +
               shape_str(logits.shape));
  }
  return log_sum_exp(logits) - logits.data[static_cast<std::size_t>(label)];
}

Tensor rpn_denominator_scores(const DgmParams& params, Branch branch) {
  const Tensor zero(params.spec.input_shape);
  return forward(params, zero, branch).class_scores;
}

double rpn_value(double eta_i, std::int64_t y, const Tensor& denom_scores,
                 const std::vector<double>& pi) {
  if (denom_scores.numel() != static_cast<std::int64_t>(pi.size())) {
    throw_data("rpn_value: denominator scores and prior lengths differ");
  }
  std::vector<double> terms(pi.size());
  for (std::size_t c = 0; c < pi.size(); ++c) {
    terms[c] = denom_scores.data[c] + std::log(pi[c]);
  }
  return -(eta_i + std::log(pi[static_cast<std::size_t>(y)])) + log_sum_exp(terms);
}

double rpn_exact(const DgmParams& params, std::int64_t y, const LatentConfig& z,
                 const LatentEnumerator& en) {
  const std::int64_t k = params.num_classes();
  std::vector<double> joint;
  joint.reserve(static_cast<std::size_t>(k * en.count()));
  for (std::int64_t c = 0; c < k; ++c) {
    const double log_pi = std::log(params.pi[static_cast<std::size_t>(c)]);
    for (std::int64_t i = 0; i < en.count(); ++i) {
      const LatentConfig zc = en.config(i);
      const RenderStack stack = render(params, c, zc);
      joint.push_back(eta(params, zc, stack) + log_pi);
    }
  }
  const RenderStack own = render(params, y, z);
  const double own_eta = eta(params, z, own);
  return -(own_eta + std::log(params.pi[static_cast<std::size_t>(y)])) + log_sum_exp(joint);
}

double kl_value(const Tensor& logits, const std::vector<double>& pi) {
  if (logits.numel() != static_cast<std::int64_t>(pi.size())) {
    throw_data("kl_value: logits and prior lengths differ");
  }
  const double lse = log_sum_exp(logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double log_q = logits.data[i] - lse;
    kl += std::exp(log_q) * (log_q - std::log(pi[i]));
  }
  return kl;
}

Tensor training_logits(const InferenceTrace& trace, const std::vector<double>& pi) {
  Tensor l = trace.class_scores;
  if (l.numel() != static_cast<std::int64_t>(pi.size())) {
    throw_data("training_logits: prior length does not match class count");
  }
  for (std::size_t y = 0; y < pi.size(); ++y) l.data[y] += std::log(pi[y]);
  return l;
}

MomentMatching moment_matching(const std::vector<const RenderStack*>& stacks,
                               const std::vector<const InferenceTrace*>& traces,
                               bool with_grads) {
  if (stacks.empty() || stacks.size() != traces.size()) {
    throw_data("moment_matching: stack and trace batches must be non-empty and equal length");
  }
  const std::size_t n = stacks.size();
  const std::size_t layers = stacks[0]->h.size() - 1;
  MomentMatching mm;
  if (with_grads) {
    mm.d_h.resize(n);
    mm.d_psi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      mm.d_h[i].resize(layers);
      mm.d_psi[i].resize(layers);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const Shape& shape = stacks[0]->h[ell].shape;
    for (std::size_t i = 0; i < n; ++i) {
      require_shape(stacks[i]->h[ell], shape, "moment_matching rendered layer");
      require_shape(traces[i]->psi[ell], shape, "moment_matching activation layer");
      if (with_grads) {
        mm.d_h[i][ell - 1] = Tensor(shape);
        mm.d_psi[i][ell - 1] = Tensor(shape);
      }
    }
    const std::size_t dims = static_cast<std::size_t>(numel_of(shape));
    for (std::size_t d = 0; d < dims; ++d) {
      double mean_h = 0.0, mean_p = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mean_h += stacks[i]->h[ell].data[d];
        mean_p += traces[i]->psi[ell].data[d];
      }
      mean_h *= inv_n;
      mean_p *= inv_n;
      double var_h = 0.0, var_p = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dh = stacks[i]->h[ell].data[d] - mean_h;
        const double dp = traces[i]->psi[ell].data[d] - mean_p;
        var_h += dh * dh;
        var_p += dp * dp;
      }
      var_h *= inv_n;
      var_p *= inv_n;
      const bool floor_h = var_h < MomentMatching::kVarFloor;
      const bool floor_p = var_p < MomentMatching::kVarFloor;
      const double vh = floor_h ? MomentMatching::kVarFloor : var_h;
      const double vp = floor_p ? MomentMatching::kVarFloor : var_p;
      const double delta = mean_h - mean_p;
      mm.value += 0.5 * std::log(vp / vh) + (vh + delta * delta) / (2.0 * vp) - 0.5;
      if (!with_grads) continue;
      const double d_mean_h = delta / vp;
      const double d_var_h = floor_h ? 0.0 : 0.5 / vp - 0.5 / vh;
      const double d_var_p = floor_p ? 0.0 : 0.5 / vp - (vh + delta * delta) / (2.0 * vp * vp);
      for (std::size_t i = 0; i < n; ++i) {
        const double dh = stacks[i]->h[ell].data[d] - mean_h;
        const double dp = traces[i]->psi[ell].data[d] - mean_p;
        mm.d_h[i][ell - 1].data[d] = inv_n * (d_mean_h + d_var_h * 2.0 * dh);
        mm.d_psi[i][ell - 1].data[d] = inv_n * (-d_mean_h + d_var_p * 2.0 * dp);
      }
    }
  }
  return mm;
}

ParamVars emit_params(Tape& tape, const DgmParams& params) {
  ParamVars pv;
  for (const Tensor& m : params.mu) pv.mu.push_back(tape.input(m));
  for (const Tensor& g : params.gamma) pv.gamma.push_back(tape.input(g));
  for (const Tensor& b : params.bias) pv.bias.push_back(tape.input(b));
  for (const Tensor& s : params.skip) {
    pv.skip.push_back(s.numel() != 0 ? tape.input(s) : Var{});
  }
  return pv;
}

namespace {

Var rectify_t(Tape& tape, Var pre, Branch branch, double alpha) {
  if (branch == Branch::max) {
    return alpha > 0.0 ? leaky_relu_t(tape, pre, alpha) : relu_t(tape, pre);
  }
  return alpha > 0.0 ? nleaky_relu_t(tape, pre, alpha) : nrelu_t(tape, pre);
}

Tensor switch_mask_of(const Tensor& pooled, Branch branch, double alpha) {
  Tensor s(pooled.shape);
  for (std::size_t i = 0; i < pooled.data.size(); ++i) {
    const bool on = branch == Branch::max ? pooled.data[i] > 0.0 : pooled.data[i] < 0.0;
    s.data[i] = on ? 1.0 : alpha;
  }
  return s;
}

Tensor log_pi_tensor(const std::vector<double>& pi) {
  Tensor t({static_cast<std::int64_t>(pi.size())});
  for (std::size_t i = 0; i < pi.size(); ++i) t.data[i] = std::log(pi[i]);
  return t;
}

}  // namespace

ForwardVars forward_t(Tape& tape, const DgmParams& params, const ParamVars& pv, const Tensor& x,
                      Branch branch) {
  const ModelSpec& spec = params.spec;
  require_shape(x, spec.input_shape, "forward_t input");
  const double alpha = spec.leaky_alpha;
  ForwardVars fv;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  fv.psi.resize(layers + 1);
  fv.latents.s.resize(layers + 1);
  fv.latents.t.resize(layers + 1);
  if (layers == 0) fv.psi[0] = tape.constant(x);
  Var prev{};
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const LayerSpec& l = spec.layers[ell - 1];
    Var conv = ell == 1 ? conv2d_const_in_t(tape, x, pv.gamma[0], l.pad)
                        : conv2d_t(tape, prev, pv.gamma[ell - 1], l.pad);
    Var pre = add_bias_t(tape, conv, pv.bias[ell - 1]);
    if (spec.arch == ArchKind::residual) {
      if (pv.skip[ell - 1].valid()) {
        Var proj = ell == 1 ? conv2d_const_in_t(tape, x, pv.skip[0], Pad::valid)
                            : conv2d_t(tape, prev, pv.skip[ell - 1], Pad::valid);
        pre = add_t(tape, pre, proj);
      } else {
        pre = ell == 1 ? add_const_t(tape, pre, x) : add_t(tape, pre, prev);
      }
    }
    Var act = rectify_t(tape, pre, branch, alpha);
    Var pooled{};
    if (l.pool > 1) {
      PoolVar pr = branch == Branch::max ? maxpool_t(tape, act, l.pool, l.pool)
                                         : minpool_t(tape, act, l.pool, l.pool);
      pooled = pr.values;
      fv.latents.t[ell] = std::move(pr.indices);
    } else {
      pooled = act;
      fv.latents.t[ell] = identity_indices(spec.geom[ell - 1].out);
    }
    fv.latents.s[ell] = switch_mask_of(tape.value(pooled), branch, alpha);
    if (spec.arch == ArchKind::dense) {
      pooled = ell == 1 ? concat_maps_t(tape, pooled, tape.constant(x))
                        : concat_maps_t(tape, pooled, prev);
    }
    fv.psi[ell] = pooled;
    prev = pooled;
  }
  std::vector<Var> score_vars;
  score_vars.reserve(params.mu.size());
  for (std::size_t y = 0; y < params.mu.size(); ++y) {
    score_vars.push_back(dot_t(tape, pv.mu[y], fv.psi[layers]));
  }
  fv.scores = stack_scalars_t(tape, score_vars);
  fv.logits = add_const_t(tape, fv.scores, log_pi_tensor(params.pi));
  return fv;
}

RenderVars render_t(Tape& tape, const DgmParams& params, const ParamVars& pv, std::int64_t y,
                    const LatentConfig& z) {
  const ModelSpec& spec = params.spec;
  if (spec.arch != ArchKind::chain) {
    throw_config("render_t: rendering is defined for the plain layer chain only");
  }
  if (y < 0 || y >= params.num_classes()) {
    throw_data("render_t: class " + std::to_string(y) + " out of range");
  }
  const std::int64_t layers = spec.num_layers();
  RenderVars rv;
  rv.h.resize(static_cast<std::size_t>(layers) + 1);
  rv.h[static_cast<std::size_t>(layers)] = pv.mu[static_cast<std::size_t>(y)];
  std::vector<std::pair<Var, double>> eta_terms;
  for (std::int64_t ell = layers; ell >= 1; --ell) {
    const std::size_t li = static_cast<std::size_t>(ell);
    const ModelSpec::LayerGeom& g = spec.geom[li - 1];
    const LayerSpec& l = spec.layers[li - 1];
    eta_terms.emplace_back(masked_bias_dot_t(tape, rv.h[li], pv.bias[li - 1], z.s[li]), 1.0);
    Var masked = mul_mask_t(tape, rv.h[li], z.s[li]);
    Var placed = unpool_fixed_t(tape, masked, z.t[li], g.pre);
    rv.h[li - 1] = conv2d_transpose_t(tape, placed, pv.gamma[li - 1], l.pad, g.in);
  }
  rv.eta = eta_terms.empty() ? tape.constant(Tensor::scalar(0.0))
                             : weighted_sum_t(tape, eta_terms);
  return rv;
}

Var rpn_denominator_t(Tape& tape, const DgmParams& params, const ParamVars& pv, Branch branch) {
  const Tensor zero(params.spec.input_shape);
  ForwardVars fv = forward_t(tape, params, pv, zero, branch);
  return log_sum_exp_t(tape, fv.logits);
}

double max_min_ce_value(const DgmParams& params, const Tensor& x, std::int64_t y,
                        const LossWeights& w) {
  const InferenceTrace trace_max = forward(params, x, Branch::max);
  const double ce_max = cross_entropy_logits(training_logits(trace_max, params.pi), y);
  if (!w.max_min) return ce_max;
  double total = w.alpha_max * ce_max;
  if (w.alpha_min != 0.0) {
    const InferenceTrace trace_min = forward(params, x, Branch::min);
    total += w.alpha_min * cross_entropy_logits(training_logits(trace_min, params.pi), y);
  }
  return total;
}

LossReport semi_supervised_objective(const DgmParams& params, const std::vector<Tensor>& images,
                                     const std::vector<std::int64_t>& labels,
                                     const LossWeights& w) {
  w.validate();
  if (images.empty() || images.size() != labels.size()) {
    throw_data("semi_supervised_objective: images and labels must be non-empty, equal length");
  }
  std::size_t labeled = 0;
  for (std::int64_t l : labels) {
    if (l >= params.num_classes()) throw_data("semi_supervised_objective: label out of range");
    if (l >= 0) ++labeled;
  }
  if (labeled == 0 && w.alpha_ce > 0.0) {
    throw_config("semi_supervised_objective: cross-entropy weight is positive but the batch "
                 "has no labeled samples");
  }
  const bool need_render = w.alpha_rc > 0.0 || w.alpha_mm > 0.0;
  const std::size_t n = images.size();

  std::vector<InferenceTrace> traces;
  traces.reserve(n);
  std::vector<RenderStack> stacks;
  std::vector<std::int64_t> eff(n);
  double sum_ce_max = 0.0, sum_ce_min = 0.0, sum_rc = 0.0, sum_rpn = 0.0, sum_kl = 0.0;

  Tensor denom_scores;
  if (w.alpha_rc > 0.0 && w.alpha_pn > 0.0) denom_scores = rpn_denominator_scores(params);

  for (std::size_t i = 0; i < n; ++i) {
    traces.push_back(forward(params, images[i]));
    const InferenceTrace& tr = traces.back();
    eff[i] = labels[i] >= 0 ? labels[i] : pseudo_label(tr, params.pi);
    const Tensor logits = training_logits(tr, params.pi);
    if (w.alpha_kl > 0.0) sum_kl += kl_value(logits, params.pi);
    if (labels[i] >= 0 && w.alpha_ce > 0.0) {
      if (w.max_min) {
        sum_ce_max += cross_entropy_logits(logits, labels[i]);
        if (w.alpha_min != 0.0) {
          const InferenceTrace tmin = forward(params, images[i], Branch::min);
          sum_ce_min += cross_entropy_logits(training_logits(tmin, params.pi), labels[i]);
        }
      } else {
        sum_ce_max += cross_entropy_logits(logits, labels[i]);
      }
    }
    if (need_render) {
      stacks.push_back(render(params, eff[i], tr.latents));
      if (w.alpha_rc > 0.0) {
        const Tensor& h0 = stacks.back().h[0];
        double rc = 0.0;
        for (std::size_t d = 0; d < h0.data.size(); ++d) {
          const double diff = images[i].data[d] - h0.data[d];
          rc += diff * diff;
        }
        sum_rc += 0.5 * rc;
        if (w.alpha_pn > 0.0) {
          const double e = eta(params, tr.latents, stacks.back());
          sum_rpn += rpn_value(e, eff[i], denom_scores, params.pi);
        }
      }
    }
  }

  LossReport report;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (w.alpha_ce > 0.0) {
    const double inv_lab = 1.0 / static_cast<double>(labeled);
    if (w.max_min) {
      report.set("ce_max", sum_ce_max * inv_lab, w.alpha_ce * w.alpha_max);
      report.set("ce_min", sum_ce_min * inv_lab, w.alpha_ce * w.alpha_min);
    } else {
      report.set("ce", sum_ce_max * inv_lab, w.alpha_ce);
    }
  }
  if (w.alpha_rc > 0.0) {
    report.set("rc", sum_rc * inv_n, w.alpha_rc);
    if (w.alpha_pn > 0.0) report.set("rpn", sum_rpn * inv_n, w.alpha_rc * w.alpha_pn);
  }
  if (w.alpha_kl > 0.0) report.set("kl", sum_kl * inv_n, w.alpha_kl);
  if (w.alpha_mm > 0.0) {
    std::vector<const RenderStack*> sp;
    std::vector<const InferenceTrace*> tp;
    for (std::size_t i = 0; i < n; ++i) {
      sp.push_back(&stacks[i]);
      tp.push_back(&traces[i]);
    }
    report.set("mm", moment_matching(sp, tp, false).value, w.alpha_mm);
  }
  report.finalize();
  return report;
}

}  // namespace dgm
