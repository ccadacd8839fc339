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

#include "dgm/inference.h"

#include <algorithm>
#include <cmath>

#include "dgm/error.h"

namespace dgm {

namespace {

// Rectify pre-activations for the given branch; leaky slope applies to the
// suppressed side when the model runs in leaky mode.
Tensor rectify(const Tensor& pre, Branch branch, double alpha) {
  if (branch == Branch::max) {
    return alpha > 0.0 ? leaky_relu(pre, alpha) : relu(pre);
  }
  if (alpha <= 0.0) return nrelu(pre);
  Tensor out(pre.shape);
  for (std::size_t i = 0; i < pre.data.size(); ++i) {
    out.data[i] = pre.data[i] < 0.0 ? pre.data[i] : alpha * pre.data[i];
  }
  return out;
}

// Switching mask implied by the pooled pre-activation sign: the max branch
// renders where the selected pre-activation is positive, the min branch
// where it is negative; ties switch off (value alpha in leaky mode).
Tensor switch_mask(const Tensor& pooled, Branch branch, double alpha) {
  Tensor s(pooled.shape);
  for (std::size_t i = 0; i < pooled.data.size(); ++i) {
    const bool on = branch == Branch::max ? pooled.data[i] > 0.0 : pooled.data[i] < 0.0;
    s.data[i] = on ? 1.0 : alpha;
  }
  return s;
}

Tensor add_bias_plain(Tensor pre, const Tensor& b) {
  const std::int64_t plane = pre.dim(1) * pre.dim(2);
  for (std::int64_t f = 0; f < pre.dim(0); ++f) {
    double* row = pre.data.data() + f * plane;
    for (std::int64_t i = 0; i < plane; ++i) row[i] += b.data[static_cast<std::size_t>(f)];
  }
  return pre;
}

void finish_trace(const DgmParams& params, InferenceTrace& trace) {
  const Tensor& top = trace.psi.back();
  const std::int64_t k = params.num_classes();
  trace.class_scores = Tensor({k});
  trace.logits = Tensor({k});
  const double inv_s2 = 1.0 / (params.sigma * params.sigma);
  for (std::int64_t y = 0; y < k; ++y) {
    const double s = dot(params.mu[static_cast<std::size_t>(y)], top);
    trace.class_scores.data[static_cast<std::size_t>(y)] = s;
    trace.logits.data[static_cast<std::size_t>(y)] =
        inv_s2 * s + std::log(params.pi[static_cast<std::size_t>(y)]);
  }
}

}  // namespace

InferenceTrace chain_forward(const DgmParams& params, const Tensor& x, Branch branch) {
  const ModelSpec& spec = params.spec;
  require_shape(x, spec.input_shape, "forward input");
  const double alpha = spec.leaky_alpha;
  InferenceTrace trace;
  trace.branch = branch;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  trace.psi.reserve(layers + 1);
  trace.psi.push_back(x);
  trace.latents.s.resize(layers + 1);
  trace.latents.t.resize(layers + 1);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const LayerSpec& l = spec.layers[ell - 1];
    Tensor pre =
        add_bias_plain(conv2d(trace.psi[ell - 1], params.gamma[ell - 1], l.pad), params.bias[ell - 1]);
    const Tensor a = rectify(pre, branch, alpha);
    if (l.pool > 1) {
      PoolResult pooled =
          branch == Branch::max ? maxpool(a, l.pool, l.pool) : minpool(a, l.pool, l.pool);
      trace.latents.t[ell] = std::move(pooled.indices);
      trace.psi.push_back(std::move(pooled.values));
    } else {
      trace.latents.t[ell] = identity_indices(spec.geom[ell - 1].out);
      trace.psi.push_back(a);
    }
    trace.latents.s[ell] = switch_mask(trace.psi[ell], branch, alpha);
  }
  finish_trace(params, trace);
  return trace;
}

InferenceTrace res_forward(const DgmParams& params, const Tensor& x, Branch branch) {
  const ModelSpec& spec = params.spec;
  require_shape(x, spec.input_shape, "forward input");
  const double alpha = spec.leaky_alpha;
  InferenceTrace trace;
  trace.branch = branch;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  trace.psi.push_back(x);
  trace.latents.s.resize(layers + 1);
  trace.latents.t.resize(layers + 1);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const LayerSpec& l = spec.layers[ell - 1];
    const Tensor& prev = trace.psi[ell - 1];
    Tensor pre = add_bias_plain(conv2d(prev, params.gamma[ell - 1], l.pad), params.bias[ell - 1]);
    const Tensor& proj = params.skip[ell - 1];
    if (proj.numel() != 0) {
      axpy(1.0, conv2d(prev, proj, Pad::valid), pre);
    } else {
      if (prev.shape != pre.shape) {
        throw_config("res_forward: identity skip needs matching shapes, got " +
                     shape_str(prev.shape) + " vs " + shape_str(pre.shape));
      }
      axpy(1.0, prev, pre);
    }
    const Tensor a = rectify(pre, branch, alpha);
    if (l.pool > 1) {
      PoolResult pooled =
          branch == Branch::max ? maxpool(a, l.pool, l.pool) : minpool(a, l.pool, l.pool);
      trace.latents.t[ell] = std::move(pooled.indices);
      trace.psi.push_back(std::move(pooled.values));
    } else {
      trace.latents.t[ell] = identity_indices(spec.geom[ell - 1].out);
      trace.psi.push_back(a);
    }
    trace.latents.s[ell] = switch_mask(trace.psi[ell], branch, alpha);
  }
  finish_trace(params, trace);
  return trace;
}

InferenceTrace dense_forward(const DgmParams& params, const Tensor& x, Branch branch) {
  const ModelSpec& spec = params.spec;
  require_shape(x, spec.input_shape, "forward input");
  const double alpha = spec.leaky_alpha;
  InferenceTrace trace;
  trace.branch = branch;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  trace.psi.push_back(x);
  trace.latents.s.resize(layers + 1);
  trace.latents.t.resize(layers + 1);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const LayerSpec& l = spec.layers[ell - 1];
    const Tensor& prev = trace.psi[ell - 1];
    Tensor pre = add_bias_plain(conv2d(prev, params.gamma[ell - 1], l.pad), params.bias[ell - 1]);
    Tensor a = rectify(pre, branch, alpha);
    // New maps first, then the carried-through input maps.
    const Shape out_shape = spec.geom[ell - 1].out;
    Tensor cat(out_shape);
    std::copy(a.data.begin(), a.data.end(), cat.data.begin());
    std::copy(prev.data.begin(), prev.data.end(), cat.data.begin() + a.data.size());
    trace.latents.t[ell] = identity_indices(Shape{l.filters, out_shape[1], out_shape[2]});
    trace.latents.s[ell] = switch_mask(a, branch, alpha);
    trace.psi.push_back(std::move(cat));
  }
  finish_trace(params, trace);
  return trace;
}

InferenceTrace forward(const DgmParams& params, const Tensor& x, Branch branch) {
  switch (params.spec.arch) {
    case ArchKind::chain:
      return chain_forward(params, x, branch);
    case ArchKind::residual:
      return res_forward(params, x, branch);
    case ArchKind::dense:
      return dense_forward(params, x, branch);
  }
  throw_config("forward: unknown arch kind");
}

std::pair<std::int64_t, const LatentConfig*> jmap_latents(const InferenceTrace& trace) {
  return {argmax_index(trace.logits), &trace.latents};
}

std::int64_t pseudo_label(const InferenceTrace& trace, const std::vector<double>& pi) {
  if (pi.size() != trace.class_scores.data.size()) {
    throw_data("pseudo_label: prior length does not match class count");
  }
  Tensor scored = trace.class_scores;
  for (std::size_t y = 0; y < pi.size(); ++y) scored.data[y] += std::log(pi[y]);
  return argmax_index(scored);
}

Tensor posterior(const DgmParams& params, const Tensor& x) {
  return softmax_logits(forward(params, x).logits);
}

Tensor reconstruct(const DgmParams& params, const Tensor& x, std::int64_t y) {
  const InferenceTrace trace = forward(params, x);
  const std::int64_t cls = y < 0 ? argmax_index(trace.logits) : y;
  if (cls >= params.num_classes()) {
    throw_data("reconstruct: class " + std::to_string(cls) + " out of range");
  }
  return render(params, cls, trace.latents).h[0];
}

std::vector<Tensor> batchnorm_layer(const std::vector<Tensor>& batch, const Tensor& scale,
                                    const Tensor& shift, double eps) {
  if (batch.empty()) throw_data("batchnorm_layer: empty batch");
  const Shape& shape = batch[0].shape;
  const std::int64_t maps = shape[0];
  if (scale.shape != Shape{maps} || shift.shape != Shape{maps}) {
    throw_data("batchnorm_layer: scale/shift must have one entry per feature map");
  }
  const std::int64_t plane = shape[1] * shape[2];
  const double n = static_cast<double>(batch.size()) * static_cast<double>(plane);
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (const Tensor& t : batch) require_shape(t, shape, "batchnorm_layer input");
  for (std::int64_t f = 0; f < maps; ++f) {
    double mean = 0.0;
    for (const Tensor& t : batch) {
      const double* row = t.data.data() + f * plane;
      for (std::int64_t i = 0; i < plane; ++i) mean += row[i];
    }
    mean /= n;
    double var = 0.0;
    for (const Tensor& t : batch) {
      const double* row = t.data.data() + f * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = row[i] - mean;
        var += d * d;
      }
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    const double a = scale.data[static_cast<std::size_t>(f)];
    const double b = shift.data[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (out.size() <= i) out.emplace_back(shape);
      const double* row = batch[i].data.data() + f * plane;
      double* dst = out[i].data.data() + f * plane;
      for (std::int64_t j = 0; j < plane; ++j) dst[j] = (row[j] - mean) * inv * a + b;
    }
  }
  return out;
}

}  // namespace dgm
