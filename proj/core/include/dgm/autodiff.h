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

#ifndef DGM_AUTODIFF_H_
#define DGM_AUTODIFF_H_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dgm/ops.h"
#include "dgm/tape.h"

namespace dgm {

// Differentiable tape operations. Each records its eagerly computed value
// plus an adjoint closure; gradients flow to every Var argument. Tensor
// arguments passed by const reference are treated as constants.

Var conv2d_t(Tape& tape, Var input, Var filters, Pad pad);
Var conv2d_transpose_t(Tape& tape, Var input, Var filters, Pad pad, const Shape& out_shape);

// Convolution of a constant input (no gradient flows to it); the first
// layer of the bottom-up pass, where the image is data.
Var conv2d_const_in_t(Tape& tape, Tensor input, Var filters, Pad pad);

// Adds bias[f] to every spatial position of feature map f.
Var add_bias_t(Tape& tape, Var input, Var bias);

Var relu_t(Tape& tape, Var input);
Var nrelu_t(Tape& tape, Var input);
Var leaky_relu_t(Tape& tape, Var input, double alpha);
// min(x, alpha*x): the min-branch rectifier in leaky mode.
Var nleaky_relu_t(Tape& tape, Var input, double alpha);

// Pooling with gradient routed to the selected element of each window.
struct PoolVar {
  Var values;
  IndexTensor indices;
};
PoolVar maxpool_t(Tape& tape, Var input, std::int64_t window, std::int64_t stride);
PoolVar minpool_t(Tape& tape, Var input, std::int64_t window, std::int64_t stride);

// Scatter to fixed indices (the generative unpooling: translation latents
// are frozen constants during a gradient step).
Var unpool_fixed_t(Tape& tape, Var values, IndexTensor indices, const Shape& out_shape);

// Elementwise product with a constant mask (frozen switching latents).
Var mul_mask_t(Tape& tape, Var input, Tensor mask);

Var add_t(Tape& tape, Var a, Var b);
Var sub_t(Tape& tape, Var a, Var b);
Var neg_t(Tape& tape, Var a);
Var scale_t(Tape& tape, Var a, double c);
Var add_const_t(Tape& tape, Var a, Tensor c);

// Scalar dot products.
Var dot_t(Tape& tape, Var a, Var b);
Var dot_const_t(Tape& tape, Var a, Tensor b);

// 0.5 * squared L2 distance to a constant target.
Var sqdiff_half_t(Tape& tape, Var a, Tensor target);

// Builds a [K] vector from K scalar vars.
Var stack_scalars_t(Tape& tape, const std::vector<Var>& scalars);

// Stacks b's feature maps after a's (the dense-block concatenation).
Var concat_maps_t(Tape& tape, Var a, Var b);

// Weighted sum of scalar vars: sum_i coeff_i * v_i. Terms with coefficient
// zero must not be passed (callers skip them so disabled branches leave no
// trace on the tape).
Var weighted_sum_t(Tape& tape, const std::vector<std::pair<Var, double>>& terms);

// eta contribution of one layer: sum_f bias[f] * sum_{p in map f} mask[p]*h[p].
// Differentiable in h and bias; mask is a frozen constant.
Var masked_bias_dot_t(Tape& tape, Var h, Var bias, Tensor mask);

// -log softmax(logits)[label], computed with a log-sum-exp shift.
Var ce_from_logits_t(Tape& tape, Var logits, std::int64_t label);

// KL(softmax(logits) || prior) for a constant prior distribution.
Var kl_logits_prior_t(Tape& tape, Var logits, Tensor prior);

// log sum_i exp(v_i) of a vector var.
Var log_sum_exp_t(Tape& tape, Var v);

// Max relative error between the analytic gradient of a scalar function and
// central finite differences at `point`:
//   max_i |g_ad_i - g_fd_i| / max(1, |g_ad_i|, |g_fd_i|).
double grad_check(const std::function<double(const Tensor&)>& value_fn,
                  const std::function<Tensor(const Tensor&)>& grad_fn, const Tensor& point,
                  double eps);

}  // namespace dgm

#endif  // DGM_AUTODIFF_H_
