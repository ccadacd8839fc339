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

#ifndef DGM_OPS_H_
#define DGM_OPS_H_

#include <cstdint>

#include "dgm/tensor.h"

namespace dgm {

// Zero-padding applied to the input before a convolution.
//   valid: no padding, output shrinks by k-1.
//   same:  (k-1)/2 on each side (odd kernels only), output keeps its extent.
//   full:  k-1 on each side, output grows by k-1.
enum class Pad { valid, same, full };

// Per-side padding for kernel extent k under the given mode.
std::int64_t pad_amount(Pad pad, std::int64_t k);

// Output spatial extent for input extent n, kernel extent k, padding mode.
std::int64_t conv_out_extent(Pad pad, std::int64_t n, std::int64_t k);

// Cross-correlation of input [C,H,W] with filters [F,C,kh,kw].
// Returns [F,H',W'] with H', W' per conv_out_extent.
Tensor conv2d(const Tensor& input, const Tensor& filters, Pad pad);

// Adjoint of conv2d in its input argument: maps a tensor shaped like
// conv2d's output back to input shape [C,H,W]. For all x, g:
//   dot(conv2d(x, f, pad), g) == dot(x, conv2d_transpose(g, f, pad, x.shape)).
Tensor conv2d_transpose(const Tensor& grad_out, const Tensor& filters, Pad pad,
                        const Shape& input_shape);

// Adjoint of conv2d in its filter argument: gradient of dot(conv2d(x,f),g)
// with respect to f. Returns a tensor of filter_shape [F,C,kh,kw].
Tensor conv2d_grad_filters(const Tensor& input, const Tensor& grad_out, Pad pad,
                           const Shape& filter_shape);

// Pooled values plus, per output position, the flat spatial index
// (row*W_in + col) of the selected input element within its channel plane.
struct PoolResult {
  Tensor values;
  IndexTensor indices;
};

// Max over each window; ties broken by lowest flat index. The window must
// tile the spatial extent exactly under the stride.
PoolResult maxpool(const Tensor& input, std::int64_t window, std::int64_t stride);

// Min over each window; same tie rule and tiling precondition as maxpool.
PoolResult minpool(const Tensor& input, std::int64_t window, std::int64_t stride);

// Scatter pooled values back to a [C,H,W] plane at the recorded indices,
// zero elsewhere. Adjoint of the value selection performed by maxpool.
Tensor unpool(const Tensor& values, const IndexTensor& indices, const Shape& input_shape);

Tensor relu(const Tensor& x);
Tensor nrelu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double alpha);

// Softmax computed with a log-sum-exp shift; safe for large logits.
Tensor softmax_logits(const Tensor& logits);

// log Σ exp(v_i), shifted by max(v).
double log_sum_exp(const Tensor& v);
double log_sum_exp(const std::vector<double>& v);

std::int64_t argmax_index(const Tensor& v);

}  // namespace dgm

#endif  // DGM_OPS_H_
