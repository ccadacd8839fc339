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

#ifndef DGM_INFERENCE_H_
#define DGM_INFERENCE_H_

#include <cstdint>
#include <utility>
#include <vector>

#include "dgm/model.h"
#include "dgm/tensor.h"

namespace dgm {

// Max branch is the standard ReLU/MaxPool pass; min branch shares weights
// but rectifies with NReLU and pools with MinPool.
enum class Branch { max, min };

// Result of one bottom-up pass: activations, the argmax latents they imply,
// and the class scores.
struct InferenceTrace {
  std::vector<Tensor> psi;  // psi[0] = x .. psi[L]
  LatentConfig latents;     // s*[ell] from rectifier sign, t*[ell] from pooling
  Tensor class_scores;      // [K], mu(y)' psi(L)
  Tensor logits;            // [K], class_scores/sigma^2 + log pi
  Branch branch = Branch::max;
};

// The CNN forward pass: per layer Conv + bias -> rectify -> pool, recording
// switching masks and pooling indices. Dispatches on the spec's arch kind.
InferenceTrace forward(const DgmParams& params, const Tensor& x, Branch branch = Branch::max);

// Plain-chain pass regardless of arch (the building block of forward).
InferenceTrace chain_forward(const DgmParams& params, const Tensor& x, Branch branch);

// Residual: pre-activation = Conv(W, psi) + b + skip(psi); identity skip
// when the map counts match, learned 1x1 projection otherwise.
InferenceTrace res_forward(const DgmParams& params, const Tensor& x, Branch branch = Branch::max);

// Dense: psi(ell) = concat(pool(rectify(Conv + b)), psi(ell-1)) along maps.
InferenceTrace dense_forward(const DgmParams& params, const Tensor& x,
                             Branch branch = Branch::max);

// (y*, z*): y* maximizes the posterior logits, z* is the trace's latents.
std::pair<std::int64_t, const LatentConfig*> jmap_latents(const InferenceTrace& trace);

// argmax_y(class_scores + log pi): the label a sample would be assigned if
// it carried none (the sigma-free training-side convention).
std::int64_t pseudo_label(const InferenceTrace& trace, const std::vector<double>& pi);

// q(y|x) = softmax(class_scores/sigma^2 + log pi).
Tensor posterior(const DgmParams& params, const Tensor& x);

// Top-down image from the bottom-up latents: render(y, z*).h(0).
// Pass y = -1 to use the trace's own argmax class.
Tensor reconstruct(const DgmParams& params, const Tensor& x, std::int64_t y);

// Per-feature-map batch normalization over batch and spatial positions:
// (v - mean) / sqrt(var + eps) * scale[f] + shift[f].
std::vector<Tensor> batchnorm_layer(const std::vector<Tensor>& batch, const Tensor& scale,
                                    const Tensor& shift, double eps);

}  // namespace dgm

#endif  // DGM_INFERENCE_H_
