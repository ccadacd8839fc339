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

#ifndef DGM_MODEL_H_
#define DGM_MODEL_H_

#include <cstdint>
#include <vector>

#include "dgm/ops.h"
#include "dgm/rng.h"
#include "dgm/tensor.h"

namespace dgm {

enum class ArchKind { chain, residual, dense };

// One layer of the generative chain (equivalently, of the inference CNN).
struct LayerSpec {
  std::int64_t filters = 1;  // feature maps rendered at this layer
  std::int64_t kernel = 3;   // square template extent
  Pad pad = Pad::valid;
  std::int64_t pool = 1;     // pooling window == stride; 1 disables pooling
};

// Static architecture: the layer chain and the shape bookkeeping derived
// from it. Layer index ell runs 1..L; geom[ell-1] describes layer ell.
struct ModelSpec {
  ArchKind arch = ArchKind::chain;
  std::int64_t classes = 2;  // K
  Shape input_shape;         // D(0) = [channels, height, width]
  std::vector<LayerSpec> layers;
  double leaky_alpha = 0.0;  // 0 = hard switching {0,1}; >0 = {alpha,1}

  struct LayerGeom {
    Shape in;   // D(ell-1), as seen by this layer's convolution
    Shape pre;  // pre-pool extent [F, H', W']
    Shape out;  // D(ell)
  };
  std::vector<LayerGeom> geom;

  std::int64_t num_layers() const { return static_cast<std::int64_t>(layers.size()); }
  const Shape& top_shape() const;  // D(L), home of the class templates

  // Computes geom and checks the shape chain; throws on violations
  // (including the residual/dense structural rules).
  void resolve();
};

// Every learned symbol of the model.
struct DgmParams {
  ModelSpec spec;
  std::vector<Tensor> mu;     // K class templates, shape D(L)
  std::vector<Tensor> gamma;  // L rendering template banks, [F, C_in, k, k]
  std::vector<Tensor> bias;   // L per-feature-map biases, [F]
  std::vector<Tensor> skip;   // residual projections [F, C_in, 1, 1]; empty = identity
  std::vector<double> pi;     // K class priors
  double sigma = 0.1;

  std::int64_t num_classes() const { return spec.classes; }
  std::int64_t num_layers() const { return spec.num_layers(); }
};

// Fresh parameters: weights N(0, 1/fan_in), biases zero, priors uniform.
DgmParams init_params(ModelSpec spec, Rng& rng, double sigma = 0.1);

// Structural validation: shape chain, sum(pi)=1, pi >= prior_floor, sigma>0.
void validate_params(const DgmParams& params, double prior_floor = 0.01);

// One rendering path's latent choices.
//   s[ell]: switching map over D(ell); values in {0,1} ({alpha,1} in leaky mode)
//   t[ell]: per coarse position, flat spatial index into the pre-pool plane
struct LatentConfig {
  std::vector<Tensor> s;       // index 0 unused; 1..L
  std::vector<IndexTensor> t;  // index 0 unused; 1..L
};

// Intermediate rendered images h(L)..h(0); h[L] = mu(y).
struct RenderStack {
  std::vector<Tensor> h;  // index 0..L
};

// Identity pooling indices for a pool-free layer (each coarse position maps
// to itself).
IndexTensor identity_indices(const Shape& coarse);

// Top-down rendering: h(ell-1) = ConvT(Gamma(ell), Unpool_t(s (.) h(ell))).
RenderStack render(const DgmParams& params, std::int64_t y, const LatentConfig& z);

// eta(y,z) = sum_ell <bias(ell), s(ell) (.) h(ell)> with bias broadcast per
// feature map over the coarse grid.
double eta(const DgmParams& params, const LatentConfig& z, const RenderStack& stack);

// Non-negativity monitor: min over ell in [1,L] of min(h(ell)). The layer-0
// image is excluded; the max-product equality needs only the coarse layers.
double min_h(const RenderStack& stack);

// Deterministic mixed-radix walk over all latent configurations. Digits are
// ordered layer 1..L, within a layer all s positions then all t positions.
class LatentEnumerator {
 public:
  // Throws a capacity error if the configuration count exceeds max_configs.
  LatentEnumerator(const ModelSpec& spec, std::int64_t max_configs = kDefaultGuard);

  std::int64_t count() const { return count_; }
  LatentConfig config(std::int64_t index) const;
  std::int64_t index_of(const LatentConfig& z) const;

  static constexpr std::int64_t kDefaultGuard = std::int64_t{1} << 20;

 private:
  struct Digit {
    std::int64_t layer;     // 1..L
    bool is_s;              // s digit or t digit
    std::int64_t position;  // flat position in D(layer)
    std::int64_t radix;     // 2 for s, pool^2 for t
  };
  const ModelSpec* spec_;
  std::vector<Digit> digits_;
  std::int64_t count_ = 1;
};

// log of the total number of rendering paths per class (digit radix sum),
// usable when the count itself overflows.
double log_path_count(const ModelSpec& spec);

// Exact prior over z given y. prior_logits returns eta(y,z)/sigma^2 in
// enumeration order; prior normalizes it to a categorical.
std::vector<double> prior_logits(const DgmParams& params, std::int64_t y,
                                 const LatentEnumerator& en);
std::vector<double> prior(const DgmParams& params, std::int64_t y, const LatentEnumerator& en);

// Single-site Gibbs over s then t sites, exact conditionals from eta ratios;
// starts from a uniform random configuration.
LatentConfig sample_z(const DgmParams& params, std::int64_t y, Rng& rng, std::int64_t n_sweeps);

// Uniform random latent configuration (the Gibbs chain's starting state).
LatentConfig random_latents(const ModelSpec& spec, Rng& rng);

// Alg.-1 image: render(y,z).h(0) plus iid N(0, sigma^2) pixel noise.
Tensor sample_image(const DgmParams& params, std::int64_t y, const LatentConfig& z, Rng& rng);

}  // namespace dgm

#endif  // DGM_MODEL_H_
