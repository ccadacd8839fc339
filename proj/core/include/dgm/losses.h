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

#ifndef DGM_LOSSES_H_
#define DGM_LOSSES_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgm/autodiff.h"
#include "dgm/inference.h"
#include "dgm/model.h"

namespace dgm {

// Mixing weights of the full objective:
//   alpha_rc * mean(rc_i + alpha_pn * rpn_i)        over all samples
// + alpha_ce * mean(ce_i)                           over labeled samples
// + alpha_kl * mean(kl_i)                           over all samples
// + alpha_mm * mm                                   batch statistic
// With the max-min branch enabled, ce_i becomes
//   alpha_max * ce(max branch) + alpha_min * ce(min branch).
struct LossWeights {
  double alpha_ce = 1.0;
  double alpha_rc = 0.5;
  double alpha_kl = 0.5;
  double alpha_mm = 0.5;
  double alpha_pn = 1.0;
  double alpha_max = 1.0;
  double alpha_min = 0.0;
  bool max_min = false;

  void validate() const;
};

// Per-component loss values with the weights that mixed them.
struct LossReport {
  struct Entry {
    double value = 0.0;
    double weight = 0.0;
  };
  std::map<std::string, Entry> components;
  double total = 0.0;

  void set(const std::string& name, double value, double weight);
  double value_of(const std::string& name) const;  // 0 when absent
  // Recomputes total = sum(weight * value) over the present components.
  void finalize();
};

// ---- Plain (value-only) losses ----

// -log softmax(logits)[label], in log space.
double cross_entropy_logits(const Tensor& logits, std::int64_t label);

// Class scores of the bias-only network: a forward pass on x = 0, whose
// duality meaning is max_z eta(y, z) per class. Shared by every sample's
// rendering-path normalizer.
Tensor rpn_denominator_scores(const DgmParams& params, Branch branch = Branch::max);

// Rendering-path regularizer for one sample:
//   -(eta_i + log pi_y) + log sum_y' exp(max_z eta(y',z) + log pi_y').
double rpn_value(double eta_i, std::int64_t y, const Tensor& denom_scores,
                 const std::vector<double>& pi);

// Exact variant on enumerable models: the full joint normalizer
// log sum_{y',z'} exp(eta + log pi) replaces the per-class max.
double rpn_exact(const DgmParams& params, std::int64_t y, const LatentConfig& z,
                 const LatentEnumerator& en);

// KL(softmax(logits) || pi).
double kl_value(const Tensor& logits, const std::vector<double>& pi);

// Unscaled training logits: class_scores + log pi.
Tensor training_logits(const InferenceTrace& trace, const std::vector<double>& pi);

// ---- Moment matching ----

// Per layer ell in 1..L, per coordinate: KL between the batch Gaussian of
// the rendered h(ell) and the batch Gaussian of the activations psi(ell),
// summed over coordinates and layers. Variances are floored at kVarFloor
// so coordinates that are near-constant across the batch contribute a
// bounded mean-gap penalty instead of a divergent ratio.
struct MomentMatching {
  double value = 0.0;
  // d value / d h_i(ell) and d value / d psi_i(ell); filled when requested.
  std::vector<std::vector<Tensor>> d_h;    // [sample][layer 1..L at slot ell-1]
  std::vector<std::vector<Tensor>> d_psi;  // [sample][layer 1..L at slot ell-1]

  static constexpr double kVarFloor = 1e-2;
};

MomentMatching moment_matching(const std::vector<const RenderStack*>& stacks,
                               const std::vector<const InferenceTrace*>& traces,
                               bool with_grads);

// ---- Tape builders (the differentiable twins) ----

// Tape handles for every parameter group, in checkpoint declaration order.
struct ParamVars {
  std::vector<Var> mu;
  std::vector<Var> gamma;
  std::vector<Var> bias;
  std::vector<Var> skip;  // invalid Var for identity-skip layers
};

ParamVars emit_params(Tape& tape, const DgmParams& params);

// Differentiable forward pass; x enters as a constant.
struct ForwardVars {
  std::vector<Var> psi;  // slots 0..L; psi[0] invalid (x is not a Var)
  Var scores;            // [K]
  Var logits;            // [K], class_scores + log pi (training convention)
  LatentConfig latents;
};

ForwardVars forward_t(Tape& tape, const DgmParams& params, const ParamVars& pv, const Tensor& x,
                      Branch branch);

// Differentiable rendering of a frozen latent configuration.
struct RenderVars {
  std::vector<Var> h;  // 0..L
  Var eta;             // scalar
};

RenderVars render_t(Tape& tape, const DgmParams& params, const ParamVars& pv, std::int64_t y,
                    const LatentConfig& z);

// log sum_y exp(scores_y + log pi_y) of the bias-only forward: the shared
// x-independent rendering-path normalizer, on its own tape.
Var rpn_denominator_t(Tape& tape, const DgmParams& params, const ParamVars& pv, Branch branch);

// ---- Assembled per-sample objectives (value form) ----

// Weighted max/min-branch cross entropy of one sample. With max_min off this
// is exactly the plain cross entropy of the max branch.
double max_min_ce_value(const DgmParams& params, const Tensor& x, std::int64_t y,
                        const LossWeights& w);

// Full objective of one batch, value form (E-step conventions: labeled
// samples use their label, unlabeled samples their pseudo-label).
LossReport semi_supervised_objective(const DgmParams& params, const std::vector<Tensor>& images,
                                     const std::vector<std::int64_t>& labels,
                                     const LossWeights& w);

}  // namespace dgm

#endif  // DGM_LOSSES_H_
