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

#ifndef DGM_BOUNDS_H_
#define DGM_BOUNDS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dgm/data.h"
#include "dgm/model.h"

namespace dgm {

// One verified inequality chain lhs <= mid <= rhs. Slack is the smaller of
// the two gaps; holds means slack >= -1e-9 (theorems get a hair of float
// headroom, nothing more). Single-sided checks set mid = lhs.
struct BoundReport {
  std::string theorem;
  std::uint64_t seed = 0;
  double lhs = 0.0;
  double mid = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = false;
};

// Tolerance shared by every bound check.
inline constexpr double kBoundSlackTol = -1e-9;

BoundReport make_report(const std::string& theorem, std::uint64_t seed, double lhs, double mid,
                        double rhs);

// Conditional-likelihood sandwich on an enumerable model: the mean over the
// dataset of max_z log p(y_i | x_i, z) lies between the negative
// cross entropy -H(p,q) and -H(p,q) plus an explicit gap term plus log K.
// Class templates are rescaled per (y,z) inside the verifier so every
// rendered image has the same norm; training parameters are not touched.
BoundReport verify_ce_sandwich(const DgmParams& params, const Dataset& data, double sigma,
                               std::uint64_t seed = 0);

// Relaxed-objective bracketing of the exact unsupervised negative log
// likelihood U_n by its forward-pass relaxation V_n (both directions; gamma
// floor gamma_bar defaults to 0.01).
std::vector<BoundReport> verify_un_vn(const DgmParams& params, const Dataset& data,
                                      double gamma_bar = 0.01, std::uint64_t seed = 0);

// Full-posterior sandwich: -log|L| - H <= mean_i max_z log p(y_i, z | x_i)
// <= -H, exact by enumeration.
BoundReport verify_posterior_bounds(const DgmParams& params, const Dataset& data,
                                    std::uint64_t seed = 0);

// Sandwiches that drop the equal-norm requirement: the model is used as-is,
// the extreme rendered norms M1 <= ||h(y,z;0)|| <= M2 are recorded, and both
// sides carry the correction W = (M2^2 - M1^2) / (2 sigma^2). Emits one row
// for the conditional-likelihood chain and one for the full posterior.
std::vector<BoundReport> verify_normfree_bounds(const DgmParams& params, const Dataset& data,
                                                double sigma, std::uint64_t seed = 0);

// Conjugacy of prior and posterior: log p(y,z|x) - log p(y,z) minus
// <h(y,z;0), x>/sigma^2 must be constant over (y,z); returns the largest
// deviation from constancy.
double conjugate_form_check(const DgmParams& params, const Tensor& x);

// Distinct (y, z*) pairs the E-step picks across the dataset, out of the
// K * |L_z| possible rendering paths.
struct ActivePaths {
  std::int64_t active = 0;
  std::int64_t total = 0;
  double ratio = 0.0;
};

ActivePaths count_active_paths(const DgmParams& params, const Dataset& data);

// Random enumerable micro-model (tiny spatial dims, at most two layers,
// path count capped well below the enumeration guard). With nonneg set, the
// class templates and every rendering bank above layer 1 are drawn
// non-negative, which forces h(ell) >= 0 for ell in [1, L] and puts the
// model in the regime where the layer-wise max equals the network pass.
// force_layers > 0 pins the depth instead of drawing it.
DgmParams random_micro_params(std::uint64_t seed, bool nonneg = false,
                              std::int64_t force_layers = 0);

// CSV row "theorem,seed,lhs,mid,rhs,slack,holds" (header written separately
// by the caller).
std::string bound_csv_row(const BoundReport& r);
inline constexpr const char* kBoundCsvHeader = "theorem,seed,lhs,mid,rhs,slack,holds";

}  // namespace dgm

#endif  // DGM_BOUNDS_H_
