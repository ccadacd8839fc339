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

#ifndef DGM_RNG_H_
#define DGM_RNG_H_

#include <cstdint>
#include <random>

#include "dgm/tensor.h"

namespace dgm {

// Deterministic random source. All variate mappings are implemented here
// rather than with std distributions, whose output sequences vary across
// standard library implementations; a fixed seed must reproduce the same
// stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)), seed_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the paired variate is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in {0, ..., n-1}, unbiased via rejection.
  std::int64_t below(std::int64_t n);

  // Bernoulli draw with success probability p.
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; distinct k gives distinct streams.
  Rng fork(std::uint64_t k) const { return Rng(mix(seed_ ^ (0x9e3779b97f4a7c15ull * (k + 1)))); }

  std::uint64_t raw() { return engine_(); }

 private:
  static std::uint64_t mix(std::uint64_t x);

  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Tensor filled with independent N(0, stddev^2) draws.
Tensor randn(Rng& rng, Shape shape, double stddev = 1.0);

// Tensor filled with independent U[lo, hi) draws.
Tensor rand_uniform(Rng& rng, Shape shape, double lo = 0.0, double hi = 1.0);

}  // namespace dgm

#endif  // DGM_RNG_H_
