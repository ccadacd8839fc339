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

#include "dgm/rng.h"

#include <cmath>

#include "dgm/error.h"

namespace dgm {

std::uint64_t Rng::mix(std::uint64_t x) {
  // splitmix64 finalizer; spreads nearby seeds across the state space.
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::int64_t Rng::below(std::int64_t n) {
  if (n <= 0) throw_data("Rng::below: n must be positive, got " + std::to_string(n));
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = (~0ull) - ((~0ull) % un + 1) % un;
  std::uint64_t r = engine_();
  while (r > limit) r = engine_();
  return static_cast<std::int64_t>(r % un);
}

Tensor randn(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

Tensor rand_uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace dgm
