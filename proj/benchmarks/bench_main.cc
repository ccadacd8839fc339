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

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "dgm/bounds.h"
#include "dgm/data.h"
#include "dgm/inference.h"
#include "dgm/losses.h"
#include "dgm/model.h"
#include "dgm/rng.h"
#include "dgm/train.h"

namespace {

dgm::ModelSpec digit_spec(double width) {
  dgm::ModelSpec spec;
  spec.classes = 10;
  spec.input_shape = dgm::Shape{1, 28, 28};
  spec.layers = {
      {std::max<std::int64_t>(1, std::llround(32 * width)), 5, dgm::Pad::full, 2},
      {std::max<std::int64_t>(1, std::llround(64 * width)), 3, dgm::Pad::valid, 1},
      {std::max<std::int64_t>(1, std::llround(64 * width)), 3, dgm::Pad::full, 2},
      {std::max<std::int64_t>(1, std::llround(128 * width)), 3, dgm::Pad::valid, 6},
  };
  spec.resolve();
  return spec;
}

dgm::DgmParams digit_params(double width) {
  dgm::Rng rng(7);
  return dgm::init_params(digit_spec(width), rng);
}

void BM_ForwardDigits(benchmark::State& state) {
  const double width = static_cast<double>(state.range(0)) / 32.0;
  const dgm::DgmParams params = digit_params(width);
  dgm::Rng rng(11);
  const dgm::Tensor x = dgm::randn(rng, params.spec.input_shape);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dgm::forward(params, x));
  }
}
BENCHMARK(BM_ForwardDigits)->Arg(4)->Arg(8)->Arg(16);

void BM_RenderDigits(benchmark::State& state) {
  const double width = static_cast<double>(state.range(0)) / 32.0;
  const dgm::DgmParams params = digit_params(width);
  dgm::Rng rng(13);
  const dgm::LatentConfig z = dgm::random_latents(params.spec, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dgm::render(params, 3, z));
  }
}
BENCHMARK(BM_RenderDigits)->Arg(4)->Arg(8)->Arg(16);

void BM_ObjectiveGradsDigits(benchmark::State& state) {
  const dgm::DgmParams params = digit_params(0.125);
  dgm::Rng rng(17);
  std::vector<dgm::Tensor> images;
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 8; ++i) {
    images.push_back(dgm::randn(rng, params.spec.input_shape));
    labels.push_back(i % params.num_classes());
  }
  const dgm::LossWeights w;
  dgm::ParamGrads grads;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dgm::objective_with_grads(params, images, labels, w, 1, &grads));
  }
}
BENCHMARK(BM_ObjectiveGradsDigits);

void BM_GibbsSweepDigits(benchmark::State& state) {
  const dgm::DgmParams params = digit_params(0.125);
  dgm::Rng rng(19);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dgm::sample_z(params, 2, rng, 1));
  }
}
BENCHMARK(BM_GibbsSweepDigits);

void BM_EnumeratedBounds(benchmark::State& state) {
  const dgm::DgmParams params = dgm::random_micro_params(23);
  dgm::Rng rng(29);
  const dgm::Dataset data = dgm::synth_dataset(params, 4, 1.0, rng).data;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        dgm::verify_ce_sandwich(params, data, params.sigma, 23));
  }
}
BENCHMARK(BM_EnumeratedBounds);

}  // namespace

BENCHMARK_MAIN();
