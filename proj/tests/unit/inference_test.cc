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

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "dgm/bounds.h"
#include "dgm/error.h"
#include "dgm/inference.h"
#include "dgm/model.h"
#include "dgm/ops.h"
#include "dgm/rng.h"
#include "test_util.h"

using namespace dgm;
using dgm_test::make_tensor;
using dgm_test::max_abs_diff;
using dgm_test::one_layer_spec;

namespace {

// Identity-shaped single layer: 1x1 kernel, no pooling, weight 1, bias 0.
// The max-branch pass reduces to psi(1) = relu(x).
DgmParams identity_net() {
  ModelSpec spec = one_layer_spec(3, 1, 1, Pad::valid, 1);
  Rng rng(0);
  DgmParams params = init_params(spec, rng);
  params.gamma[0] = Tensor::full(Shape{1, 1, 1, 1}, 1.0);
  params.bias[0] = Tensor(Shape{1});
  return params;
}

}  // namespace

TEST_CASE("zero input with zero biases scores zero everywhere") {
  DgmParams params = random_micro_params(201);
  for (Tensor& b : params.bias) b = Tensor(b.shape);
  const Tensor x(params.spec.input_shape);
  const InferenceTrace trace = forward(params, x);
  for (const double v : trace.psi.back().data) CHECK(v == 0.0);
  for (const double v : trace.class_scores.data) CHECK(v == 0.0);
}

TEST_CASE("non-positive biases keep a zero input at zero scores") {
  DgmParams params = random_micro_params(203);
  for (Tensor& b : params.bias) {
    for (double& v : b.data) v = -std::fabs(v);
  }
  const Tensor x(params.spec.input_shape);
  const InferenceTrace trace = forward(params, x);
  for (const double v : trace.class_scores.data) CHECK(v == 0.0);
}

TEST_CASE("identity micro-net computes a plain rectification") {
  const DgmParams params = identity_net();
  Rng rng(21);
  const Tensor x = randn(rng, Shape{1, 3, 3});
  const InferenceTrace trace = forward(params, x);
  CHECK(max_abs_diff(trace.psi.back(), relu(x)) == 0.0);
}

TEST_CASE("trace switching masks follow the rectifier sign") {
  const DgmParams params = identity_net();
  const Tensor x = make_tensor(Shape{1, 3, 3}, {1, -1, 0, 2, -2, 3, -3, 4, 5});
  const InferenceTrace trace = forward(params, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(trace.latents.s[1].data[i] == (x.data[i] > 0.0 ? 1.0 : 0.0));
  }
}

TEST_CASE("forward pass equals the enumerated layer-wise maximum on non-negative models") {
  for (const std::uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
    const DgmParams params = random_micro_params(seed, true);
    const LatentEnumerator en(params.spec);
    Rng rng(seed + 100);
    const Tensor x = randn(rng, params.spec.input_shape);
    const InferenceTrace trace = forward(params, x);
    for (std::int64_t y = 0; y < params.num_classes(); ++y) {
      double best = -1e300;
      for (std::int64_t i = 0; i < en.count(); ++i) {
        const LatentConfig z = en.config(i);
        const RenderStack stack = render(params, y, z);
        best = std::max(best, dot(stack.h[0], x) + eta(params, z, stack));
      }
      CHECK(std::fabs(best - trace.class_scores.data[static_cast<std::size_t>(y)]) < 1e-9);
    }
  }
}

TEST_CASE("class scores decompose along the trace latents") {
  // Without non-negativity the max-product argument fails, but the score must
  // still equal <h(y, z-hat; 0), x> + eta at the trace's own latents.
  const DgmParams params = random_micro_params(207);
  Rng rng(22);
  const Tensor x = randn(rng, params.spec.input_shape);
  const InferenceTrace trace = forward(params, x);
  for (std::int64_t y = 0; y < params.num_classes(); ++y) {
    const RenderStack stack = render(params, y, trace.latents);
    const double recon = dot(stack.h[0], x) + eta(params, trace.latents, stack);
    CHECK(recon == doctest::Approx(trace.class_scores.data[static_cast<std::size_t>(y)])
                       .epsilon(1e-9));
  }
}

TEST_CASE("jmap picks the argmax class of the posterior logits") {
  InferenceTrace trace;
  trace.logits = make_tensor(Shape{3}, {1.0, 2.0, 0.5});
  trace.class_scores = trace.logits;
  const auto [y, z] = jmap_latents(trace);
  CHECK(y == 1);
  CHECK(z == &trace.latents);

  InferenceTrace single;
  single.logits = make_tensor(Shape{1}, {-4.0});
  single.class_scores = single.logits;
  CHECK(jmap_latents(single).first == 0);
}

TEST_CASE("pseudo labels use unscaled scores plus log priors") {
  InferenceTrace trace;
  trace.class_scores = make_tensor(Shape{2}, {1.0, 1.1});
  const std::vector<double> pi{0.9, 0.1};
  // 1.0 + log 0.9 > 1.1 + log 0.1, so the prior flips the argmax.
  CHECK(pseudo_label(trace, pi) == 0);
}

TEST_CASE("posterior is uniform for identical templates and priors") {
  DgmParams params = random_micro_params(211);
  for (std::size_t y = 1; y < params.mu.size(); ++y) params.mu[y] = params.mu[0];
  const double u = 1.0 / static_cast<double>(params.num_classes());
  params.pi.assign(params.mu.size(), u);
  Rng rng(23);
  const Tensor q = posterior(params, randn(rng, params.spec.input_shape));
  for (const double v : q.data) CHECK(v == doctest::Approx(u).epsilon(1e-12));
}

TEST_CASE("posterior collapses to the prior as sigma grows") {
  DgmParams params = random_micro_params(213);
  params.pi = {0.7, 0.2, 0.1};
  params.pi.resize(static_cast<std::size_t>(params.num_classes()));
  double sum = 0.0;
  for (const double v : params.pi) sum += v;
  for (double& v : params.pi) v /= sum;
  params.sigma = 1e6;
  Rng rng(24);
  const Tensor q = posterior(params, randn(rng, params.spec.input_shape));
  for (std::size_t y = 0; y < params.pi.size(); ++y) {
    CHECK(q.data[y] == doctest::Approx(params.pi[y]).epsilon(1e-4));
  }
}

TEST_CASE("posterior sums to one") {
  const DgmParams params = random_micro_params(217);
  Rng rng(25);
  const Tensor q = posterior(params, randn(rng, params.spec.input_shape, 2.0));
  double sum = 0.0;
  for (const double v : q.data) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reconstruct recovers a noiseless rendered image") {
  int done = 0;
  for (std::uint64_t seed = 31; seed < 500 && done < 5; ++seed) {
    const DgmParams params = random_micro_params(seed, true);
    const LatentEnumerator en(params.spec);
    Rng rng(seed);
    const std::int64_t y = rng.below(params.num_classes());
    const std::int64_t zi = rng.below(en.count());
    const LatentConfig z = en.config(zi);
    const RenderStack stack = render(params, y, z);
    const Tensor& x = stack.h[0];
    if (sqnorm(x) < 1e-6) continue;

    // Only count draws whose generating path is the unique score argmax;
    // otherwise the roundtrip is ambiguous by construction.
    double best = -1e300;
    double second = -1e300;
    std::int64_t best_i = -1;
    for (std::int64_t i = 0; i < en.count(); ++i) {
      const LatentConfig zc = en.config(i);
      const RenderStack sc = render(params, y, zc);
      const double v = dot(sc.h[0], x) + eta(params, zc, sc);
      if (v > best) {
        second = best;
        best = v;
        best_i = i;
      } else if (v > second) {
        second = v;
      }
    }
    if (best_i != zi || best - second < 1e-7) continue;

    const Tensor back = reconstruct(params, x, y);
    CHECK(max_abs_diff(back, x) < 1e-9);
    ++done;
  }
  CHECK(done == 5);
}

TEST_CASE("reconstruct of the zero image under zero biases is zero") {
  DgmParams params = random_micro_params(219, true);
  for (Tensor& b : params.bias) b = Tensor(b.shape);
  const Tensor x(params.spec.input_shape);
  const Tensor back = reconstruct(params, x, -1);
  for (const double v : back.data) CHECK(v == 0.0);
}

TEST_CASE("zero-bias reconstruction is positively homogeneous in the input") {
  const DgmParams base = random_micro_params(223, true);
  DgmParams params = base;
  for (Tensor& b : params.bias) b = Tensor(b.shape);
  Rng rng(26);
  const Tensor x = randn(rng, params.spec.input_shape);
  Tensor ax(x.shape);
  const double a = 2.5;
  for (std::size_t i = 0; i < x.data.size(); ++i) ax.data[i] = a * x.data[i];

  const Tensor r1 = reconstruct(params, x, 0);
  const Tensor r2 = reconstruct(params, ax, 0);
  // Scaling the input leaves every argmax decision unchanged, so the selected
  // latents agree and the rendered image is identical.
  CHECK(max_abs_diff(r1, r2) < 1e-12);
}

TEST_CASE("pure-skip residual pass carries the input through") {
  ModelSpec spec;
  spec.arch = ArchKind::residual;
  spec.classes = 2;
  spec.input_shape = Shape{1, 3, 3};
  spec.layers = {{1, 3, Pad::same, 1}};
  spec.resolve();
  Rng rng(27);
  DgmParams params = init_params(spec, rng);
  params.gamma[0] = Tensor(params.gamma[0].shape);
  params.bias[0] = Tensor(params.bias[0].shape);
  REQUIRE(params.skip[0].numel() == 0);  // identity skip for matching maps

  Tensor x = rand_uniform(rng, spec.input_shape, 0.1, 1.0);
  const InferenceTrace trace = res_forward(params, x, Branch::max);
  CHECK(max_abs_diff(trace.psi.back(), x) == 0.0);
}

TEST_CASE("dense pass stacks new maps onto the carried input") {
  ModelSpec spec;
  spec.arch = ArchKind::dense;
  spec.classes = 2;
  spec.input_shape = Shape{1, 3, 3};
  spec.layers = {{2, 3, Pad::same, 1}};
  spec.resolve();
  CHECK(spec.top_shape() == Shape{3, 3, 3});

  Rng rng(28);
  const DgmParams params = init_params(spec, rng);
  const Tensor x = randn(rng, spec.input_shape);
  const InferenceTrace trace = dense_forward(params, x, Branch::max);
  REQUIRE(trace.psi.back().shape == Shape{3, 3, 3});
  // The carried segment sits after the new maps and is the raw input.
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(trace.psi.back().data[2 * 9 + i] == x.data[i]);
  }
}

TEST_CASE("two-layer chain pass matches a hand composition of the ops") {
  const ModelSpec spec = dgm_test::two_layer_spec();
  Rng rng(29);
  const DgmParams params = init_params(spec, rng);
  const Tensor x = randn(rng, spec.input_shape);

  Tensor v1 = conv2d(x, params.gamma[0], spec.layers[0].pad);
  for (std::int64_t f = 0; f < v1.shape[0]; ++f) {
    for (std::int64_t p = 0; p < v1.shape[1] * v1.shape[2]; ++p) {
      v1.data[static_cast<std::size_t>(f * v1.shape[1] * v1.shape[2] + p)] +=
          params.bias[0].data[static_cast<std::size_t>(f)];
    }
  }
  const Tensor p1 = maxpool(relu(v1), spec.layers[0].pool, spec.layers[0].pool).values;

  Tensor v2 = conv2d(p1, params.gamma[1], spec.layers[1].pad);
  for (std::int64_t f = 0; f < v2.shape[0]; ++f) {
    for (std::int64_t p = 0; p < v2.shape[1] * v2.shape[2]; ++p) {
      v2.data[static_cast<std::size_t>(f * v2.shape[1] * v2.shape[2] + p)] +=
          params.bias[1].data[static_cast<std::size_t>(f)];
    }
  }
  const Tensor p2 = relu(v2);

  const InferenceTrace trace = chain_forward(params, x, Branch::max);
  CHECK(max_abs_diff(trace.psi[1], p1) < 1e-12);
  CHECK(max_abs_diff(trace.psi[2], p2) < 1e-12);
  for (std::int64_t y = 0; y < params.num_classes(); ++y) {
    CHECK(trace.class_scores.data[static_cast<std::size_t>(y)] ==
          doctest::Approx(dot(params.mu[static_cast<std::size_t>(y)], p2)).epsilon(1e-12));
  }
}

TEST_CASE("min branch negates the max branch of the negated weights") {
  // Per layer with pre-activation v: the min-branch output is exactly
  // -MaxPool(ReLU(-v)) because NReLU(v) = -ReLU(-v) and MinPool = -MaxPool(-).
  const ModelSpec spec = dgm_test::two_layer_spec();
  Rng rng(30);
  const DgmParams params = init_params(spec, rng);
  const Tensor x = randn(rng, spec.input_shape);
  const InferenceTrace mn = chain_forward(params, x, Branch::min);

  Tensor cur = x;
  for (std::size_t ell = 0; ell < spec.layers.size(); ++ell) {
    Tensor v = conv2d(cur, params.gamma[ell], spec.layers[ell].pad);
    const std::int64_t plane = v.shape[1] * v.shape[2];
    for (std::int64_t f = 0; f < v.shape[0]; ++f) {
      for (std::int64_t p = 0; p < plane; ++p) {
        v.data[static_cast<std::size_t>(f * plane + p)] +=
            params.bias[ell].data[static_cast<std::size_t>(f)];
      }
    }
    Tensor negv(v.shape);
    for (std::size_t i = 0; i < v.data.size(); ++i) negv.data[i] = -v.data[i];
    Tensor pooled = maxpool(relu(negv), spec.layers[ell].pool, spec.layers[ell].pool).values;
    for (double& val : pooled.data) val = -val;
    CHECK(max_abs_diff(mn.psi[ell + 1], pooled) == 0.0);
    cur = pooled;
  }
}

TEST_CASE("batch normalization") {
  const Tensor scale = Tensor::full(Shape{1}, 1.0);
  const Tensor shift = Tensor::full(Shape{1}, 0.25);

  SUBCASE("a constant batch maps to the shift") {
    const std::vector<Tensor> batch{Tensor::full(Shape{1, 2, 2}, 3.0),
                                    Tensor::full(Shape{1, 2, 2}, 3.0)};
    const std::vector<Tensor> out = batchnorm_layer(batch, scale, shift, 1e-5);
    for (const Tensor& t : out) {
      for (const double v : t.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
    }
  }

  SUBCASE("unit scale and zero shift standardize the batch") {
    Rng rng(31);
    std::vector<Tensor> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(randn(rng, Shape{2, 3, 3}, 2.0));
    const Tensor s2 = Tensor::full(Shape{2}, 1.0);
    const Tensor z2 = Tensor(Shape{2});
    const std::vector<Tensor> out = batchnorm_layer(batch, s2, z2, 0.0);

    for (std::int64_t f = 0; f < 2; ++f) {
      double mean = 0.0;
      double var = 0.0;
      std::int64_t n = 0;
      for (const Tensor& t : out) {
        for (std::int64_t p = 0; p < 9; ++p) {
          mean += t.data[static_cast<std::size_t>(f * 9 + p)];
          ++n;
        }
      }
      mean /= static_cast<double>(n);
      for (const Tensor& t : out) {
        for (std::int64_t p = 0; p < 9; ++p) {
          const double d = t.data[static_cast<std::size_t>(f * 9 + p)] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(n);
      CHECK(std::fabs(mean) < 1e-10);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("matches a two-pass normalization oracle") {
    Rng rng(32);
    std::vector<Tensor> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(randn(rng, Shape{1, 2, 2}));
    const Tensor sc = Tensor::full(Shape{1}, 1.5);
    const Tensor sh = Tensor::full(Shape{1}, -0.5);
    const double eps = 1e-5;
    const std::vector<Tensor> out = batchnorm_layer(batch, sc, sh, eps);

    double mean = 0.0;
    std::int64_t n = 0;
    for (const Tensor& t : batch) {
      for (const double v : t.data) {
        mean += v;
        ++n;
      }
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const Tensor& t : batch) {
      for (const double v : t.data) var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(n);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t p = 0; p < batch[i].data.size(); ++p) {
        const double want = (batch[i].data[p] - mean) / std::sqrt(var + eps) * 1.5 - 0.5;
        CHECK(out[i].data[p] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}
