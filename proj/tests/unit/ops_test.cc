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
#include "dgm/error.h"
#include "dgm/ops.h"
#include "dgm/rng.h"
#include "test_util.h"

using namespace dgm;
using dgm_test::make_tensor;
using dgm_test::max_abs_diff;

TEST_CASE("conv2d zero input stays zero") {
  const Tensor x(Shape{1, 3, 3});
  Rng rng(1);
  const Tensor f = randn(rng, Shape{2, 1, 2, 2});
  const Tensor out = conv2d(x, f, Pad::valid);
  for (const double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d scalar product") {
  const Tensor x = make_tensor(Shape{1, 1, 1}, {2.0});
  const Tensor f = make_tensor(Shape{1, 1, 1, 1}, {3.0});
  const Tensor out = conv2d(x, f, Pad::valid);
  CHECK(out.numel() == 1);
  CHECK(out.data[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("conv2d 3x3 against hand summation") {
  const Tensor x = make_tensor(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor f = make_tensor(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
  const Tensor out = conv2d(x, f, Pad::valid);
  REQUIRE(out.shape == Shape{1, 2, 2});
  CHECK(out.data[0] == doctest::Approx(12.0));
  CHECK(out.data[1] == doctest::Approx(16.0));
  CHECK(out.data[2] == doctest::Approx(24.0));
  CHECK(out.data[3] == doctest::Approx(28.0));
}

TEST_CASE("conv2d linearity over 50 random triples") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = randn(rng, Shape{2, 5, 5});
    const Tensor y = randn(rng, Shape{2, 5, 5});
    const Tensor f = randn(rng, Shape{3, 2, 3, 3});
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const Pad pad = trial % 3 == 0 ? Pad::valid : (trial % 3 == 1 ? Pad::same : Pad::full);
    Tensor mix(x.shape);
    for (std::size_t i = 0; i < mix.data.size(); ++i) {
      mix.data[i] = a * x.data[i] + b * y.data[i];
    }
    const Tensor lhs = conv2d(mix, f, pad);
    const Tensor cx = conv2d(x, f, pad);
    const Tensor cy = conv2d(y, f, pad);
    Tensor rhs(lhs.shape);
    for (std::size_t i = 0; i < rhs.data.size(); ++i) {
      rhs.data[i] = a * cx.data[i] + b * cy.data[i];
    }
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("conv2d adjoint identities") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Pad pad = trial % 3 == 0 ? Pad::valid : (trial % 3 == 1 ? Pad::same : Pad::full);
    const Tensor x = randn(rng, Shape{2, 4, 4});
    const Shape fshape{2, 2, 3, 3};
    const Tensor f = randn(rng, fshape);
    const Tensor out = conv2d(x, f, pad);
    const Tensor g = randn(rng, out.shape);

    double forward_dot = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) forward_dot += out.data[i] * g.data[i];

    const Tensor gx = conv2d_transpose(g, f, pad, x.shape);
    double input_dot = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) input_dot += x.data[i] * gx.data[i];
    CHECK(forward_dot == doctest::Approx(input_dot).epsilon(1e-10));

    const Tensor gf = conv2d_grad_filters(x, g, pad, fshape);
    double filter_dot = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) filter_dot += f.data[i] * gf.data[i];
    CHECK(forward_dot == doctest::Approx(filter_dot).epsilon(1e-10));
  }
}

TEST_CASE("pad arithmetic") {
  CHECK(pad_amount(Pad::valid, 5) == 0);
  CHECK(pad_amount(Pad::same, 5) == 2);
  CHECK(pad_amount(Pad::full, 5) == 4);
  CHECK(conv_out_extent(Pad::valid, 28, 5) == 24);
  CHECK(conv_out_extent(Pad::same, 28, 5) == 28);
  CHECK(conv_out_extent(Pad::full, 28, 5) == 32);
}

TEST_CASE("maxpool picks the window max and its flat index") {
  const Tensor x = make_tensor(Shape{1, 2, 2}, {1, 2, 3, 4});
  const PoolResult r = maxpool(x, 2, 2);
  REQUIRE(r.values.numel() == 1);
  CHECK(r.values.data[0] == 4.0);
  CHECK(r.indices.data[0] == 3);
}

TEST_CASE("maxpool enumeration example") {
  const Tensor x = make_tensor(Shape{1, 2, 2}, {5, 1, 2, 8});
  CHECK(maxpool(x, 2, 2).values.data[0] == 8.0);
}

TEST_CASE("pool ties break to the lowest flat index") {
  const Tensor x = Tensor::full(Shape{1, 4, 4}, 3.5);
  const PoolResult mx = maxpool(x, 2, 2);
  const PoolResult mn = minpool(x, 2, 2);
  const std::int64_t expected[] = {0, 2, 8, 10};
  for (int i = 0; i < 4; ++i) {
    CHECK(mx.indices.data[static_cast<std::size_t>(i)] == expected[i]);
    CHECK(mn.indices.data[static_cast<std::size_t>(i)] == expected[i]);
  }
}

TEST_CASE("minpool basics") {
  const Tensor x = make_tensor(Shape{1, 2, 2}, {1, 2, 3, 4});
  CHECK(minpool(x, 2, 2).values.data[0] == 1.0);
}

TEST_CASE("minpool negation duality on 100 random tensors") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = randn(rng, Shape{2, 4, 4});
    Tensor nx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) nx.data[i] = -x.data[i];
    const PoolResult mn = minpool(x, 2, 2);
    const PoolResult mxn = maxpool(nx, 2, 2);
    for (std::size_t i = 0; i < mn.values.data.size(); ++i) {
      CHECK(mn.values.data[i] == -mxn.values.data[i]);
      CHECK(mn.indices.data[i] == mxn.indices.data[i]);
    }
  }
}

TEST_CASE("pool window larger than input is rejected") {
  const Tensor x(Shape{1, 2, 2});
  CHECK_THROWS_AS((void)maxpool(x, 4, 4), Error);
}

TEST_CASE("unpool is the adjoint of pooled-value selection") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = randn(rng, Shape{2, 4, 4});
    const PoolResult r = maxpool(x, 2, 2);
    const Tensor g = randn(rng, r.values.shape);
    const Tensor back = unpool(g, r.indices, x.shape);
    double pooled_dot = 0.0;
    for (std::size_t i = 0; i < g.data.size(); ++i) pooled_dot += g.data[i] * r.values.data[i];
    double scattered_dot = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) scattered_dot += x.data[i] * back.data[i];
    CHECK(pooled_dot == doctest::Approx(scattered_dot).epsilon(1e-12));
  }
}

TEST_CASE("rectifiers") {
  const Tensor x = make_tensor(Shape{1, 1, 4}, {-1.0, 2.0, 0.0, -3.5});
  const Tensor r = relu(x);
  CHECK(r.data[0] == 0.0);
  CHECK(r.data[1] == 2.0);
  CHECK(r.data[2] == 0.0);
  CHECK(r.data[3] == 0.0);

  Rng rng(19);
  const Tensor z = randn(rng, Shape{1, 3, 3});
  Tensor nz(z.shape);
  for (std::size_t i = 0; i < z.data.size(); ++i) nz.data[i] = -z.data[i];
  const Tensor a = nrelu(z);
  const Tensor b = relu(nz);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    CHECK(a.data[i] == -b.data[i]);
    CHECK(relu(z).data[i] + nrelu(z).data[i] == z.data[i]);
  }

  const Tensor l = leaky_relu(make_tensor(Shape{1, 1, 1}, {-2.0}), 0.1);
  CHECK(l.data[0] == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("softmax fundamentals") {
  const Tensor two = make_tensor(Shape{2}, {0.0, 0.0});
  const Tensor s2 = softmax_logits(two);
  CHECK(s2.data[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s2.data[1] == doctest::Approx(0.5).epsilon(1e-14));

  const Tensor flat = Tensor::full(Shape{5}, 3.25);
  const Tensor sf = softmax_logits(flat);
  for (const double v : sf.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-13));

  const Tensor big = make_tensor(Shape{2}, {1000.0, 1000.0});
  const Tensor sb = softmax_logits(big);
  CHECK(sb.data[0] == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(std::isfinite(sb.data[1]));
}

TEST_CASE("softmax is a distribution invariant to logit shifts") {
  Rng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor logits = randn(rng, Shape{6}, 3.0);
    const Tensor p = softmax_logits(logits);
    double sum = 0.0;
    for (const double v : p.data) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(argmax_index(p) == argmax_index(logits));

    Tensor shifted(logits.shape);
    const double c = rng.uniform(-50.0, 50.0);
    for (std::size_t i = 0; i < logits.data.size(); ++i) shifted.data[i] = logits.data[i] + c;
    CHECK(max_abs_diff(p, softmax_logits(shifted)) < 1e-12);
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS((void)softmax_logits(Tensor(Shape{0})), Error);
}

TEST_CASE("log_sum_exp matches direct evaluation and survives large logits") {
  const std::vector<double> v{0.0, std::log(3.0)};
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
}
