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

#include "dgm/tensor.h"

#include <cmath>
#include <limits>

#include "dgm/error.h"

namespace dgm {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw_data("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
    throw_data("tensor data length " + std::to_string(data.size()) + " does not match shape " +
               shape_str(shape));
  }
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw_data("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void require_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape != want) {
    throw_data(std::string(what) + ": expected shape " + shape_str(want) + ", got " +
               shape_str(t.shape));
  }
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw_data("dot: size mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  double acc = 0.0;
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  const std::size_t n = a.data.size();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i] * pb[i];
  return acc;
}

double sqnorm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return acc;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v;
  return acc;
}

double min_value(const Tensor& a) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : a.data) m = (v < m) ? v : m;
  return m;
}

double max_value(const Tensor& a) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a.data) m = (v > m) ? v : m;
  return m;
}

void axpy(double a, const Tensor& x, Tensor& y) {
  if (x.numel() != y.numel()) {
    throw_data("axpy: size mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  const double* px = x.data.data();
  double* py = y.data.data();
  const std::size_t n = x.data.size();
  for (std::size_t i = 0; i < n; ++i) py[i] += a * px[i];
}

void scale_in_place(Tensor& t, double a) {
  for (double& v : t.data) v *= a;
}

void ensure_finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw_numeric(std::string(what) + ": non-finite value " + std::to_string(v) + " in tensor " +
                    shape_str(t.shape));
    }
  }
}

IndexTensor::IndexTensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), 0) {}

}  // namespace dgm
