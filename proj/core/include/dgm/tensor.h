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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dgm {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor. The value carrier for images, feature maps and
// parameters. A default-constructed tensor is the empty tensor (shape {},
// one element would be wrong: data is empty and numel() == 0 only for
// a moved-from/empty state; use Tensor(shape) or the factories).
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }

  // Accessors for [maps, height, width] tensors.
  std::int64_t idx3(std::int64_t c, std::int64_t h, std::int64_t w) const {
    return (c * shape[1] + h) * shape[2] + w;
  }
  double at(std::int64_t c, std::int64_t h, std::int64_t w) const { return data[static_cast<std::size_t>(idx3(c, h, w))]; }
  double& at(std::int64_t c, std::int64_t h, std::int64_t w) { return data[static_cast<std::size_t>(idx3(c, h, w))]; }

  double item() const;
};

bool same_shape(const Tensor& a, const Tensor& b);
void require_shape(const Tensor& t, const Shape& want, const char* what);

double dot(const Tensor& a, const Tensor& b);
double sqnorm(const Tensor& a);
double sum(const Tensor& a);
double min_value(const Tensor& a);
double max_value(const Tensor& a);

// y += a * x (flat, shapes must match)
void axpy(double a, const Tensor& x, Tensor& y);
void scale_in_place(Tensor& t, double a);

// Throws a numeric error naming `what` if any element is NaN or Inf.
void ensure_finite(const Tensor& t, const char* what);

// Integer companion of Tensor; carries pooling argmax positions as flat
// indices into the pooled-over input tensor.
struct IndexTensor {
  Shape shape;
  std::vector<std::int64_t> data;

  IndexTensor() = default;
  explicit IndexTensor(Shape s);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  std::int64_t& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
};

}  // namespace dgm
