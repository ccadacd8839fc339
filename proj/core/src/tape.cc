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

#include "dgm/tape.h"

#include "dgm/error.h"

namespace dgm {

Var Tape::input(Tensor value) { return emit(std::move(value), nullptr); }

Var Tape::emit(Tensor value, std::function<void(Tape&)> adjoint) {
  if (consumed_) throw_data("Tape: emit after backward; a tape is single-use");
  vals_.push_back(std::move(value));
  adjoints_.push_back(std::move(adjoint));
  grads_.emplace_back();
  has_grad_.push_back(0);
  return Var{static_cast<std::int32_t>(vals_.size() - 1)};
}

void Tape::check(Var v, const char* what) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= vals_.size()) {
    throw_data(std::string(what) + ": invalid tape variable id " + std::to_string(v.id));
  }
}

const Tensor& Tape::value(Var v) const {
  check(v, "Tape::value");
  return vals_[static_cast<std::size_t>(v.id)];
}

Tensor& Tape::mutable_value(Var v) {
  check(v, "Tape::mutable_value");
  return vals_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::grad(Var v) {
  check(v, "Tape::grad");
  Tensor& g = grads_[static_cast<std::size_t>(v.id)];
  if (g.numel() == 0 && vals_[static_cast<std::size_t>(v.id)].numel() != 0) {
    g = Tensor(vals_[static_cast<std::size_t>(v.id)].shape);
  }
  return g;
}

bool Tape::has_grad(Var v) const {
  check(v, "Tape::has_grad");
  return has_grad_[static_cast<std::size_t>(v.id)] != 0;
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
  check(v, "Tape::accumulate_grad");
  const std::size_t i = static_cast<std::size_t>(v.id);
  if (g.shape != vals_[i].shape) {
    throw_data("Tape::accumulate_grad: gradient shape " + shape_str(g.shape) +
               " does not match value shape " + shape_str(vals_[i].shape));
  }
  Tensor& slot = grads_[i];
  if (slot.numel() == 0) {
    slot = g;
  } else {
    axpy(1.0, g, slot);
  }
  has_grad_[i] = 1;
}

void Tape::accumulate_grad_scaled(Var v, double a, const Tensor& g) {
  check(v, "Tape::accumulate_grad_scaled");
  const std::size_t i = static_cast<std::size_t>(v.id);
  if (g.shape != vals_[i].shape) {
    throw_data("Tape::accumulate_grad_scaled: gradient shape " + shape_str(g.shape) +
               " does not match value shape " + shape_str(vals_[i].shape));
  }
  Tensor& slot = grads_[i];
  if (slot.numel() == 0) slot = Tensor(vals_[i].shape);
  axpy(a, g, slot);
  has_grad_[i] = 1;
}

void Tape::backward(Var root) {
  check(root, "Tape::backward");
  if (vals_[static_cast<std::size_t>(root.id)].numel() != 1) {
    throw_data("Tape::backward: root must be scalar, got shape " +
               shape_str(vals_[static_cast<std::size_t>(root.id)].shape));
  }
  accumulate_grad(root, Tensor::scalar(1.0));
  run_backward();
}

void Tape::backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  if (seeds.empty()) throw_data("Tape::backward: no seeds");
  for (const auto& [v, g] : seeds) accumulate_grad(v, g);
  run_backward();
}

void Tape::run_backward() {
  if (consumed_) throw_data("Tape: backward called twice; a tape is single-use");
  consumed_ = true;
  for (std::size_t i = vals_.size(); i-- > 0;) {
    if (!has_grad_[i]) continue;
    if (adjoints_[i]) adjoints_[i](*this);
  }
}

}  // namespace dgm
