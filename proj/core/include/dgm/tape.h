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

#ifndef DGM_TAPE_H_
#define DGM_TAPE_H_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dgm/tensor.h"

namespace dgm {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode gradient tape. Forward values are computed eagerly as
// operations are recorded; backward() replays adjoint closures in exact
// reverse order of recording. A tape is consumed by exactly one backward
// pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Registers an input value; its gradient is available after backward().
  Var input(Tensor value);

  // Records an operation: `value` is the eagerly computed result and
  // `adjoint` propagates the output gradient to the operation's inputs.
  Var emit(Tensor value, std::function<void(Tape&)> adjoint);

  // Records a value with no inputs to propagate to (a constant).
  Var constant(Tensor value) { return emit(std::move(value), nullptr); }

  const Tensor& value(Var v) const;
  Tensor& mutable_value(Var v);

  // Accumulated gradient of the backward root with respect to v.
  // Zero tensor if v never received an adjoint contribution.
  const Tensor& grad(Var v);

  // Adds g into the gradient slot of v (used inside adjoint closures).
  void accumulate_grad(Var v, const Tensor& g);
  void accumulate_grad_scaled(Var v, double a, const Tensor& g);

  // True if v has received any gradient so far; adjoints use this to skip
  // work for branches that do not influence the root.
  bool has_grad(Var v) const;

  // Runs the backward pass from a scalar root with seed dL/droot = 1.
  void backward(Var root);

  // Runs the backward pass from externally supplied seeds (var, dL/dvar).
  // Used when part of the objective's gradient is computed in closed form
  // and injected into the recorded graph.
  void backward(const std::vector<std::pair<Var, Tensor>>& seeds);

  std::size_t size() const { return vals_.size(); }

 private:
  void check(Var v, const char* what) const;
  void run_backward();

  std::vector<Tensor> vals_;
  std::vector<std::function<void(Tape&)>> adjoints_;
  std::vector<Tensor> grads_;          // lazily sized; empty until touched
  std::vector<std::uint8_t> has_grad_;
  bool consumed_ = false;
};

}  // namespace dgm

#endif  // DGM_TAPE_H_
