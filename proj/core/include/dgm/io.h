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

#ifndef DGM_IO_H_
#define DGM_IO_H_

#include <string>

#include "dgm/model.h"

namespace dgm {

// Checkpoint container: versioned header, layer-shape table, then raw
// little-endian f64 parameter blocks in declared order (mu, gamma, bias,
// skip, pi, sigma). Round trips bit-exactly.
void save_checkpoint(const std::string& path, const DgmParams& params);
DgmParams load_checkpoint(const std::string& path);

// Binary PGM (P5, maxval 255). Values are mapped by round(v*255) and
// clamped to [0, 255]; the tensor must be [1,H,W] or [H,W].
void write_pgm(const std::string& path, const Tensor& image);

}  // namespace dgm

#endif  // DGM_IO_H_
