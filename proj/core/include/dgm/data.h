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

#ifndef DGM_DATA_H_
#define DGM_DATA_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgm/model.h"
#include "dgm/rng.h"
#include "dgm/tensor.h"

namespace dgm {

// A labeled/unlabeled image collection. Labels use -1 for "unlabeled";
// present labels lie in [0, num_classes). File-loaded images are scaled
// to [0,1]; model-sampled images keep their native render range.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::int64_t> labels;
  std::int64_t num_classes = 0;

  std::size_t size() const { return images.size(); }
  std::int64_t labeled_count() const;
};

// Images-only IDX file (big-endian magic 0x00000803: count, rows, cols,
// u8 payload), pixels scaled to [0, 1]. Malformed input raises a data
// error naming the expected and found values.
std::vector<Tensor> load_idx_images(const std::string& path);

// Parses the IDX pair used by the classic digit corpus: images as above
// plus the 0x00000801 label file (count, u8 payload). Image and label
// counts must agree.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Writers for the same IDX formats (test fixtures and the synth command).
// Image values are clamped to [0,1] and quantized to u8; labels must lie
// in [0, 255].
void save_idx_images(const std::string& path, const std::vector<Tensor>& images);
void save_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels);

// Ground truth kept alongside a synthetic sample.
struct SynthTruth {
  std::int64_t y = -1;
  LatentConfig z;
};

struct SynthData {
  Dataset data;
  std::vector<SynthTruth> truth;
};

// Draws n samples from the generative model: y ~ pi, z by Gibbs sweeps,
// x = render plus N(0, sigma^2) noise. The first round(n * labeled_fraction)
// samples keep their labels; the rest are marked unlabeled. Ground truth
// (y, z) is recorded for every sample either way.
SynthData synth_dataset(const DgmParams& true_params, std::int64_t n,
                        double labeled_fraction, Rng& rng);

// Procedural 28x28 digit glyphs (strokes with affine jitter and pixel
// noise), class-balanced over 0..9. Stands in for the real corpus when no
// IDX files are available.
Dataset make_digits(std::int64_t n, Rng& rng);

// Keeps a class-balanced random subset of keep_labeled labels and marks
// every other sample unlabeled.
void mask_labels(Dataset& d, std::int64_t keep_labeled, Rng& rng);

// Returns the digit-corpus directory from DGM_MNIST_DIR, or "" when unset.
std::string mnist_dir_from_env();

// Train/test digit data: loads IDX files from dir when non-empty
// (train-images-idx3-ubyte etc.), else generates procedural digits.
// Either way the result is truncated to the requested sizes.
std::pair<Dataset, Dataset> load_digit_corpus(std::int64_t n_train, std::int64_t n_test,
                                              const std::string& dir, std::uint64_t seed);

}  // namespace dgm

#endif  // DGM_DATA_H_
