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

#include "dgm/data.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dgm/error.h"

namespace dgm {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::uint32_t get_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw_data("truncated IDX header in " + path);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void put_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>(v & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::int64_t Dataset::labeled_count() const {
  std::int64_t n = 0;
  for (std::int64_t l : labels) {
    if (l >= 0) ++n;
  }
  return n;
}

std::vector<Tensor> load_idx_images(const std::string& path) {
  std::ifstream imgs(path, std::ios::binary);
  if (!imgs) throw_data("cannot open IDX image file: " + path);
  const std::uint32_t img_magic = get_be32(imgs, path);
  if (img_magic != kImageMagic) {
    throw_data("bad IDX image magic in " + path + ": expected " + hex32(kImageMagic) +
               ", found " + hex32(img_magic));
  }
  const std::uint32_t n = get_be32(imgs, path);
  const std::uint32_t rows = get_be32(imgs, path);
  const std::uint32_t cols = get_be32(imgs, path);
  if (rows == 0 || cols == 0) throw_data("zero-sized IDX images in " + path);

  std::vector<Tensor> images;
  images.reserve(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw_data("truncated IDX image payload in " + path);
    }
    Tensor t({1, static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols)});
    for (std::size_t j = 0; j < buf.size(); ++j) t.data[j] = buf[j] / 255.0;
    images.push_back(std::move(t));
  }
  return images;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<Tensor> images = load_idx_images(images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw_data("cannot open IDX label file: " + labels_path);
  const std::uint32_t lab_magic = get_be32(labs, labels_path);
  if (lab_magic != kLabelMagic) {
    throw_data("bad IDX label magic in " + labels_path + ": expected " + hex32(kLabelMagic) +
               ", found " + hex32(lab_magic));
  }
  const std::uint32_t n_labels = get_be32(labs, labels_path);
  if (n_labels != images.size()) {
    throw_data("IDX count mismatch: " + std::to_string(images.size()) + " images in " +
               images_path + " vs " + std::to_string(n_labels) + " labels in " + labels_path);
  }

  Dataset d;
  d.images = std::move(images);
  d.labels.reserve(n_labels);
  std::int64_t max_label = -1;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    unsigned char lab = 0;
    if (!labs.read(reinterpret_cast<char*>(&lab), 1)) {
      throw_data("truncated IDX label payload in " + labels_path);
    }
    d.labels.push_back(static_cast<std::int64_t>(lab));
    max_label = std::max(max_label, static_cast<std::int64_t>(lab));
  }
  d.num_classes = max_label + 1;
  return d;
}

void save_idx_images(const std::string& path, const std::vector<Tensor>& images) {
  if (images.empty()) throw_data("save_idx_images: no images");
  std::int64_t h = 0, w = 0;
  if (images[0].rank() == 3 && images[0].dim(0) == 1) {
    h = images[0].dim(1);
    w = images[0].dim(2);
  } else if (images[0].rank() == 2) {
    h = images[0].dim(0);
    w = images[0].dim(1);
  } else {
    throw_data("save_idx_images: expected [1,H,W] or [H,W], got " + shape_str(images[0].shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot open IDX image file for writing: " + path);
  put_be32(os, kImageMagic);
  put_be32(os, static_cast<std::uint32_t>(images.size()));
  put_be32(os, static_cast<std::uint32_t>(h));
  put_be32(os, static_cast<std::uint32_t>(w));
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
  for (const Tensor& t : images) {
    if (t.numel() != h * w) {
      throw_data("save_idx_images: image shape " + shape_str(t.shape) + " does not match first");
    }
    for (std::size_t j = 0; j < buf.size(); ++j) {
      const double v = std::lround(t.data[j] * 255.0);
      buf[j] = static_cast<unsigned char>(v < 0.0 ? 0 : (v > 255.0 ? 255 : v));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!os) throw_data("write failure on IDX image file: " + path);
}

void save_idx_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot open IDX label file for writing: " + path);
  put_be32(os, kLabelMagic);
  put_be32(os, static_cast<std::uint32_t>(labels.size()));
  for (std::int64_t l : labels) {
    if (l < 0 || l > 255) throw_data("save_idx_labels: label out of u8 range: " + std::to_string(l));
    const unsigned char b = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw_data("write failure on IDX label file: " + path);
}

SynthData synth_dataset(const DgmParams& true_params, std::int64_t n, double labeled_fraction,
                        Rng& rng) {
  if (n <= 0) throw_config("synth_dataset: n must be positive");
  if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) {
    throw_config("synth_dataset: labeled_fraction must lie in [0,1]");
  }
  constexpr std::int64_t kGibbsSweeps = 5;
  const std::int64_t keep = std::min<std::int64_t>(n, std::llround(labeled_fraction * n));
  SynthData out;
  out.data.num_classes = true_params.spec.classes;
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::int64_t y = true_params.spec.classes - 1;
    double acc = 0.0;
    for (std::int64_t k = 0; k < true_params.spec.classes; ++k) {
      acc += true_params.pi[static_cast<std::size_t>(k)];
      if (u < acc) {
        y = k;
        break;
      }
    }
    LatentConfig z = sample_z(true_params, y, rng, kGibbsSweeps);
    out.data.images.push_back(sample_image(true_params, y, z, rng));
    out.data.labels.push_back(i < keep ? y : -1);
    out.truth.push_back({y, std::move(z)});
  }
  return out;
}

namespace {

struct Pt {
  double x, y;
};

// Stroke skeletons per digit, unit box coordinates (x right, y down).
const std::vector<std::vector<std::vector<Pt>>>& digit_strokes() {
  auto loop = [](double cx, double cy, double rx, double ry, int segs) {
    std::vector<Pt> pts;
    for (int i = 0; i <= segs; ++i) {
      const double a = 2.0 * 3.14159265358979323846 * i / segs;
      pts.push_back({cx + rx * std::sin(a), cy - ry * std::cos(a)});
    }
    return pts;
  };
  static const std::vector<std::vector<std::vector<Pt>>> kStrokes = {
      /* 0 */ {loop(0.5, 0.5, 0.26, 0.36, 16)},
      /* 1 */ {{{0.34, 0.28}, {0.52, 0.13}, {0.52, 0.85}}, {{0.36, 0.85}, {0.68, 0.85}}},
      /* 2 */ {{{0.3, 0.3}, {0.38, 0.16}, {0.58, 0.13}, {0.7, 0.26}, {0.66, 0.42}, {0.3, 0.85}, {0.72, 0.85}}},
      /* 3 */ {{{0.3, 0.18}, {0.56, 0.13}, {0.7, 0.27}, {0.52, 0.46}, {0.7, 0.64}, {0.58, 0.85}, {0.3, 0.8}}},
      /* 4 */ {{{0.62, 0.85}, {0.62, 0.13}, {0.27, 0.62}, {0.76, 0.62}}},
      /* 5 */ {{{0.7, 0.14}, {0.33, 0.14}, {0.31, 0.47}, {0.58, 0.43}, {0.71, 0.6}, {0.6, 0.83}, {0.3, 0.8}}},
      /* 6 */ {{{0.64, 0.14}, {0.42, 0.34}, {0.33, 0.58}, {0.36, 0.8}, {0.58, 0.85}, {0.68, 0.68}, {0.56, 0.53}, {0.35, 0.58}}},
      /* 7 */ {{{0.28, 0.14}, {0.72, 0.14}, {0.46, 0.85}}, {{0.38, 0.5}, {0.62, 0.5}}},
      /* 8 */ {loop(0.5, 0.3, 0.17, 0.17, 12), loop(0.5, 0.65, 0.21, 0.2, 12)},
      /* 9 */ {loop(0.52, 0.32, 0.18, 0.19, 12), {{0.7, 0.32}, {0.64, 0.85}}},
  };
  return kStrokes;
}

double seg_dist(double px, double py, const Pt& a, const Pt& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (a.x + t * dx), ey = py - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Dataset make_digits(std::int64_t n, Rng& rng) {
  if (n <= 0) throw_config("make_digits: n must be positive");
  constexpr std::int64_t kSide = 28;
  const auto& strokes = digit_strokes();
  Dataset d;
  d.num_classes = 10;
  d.images.reserve(static_cast<std::size_t>(n));
  d.labels.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t digit = i % 10;
    const double theta = rng.uniform() * 0.3 - 0.15;
    const double scale = 0.85 + rng.uniform() * 0.25;
    const double tx = rng.uniform() * 4.0 - 2.0;
    const double ty = rng.uniform() * 4.0 - 2.0;
    const double ink = 0.8 + rng.uniform() * 0.2;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = (kSide - 1) / 2.0, cy = (kSide - 1) / 2.0;
    // Unit-box strokes to jittered pixel coordinates.
    std::vector<std::vector<Pt>> polys;
    for (const auto& poly : strokes[static_cast<std::size_t>(digit)]) {
      std::vector<Pt> q;
      q.reserve(poly.size());
      for (const Pt& p : poly) {
        const double gx = 4.0 + p.x * 20.0 - cx;
        const double gy = 3.0 + p.y * 22.0 - cy;
        q.push_back({scale * (c * gx - s * gy) + cx + tx, scale * (s * gx + c * gy) + cy + ty});
      }
      polys.push_back(std::move(q));
    }
    Tensor img({1, kSide, kSide});
    for (std::int64_t r = 0; r < kSide; ++r) {
      for (std::int64_t col = 0; col < kSide; ++col) {
        double dmin = 1e9;
        for (const auto& poly : polys) {
          for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
            dmin = std::min(dmin, seg_dist(static_cast<double>(col), static_cast<double>(r),
                                           poly[k], poly[k + 1]));
          }
        }
        const double v = ink * std::clamp(1.8 - dmin, 0.0, 1.0);
        const double noisy = v + 0.05 * rng.normal();
        img.data[static_cast<std::size_t>(r * kSide + col)] = std::clamp(noisy, 0.0, 1.0);
      }
    }
    d.images.push_back(std::move(img));
    d.labels.push_back(digit);
  }
  return d;
}

void mask_labels(Dataset& d, std::int64_t keep_labeled, Rng& rng) {
  if (keep_labeled < 0) throw_config("mask_labels: keep_labeled must be non-negative");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes));
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= 0) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  }
  for (auto& idx : by_class) {
    for (std::size_t k = idx.size(); k > 1; --k) {
      std::swap(idx[k - 1], idx[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(k)))]);
    }
  }
  std::vector<bool> keep(d.labels.size(), false);
  std::int64_t taken = 0;
  for (std::size_t round = 0; taken < keep_labeled; ++round) {
    bool any = false;
    for (const auto& idx : by_class) {
      if (round < idx.size()) {
        any = true;
        keep[idx[round]] = true;
        if (++taken == keep_labeled) break;
      }
    }
    if (!any) break;
  }
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (!keep[i]) d.labels[i] = -1;
  }
}

std::string mnist_dir_from_env() {
  const char* v = std::getenv("DGM_MNIST_DIR");
  return v != nullptr ? std::string(v) : std::string();
}

namespace {

Dataset take_prefix(Dataset&& d, std::int64_t n) {
  if (static_cast<std::int64_t>(d.size()) > n) {
    d.images.resize(static_cast<std::size_t>(n));
    d.labels.resize(static_cast<std::size_t>(n));
  }
  return std::move(d);
}

}  // namespace

std::pair<Dataset, Dataset> load_digit_corpus(std::int64_t n_train, std::int64_t n_test,
                                              const std::string& dir, std::uint64_t seed) {
  if (!dir.empty()) {
    Dataset train = load_mnist_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    Dataset test = load_mnist_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    return {take_prefix(std::move(train), n_train), take_prefix(std::move(test), n_test)};
  }
  Rng rng(seed);
  Rng train_rng = rng.fork(1);
  Rng test_rng = rng.fork(2);
  return {make_digits(n_train, train_rng), make_digits(n_test, test_rng)};
}

}  // namespace dgm
