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

#include "dgm/io.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "dgm/error.h"

namespace dgm {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& os, std::int64_t v) {
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw_data("truncated checkpoint " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::int64_t get_i64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw_data("truncated checkpoint " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(v);
}

double get_f64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw_data("truncated checkpoint " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  for (double v : t.data) put_f64(os, v);
}

void get_tensor(std::istream& is, Tensor& t, const std::string& path) {
  for (double& v : t.data) v = get_f64(is, path);
}

}  // namespace

void save_checkpoint(const std::string& path, const DgmParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(params.spec.arch));
  put_i64(os, params.spec.classes);
  for (std::int64_t d : params.spec.input_shape) put_i64(os, d);
  put_f64(os, params.spec.leaky_alpha);
  put_u32(os, static_cast<std::uint32_t>(params.spec.layers.size()));
  for (const LayerSpec& l : params.spec.layers) {
    put_i64(os, l.filters);
    put_i64(os, l.kernel);
    put_i64(os, static_cast<std::int64_t>(l.pad));
    put_i64(os, l.pool);
  }
  put_f64(os, params.sigma);
  for (double p : params.pi) put_f64(os, p);
  for (const Tensor& m : params.mu) put_tensor(os, m);
  for (const Tensor& g : params.gamma) put_tensor(os, g);
  for (const Tensor& b : params.bias) put_tensor(os, b);
  for (const Tensor& s : params.skip) {
    put_u32(os, s.numel() != 0 ? 1u : 0u);
    if (s.numel() != 0) put_tensor(os, s);
  }
  if (!os) throw_data("write failure on checkpoint: " + path);
}

DgmParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw_data("bad checkpoint magic in " + path);
  }
  const std::uint32_t version = get_u32(is, path);
  if (version != kVersion) {
    throw_data("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  DgmParams p;
  const std::uint32_t arch = get_u32(is, path);
  if (arch > 2) throw_data("bad arch kind in checkpoint " + path);
  p.spec.arch = static_cast<ArchKind>(arch);
  p.spec.classes = get_i64(is, path);
  p.spec.input_shape = {get_i64(is, path), get_i64(is, path), get_i64(is, path)};
  p.spec.leaky_alpha = get_f64(is, path);
  const std::uint32_t layers = get_u32(is, path);
  if (layers == 0 || layers > 64) throw_data("bad layer count in checkpoint " + path);
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec l;
    l.filters = get_i64(is, path);
    l.kernel = get_i64(is, path);
    const std::int64_t pad = get_i64(is, path);
    if (pad < 0 || pad > 2) throw_data("bad pad mode in checkpoint " + path);
    l.pad = static_cast<Pad>(pad);
    l.pool = get_i64(is, path);
    p.spec.layers.push_back(l);
  }
  p.spec.resolve();
  p.sigma = get_f64(is, path);
  p.pi.resize(static_cast<std::size_t>(p.spec.classes));
  for (double& v : p.pi) v = get_f64(is, path);
  for (std::int64_t y = 0; y < p.spec.classes; ++y) {
    Tensor m(p.spec.top_shape());
    get_tensor(is, m, path);
    p.mu.push_back(std::move(m));
  }
  for (std::uint32_t i = 0; i < layers; ++i) {
    const LayerSpec& l = p.spec.layers[i];
    Tensor g({l.filters, p.spec.geom[i].in[0], l.kernel, l.kernel});
    get_tensor(is, g, path);
    p.gamma.push_back(std::move(g));
    p.bias.emplace_back(Shape{l.filters});
  }
  for (std::uint32_t i = 0; i < layers; ++i) get_tensor(is, p.bias[i], path);
  for (std::uint32_t i = 0; i < layers; ++i) {
    const std::uint32_t present = get_u32(is, path);
    if (present != 0u) {
      Tensor s({p.spec.layers[i].filters, p.spec.geom[i].in[0], 1, 1});
      get_tensor(is, s, path);
      p.skip.push_back(std::move(s));
    } else {
      p.skip.emplace_back(Shape{0});
    }
  }
  return p;
}

void write_pgm(const std::string& path, const Tensor& image) {
  std::int64_t h = 0, w = 0;
  if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else {
    throw_data("write_pgm: expected [1,H,W] or [H,W], got " + shape_str(image.shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot open PGM for writing: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double v = std::lround(image.data[static_cast<std::size_t>(y * w + x)] * 255.0);
      row[static_cast<std::size_t>(x)] =
          static_cast<unsigned char>(v < 0.0 ? 0 : (v > 255.0 ? 255 : v));
    }
    os.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!os) throw_data("write failure on PGM: " + path);
}

}  // namespace dgm
