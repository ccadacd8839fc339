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

#include "dgm/model.h"

#include <cmath>
#include <limits>
#include <utility>

#include "dgm/error.h"

namespace dgm {

const Shape& ModelSpec::top_shape() const {
  // A zero-layer model is the degenerate single-path case: the class
  // template lives directly in image space.
  if (layers.empty()) return input_shape;
  if (geom.empty()) throw_config("ModelSpec: resolve() must run before top_shape()");
  return geom.back().out;
}

void ModelSpec::resolve() {
  if (classes <= 0) throw_config("ModelSpec: classes must be positive");
  if (input_shape.size() != 3) {
    throw_config("ModelSpec: input shape must be [channels,height,width], got " +
                 shape_str(input_shape));
  }
  geom.clear();
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.filters <= 0 || l.kernel <= 0 || l.pool <= 0) {
      throw_config("ModelSpec: layer " + std::to_string(i + 1) + " has non-positive extents");
    }
    if (arch == ArchKind::residual && l.pad != Pad::same) {
      throw_config("ModelSpec: residual layers need same-padding so the skip "
                   "connection can be added to the pre-activation");
    }
    if (arch == ArchKind::dense && (l.pad != Pad::same || l.pool != 1)) {
      throw_config("ModelSpec: dense layers need same-padding and pool=1 so new "
                   "maps can be concatenated with the layer input");
    }
    LayerGeom g;
    g.in = cur;
    const std::int64_t ph = conv_out_extent(l.pad, cur[1], l.kernel);
    const std::int64_t pw = conv_out_extent(l.pad, cur[2], l.kernel);
    g.pre = Shape{l.filters, ph, pw};
    if (l.pool > 1) {
      if (ph % l.pool != 0 || pw % l.pool != 0) {
        throw_config("ModelSpec: layer " + std::to_string(i + 1) + " pool " +
                     std::to_string(l.pool) + " does not tile pre-pool extent " +
                     shape_str(g.pre));
      }
      g.out = Shape{l.filters, ph / l.pool, pw / l.pool};
    } else {
      g.out = g.pre;
    }
    if (arch == ArchKind::dense) {
      g.out[0] += cur[0];  // concat with the layer input's maps
    }
    geom.push_back(g);
    cur = g.out;
  }
}

DgmParams init_params(ModelSpec spec, Rng& rng, double sigma) {
  spec.resolve();
  DgmParams p;
  p.spec = std::move(spec);
  p.sigma = sigma;
  const std::int64_t k_classes = p.spec.classes;
  const Shape& top = p.spec.top_shape();
  const double mu_std = 1.0 / std::sqrt(static_cast<double>(numel_of(top)));
  for (std::int64_t y = 0; y < k_classes; ++y) p.mu.push_back(randn(rng, top, mu_std));
  for (std::int64_t i = 0; i < p.spec.num_layers(); ++i) {
    const LayerSpec& l = p.spec.layers[static_cast<std::size_t>(i)];
    const std::int64_t c_in = p.spec.geom[static_cast<std::size_t>(i)].in[0];
    const double w_std = 1.0 / std::sqrt(static_cast<double>(c_in * l.kernel * l.kernel));
    p.gamma.push_back(randn(rng, Shape{l.filters, c_in, l.kernel, l.kernel}, w_std));
    p.bias.push_back(Tensor(Shape{l.filters}));
    if (p.spec.arch == ArchKind::residual && c_in != l.filters) {
      p.skip.push_back(randn(rng, Shape{l.filters, c_in, 1, 1},
                             1.0 / std::sqrt(static_cast<double>(c_in))));
    } else {
      p.skip.emplace_back(Shape{0});
    }
  }
  p.pi.assign(static_cast<std::size_t>(k_classes), 1.0 / static_cast<double>(k_classes));
  return p;
}

void validate_params(const DgmParams& params, double prior_floor) {
  const ModelSpec& spec = params.spec;
  if (spec.geom.size() != spec.layers.size()) {
    throw_config("validate_params: spec not resolved");
  }
  if (params.sigma <= 0.0) throw_config("validate_params: sigma must be positive");
  if (static_cast<std::int64_t>(params.mu.size()) != spec.classes) {
    throw_config("validate_params: expected " + std::to_string(spec.classes) +
                 " class templates, got " + std::to_string(params.mu.size()));
  }
  for (const Tensor& m : params.mu) require_shape(m, spec.top_shape(), "class template");
  if (static_cast<std::int64_t>(params.gamma.size()) != spec.num_layers() ||
      static_cast<std::int64_t>(params.bias.size()) != spec.num_layers() ||
      static_cast<std::int64_t>(params.skip.size()) != spec.num_layers()) {
    throw_config("validate_params: layer parameter counts do not match the spec");
  }
  for (std::int64_t i = 0; i < spec.num_layers(); ++i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    const std::int64_t c_in = spec.geom[static_cast<std::size_t>(i)].in[0];
    require_shape(params.gamma[static_cast<std::size_t>(i)],
                  Shape{l.filters, c_in, l.kernel, l.kernel}, "rendering templates");
    require_shape(params.bias[static_cast<std::size_t>(i)], Shape{l.filters}, "layer bias");
    const Tensor& sk = params.skip[static_cast<std::size_t>(i)];
    if (sk.numel() != 0) {
      require_shape(sk, Shape{l.filters, c_in, 1, 1}, "skip projection");
    }
  }
  if (static_cast<std::int64_t>(params.pi.size()) != spec.classes) {
    throw_config("validate_params: prior length does not match class count");
  }
  double total = 0.0;
  for (double v : params.pi) {
    if (v < prior_floor) {
      throw_config("validate_params: class prior " + std::to_string(v) +
                   " below floor " + std::to_string(prior_floor));
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw_config("validate_params: class priors sum to " + std::to_string(total));
  }
}

IndexTensor identity_indices(const Shape& coarse) {
  IndexTensor idx(coarse);
  const std::int64_t plane = coarse[1] * coarse[2];
  for (std::int64_t c = 0; c < coarse[0]; ++c) {
    for (std::int64_t i = 0; i < plane; ++i) idx.data[static_cast<std::size_t>(c * plane + i)] = i;
  }
  return idx;
}

namespace {

void require_chain(const ModelSpec& spec, const char* what) {
  if (spec.arch != ArchKind::chain) {
    throw_config(std::string(what) + ": rendering is defined for the plain layer chain only; "
                                     "residual and dense graphs are inference-side constructs");
  }
}

void check_latents(const DgmParams& params, const LatentConfig& z, const char* what) {
  const ModelSpec& spec = params.spec;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  if (z.s.size() != layers + 1 || z.t.size() != layers + 1) {
    throw_data(std::string(what) + ": latent config has wrong layer count");
  }
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const Shape& coarse = spec.geom[ell - 1].out;
    require_shape(z.s[ell], coarse, "switching map");
    if (z.t[ell].shape != coarse) {
      throw_data(std::string(what) + ": translation map shape " + shape_str(z.t[ell].shape) +
                 " does not match coarse grid " + shape_str(coarse));
    }
  }
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace

RenderStack render(const DgmParams& params, std::int64_t y, const LatentConfig& z) {
  require_chain(params.spec, "render");
  if (y < 0 || y >= params.num_classes()) {
    throw_data("render: class " + std::to_string(y) + " out of range");
  }
  check_latents(params, z, "render");
  const std::int64_t layers = params.num_layers();
  RenderStack stack;
  stack.h.resize(static_cast<std::size_t>(layers) + 1);
  stack.h[static_cast<std::size_t>(layers)] = params.mu[static_cast<std::size_t>(y)];
  for (std::int64_t ell = layers; ell >= 1; --ell) {
    const ModelSpec::LayerGeom& g = params.spec.geom[static_cast<std::size_t>(ell - 1)];
    const LayerSpec& l = params.spec.layers[static_cast<std::size_t>(ell - 1)];
    const Tensor masked =
        mul_elementwise(z.s[static_cast<std::size_t>(ell)], stack.h[static_cast<std::size_t>(ell)]);
    const Tensor placed = unpool(masked, z.t[static_cast<std::size_t>(ell)], g.pre);
    stack.h[static_cast<std::size_t>(ell - 1)] =
        conv2d_transpose(placed, params.gamma[static_cast<std::size_t>(ell - 1)], l.pad, g.in);
  }
  return stack;
}

double eta(const DgmParams& params, const LatentConfig& z, const RenderStack& stack) {
  const std::int64_t layers = params.num_layers();
  if (static_cast<std::int64_t>(stack.h.size()) != layers + 1) {
    throw_data("eta: render stack has wrong layer count");
  }
  double total = 0.0;
  for (std::int64_t ell = 1; ell <= layers; ++ell) {
    const Tensor& b = params.bias[static_cast<std::size_t>(ell - 1)];
    const Tensor& s = z.s[static_cast<std::size_t>(ell)];
    const Tensor& h = stack.h[static_cast<std::size_t>(ell)];
    if (s.shape != h.shape || s.dim(0) != b.dim(0)) {
      throw_data("eta: layer " + std::to_string(ell) + " shapes disagree: s " +
                 shape_str(s.shape) + ", h " + shape_str(h.shape) + ", b " + shape_str(b.shape));
    }
    const std::int64_t plane = s.dim(1) * s.dim(2);
    for (std::int64_t f = 0; f < s.dim(0); ++f) {
      double acc = 0.0;
      const double* sp = s.data.data() + f * plane;
      const double* hp = h.data.data() + f * plane;
      for (std::int64_t i = 0; i < plane; ++i) acc += sp[i] * hp[i];
      total += b.data[static_cast<std::size_t>(f)] * acc;
    }
  }
  return total;
}

double min_h(const RenderStack& stack) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t ell = 1; ell < stack.h.size(); ++ell) {
    const double v = min_value(stack.h[ell]);
    m = (v < m) ? v : m;
  }
  return m;
}

LatentEnumerator::LatentEnumerator(const ModelSpec& spec, std::int64_t max_configs)
    : spec_(&spec) {
  if (spec.geom.size() != spec.layers.size()) {
    throw_config("LatentEnumerator: spec not resolved");
  }
  for (std::int64_t ell = 1; ell <= spec.num_layers(); ++ell) {
    const Shape& coarse = spec.geom[static_cast<std::size_t>(ell - 1)].out;
    const std::int64_t positions = numel_of(coarse);
    const std::int64_t pool = spec.layers[static_cast<std::size_t>(ell - 1)].pool;
    for (std::int64_t p = 0; p < positions; ++p) digits_.push_back({ell, true, p, 2});
    if (pool > 1) {
      for (std::int64_t p = 0; p < positions; ++p) digits_.push_back({ell, false, p, pool * pool});
    }
  }
  for (const Digit& d : digits_) {
    if (count_ > max_configs / d.radix) {
      throw_capacity("LatentEnumerator: more than " + std::to_string(max_configs) +
                     " rendering paths; use the Gibbs sampler instead");
    }
    count_ *= d.radix;
  }
}

LatentConfig LatentEnumerator::config(std::int64_t index) const {
  if (index < 0 || index >= count_) {
    throw_data("LatentEnumerator: index " + std::to_string(index) + " out of range");
  }
  const ModelSpec& spec = *spec_;
  const double lo = spec.leaky_alpha;
  LatentConfig z;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  z.s.resize(layers + 1);
  z.t.resize(layers + 1);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const Shape& coarse = spec.geom[ell - 1].out;
    z.s[ell] = Tensor::full(coarse, 1.0);
    z.t[ell] = identity_indices(coarse);
  }
  std::int64_t rest = index;
  for (const Digit& d : digits_) {
    const std::int64_t v = rest % d.radix;
    rest /= d.radix;
    const std::size_t ell = static_cast<std::size_t>(d.layer);
    if (d.is_s) {
      z.s[ell].data[static_cast<std::size_t>(d.position)] = (v == 1) ? 1.0 : lo;
    } else {
      const LayerSpec& l = spec.layers[ell - 1];
      const ModelSpec::LayerGeom& g = spec.geom[ell - 1];
      const std::int64_t coarse_w = g.out[2];
      const std::int64_t pre_w = g.pre[2];
      const std::int64_t plane = g.out[1] * g.out[2];
      const std::int64_t p_spatial = d.position % plane;
      const std::int64_t py = p_spatial / coarse_w;
      const std::int64_t px = p_spatial % coarse_w;
      const std::int64_t flat =
          (py * l.pool + v / l.pool) * pre_w + (px * l.pool + v % l.pool);
      z.t[ell].data[static_cast<std::size_t>(d.position)] = flat;
    }
  }
  return z;
}

std::int64_t LatentEnumerator::index_of(const LatentConfig& z) const {
  const ModelSpec& spec = *spec_;
  std::int64_t index = 0;
  std::int64_t place = 1;
  for (const Digit& d : digits_) {
    const std::size_t ell = static_cast<std::size_t>(d.layer);
    std::int64_t v = 0;
    if (d.is_s) {
      v = (z.s[ell].data[static_cast<std::size_t>(d.position)] == 1.0) ? 1 : 0;
    } else {
      const LayerSpec& l = spec.layers[ell - 1];
      const ModelSpec::LayerGeom& g = spec.geom[ell - 1];
      const std::int64_t coarse_w = g.out[2];
      const std::int64_t pre_w = g.pre[2];
      const std::int64_t plane = g.out[1] * g.out[2];
      const std::int64_t p_spatial = d.position % plane;
      const std::int64_t py = p_spatial / coarse_w;
      const std::int64_t px = p_spatial % coarse_w;
      const std::int64_t flat = z.t[ell].data[static_cast<std::size_t>(d.position)];
      const std::int64_t dy = flat / pre_w - py * l.pool;
      const std::int64_t dx = flat % pre_w - px * l.pool;
      if (dy < 0 || dy >= l.pool || dx < 0 || dx >= l.pool) {
        throw_data("LatentEnumerator: translation index outside its window");
      }
      v = dy * l.pool + dx;
    }
    index += v * place;
    place *= d.radix;
  }
  return index;
}

double log_path_count(const ModelSpec& spec) {
  double total = 0.0;
  for (std::int64_t ell = 1; ell <= spec.num_layers(); ++ell) {
    const std::int64_t positions = numel_of(spec.geom[static_cast<std::size_t>(ell - 1)].out);
    const std::int64_t pool = spec.layers[static_cast<std::size_t>(ell - 1)].pool;
    total += static_cast<double>(positions) * std::log(2.0);
    if (pool > 1) {
      total += static_cast<double>(positions) * std::log(static_cast<double>(pool * pool));
    }
  }
  return total;
}

std::vector<double> prior_logits(const DgmParams& params, std::int64_t y,
                                 const LatentEnumerator& en) {
  const double inv_s2 = 1.0 / (params.sigma * params.sigma);
  std::vector<double> logits(static_cast<std::size_t>(en.count()));
  for (std::int64_t i = 0; i < en.count(); ++i) {
    const LatentConfig z = en.config(i);
    const RenderStack stack = render(params, y, z);
    logits[static_cast<std::size_t>(i)] = inv_s2 * eta(params, z, stack);
  }
  return logits;
}

std::vector<double> prior(const DgmParams& params, std::int64_t y, const LatentEnumerator& en) {
  std::vector<double> logits = prior_logits(params, y, en);
  const double lse = log_sum_exp(logits);
  for (double& v : logits) v = std::exp(v - lse);
  return logits;
}

LatentConfig random_latents(const ModelSpec& spec, Rng& rng) {
  const double lo = spec.leaky_alpha;
  LatentConfig z;
  const std::size_t layers = static_cast<std::size_t>(spec.num_layers());
  z.s.resize(layers + 1);
  z.t.resize(layers + 1);
  for (std::size_t ell = 1; ell <= layers; ++ell) {
    const LayerSpec& l = spec.layers[ell - 1];
    const ModelSpec::LayerGeom& g = spec.geom[ell - 1];
    const Shape& coarse = g.out;
    z.s[ell] = Tensor(coarse);
    for (double& v : z.s[ell].data) v = rng.below(2) == 1 ? 1.0 : lo;
    z.t[ell] = identity_indices(coarse);
    if (l.pool > 1) {
      const std::int64_t coarse_w = coarse[2];
      const std::int64_t pre_w = g.pre[2];
      const std::int64_t plane = coarse[1] * coarse[2];
      for (std::int64_t p = 0; p < numel_of(coarse); ++p) {
        const std::int64_t v = rng.below(l.pool * l.pool);
        const std::int64_t p_spatial = p % plane;
        const std::int64_t py = p_spatial / coarse_w;
        const std::int64_t px = p_spatial % coarse_w;
        z.t[ell].data[static_cast<std::size_t>(p)] =
            (py * l.pool + v / l.pool) * pre_w + (px * l.pool + v % l.pool);
      }
    }
  }
  return z;
}

LatentConfig sample_z(const DgmParams& params, std::int64_t y, Rng& rng, std::int64_t n_sweeps) {
  require_chain(params.spec, "sample_z");
  if (n_sweeps < 1) throw_data("sample_z: n_sweeps must be at least 1");
  const ModelSpec& spec = params.spec;
  const double lo = spec.leaky_alpha;
  const double inv_s2 = 1.0 / (params.sigma * params.sigma);
  LatentConfig z = random_latents(spec, rng);

  const auto eta_of = [&](const LatentConfig& zc) {
    const RenderStack stack = render(params, y, zc);
    return eta(params, zc, stack);
  };

  for (std::int64_t sweep = 0; sweep < n_sweeps; ++sweep) {
    for (std::int64_t ell = 1; ell <= spec.num_layers(); ++ell) {
      Tensor& s = z.s[static_cast<std::size_t>(ell)];
      for (std::size_t p = 0; p < s.data.size(); ++p) {
        s.data[p] = 1.0;
        const double eta_hi = eta_of(z);
        s.data[p] = lo;
        const double eta_lo = eta_of(z);
        const double p_hi = 1.0 / (1.0 + std::exp(-inv_s2 * (eta_hi - eta_lo)));
        s.data[p] = rng.uniform() < p_hi ? 1.0 : lo;
      }
    }
    for (std::int64_t ell = 1; ell <= spec.num_layers(); ++ell) {
      const LayerSpec& l = spec.layers[static_cast<std::size_t>(ell - 1)];
      if (l.pool <= 1) continue;
      const ModelSpec::LayerGeom& g = spec.geom[static_cast<std::size_t>(ell - 1)];
      IndexTensor& t = z.t[static_cast<std::size_t>(ell)];
      const std::int64_t coarse_w = g.out[2];
      const std::int64_t pre_w = g.pre[2];
      const std::int64_t plane = g.out[1] * g.out[2];
      const std::int64_t choices = l.pool * l.pool;
      std::vector<double> logits(static_cast<std::size_t>(choices));
      for (std::size_t p = 0; p < t.data.size(); ++p) {
        const std::int64_t p_spatial = static_cast<std::int64_t>(p) % plane;
        const std::int64_t py = p_spatial / coarse_w;
        const std::int64_t px = p_spatial % coarse_w;
        for (std::int64_t v = 0; v < choices; ++v) {
          t.data[p] = (py * l.pool + v / l.pool) * pre_w + (px * l.pool + v % l.pool);
          logits[static_cast<std::size_t>(v)] = inv_s2 * eta_of(z);
        }
        const double lse = log_sum_exp(logits);
        const double u = rng.uniform();
        double cum = 0.0;
        std::int64_t pick = choices - 1;
        for (std::int64_t v = 0; v < choices; ++v) {
          cum += std::exp(logits[static_cast<std::size_t>(v)] - lse);
          if (u < cum) {
            pick = v;
            break;
          }
        }
        t.data[p] = (py * l.pool + pick / l.pool) * pre_w + (px * l.pool + pick % l.pool);
      }
    }
  }
  return z;
}

Tensor sample_image(const DgmParams& params, std::int64_t y, const LatentConfig& z, Rng& rng) {
  const RenderStack stack = render(params, y, z);
  Tensor x = stack.h[0];
  if (params.sigma > 0.0) {
    for (double& v : x.data) v += rng.normal(0.0, params.sigma);
  }
  return x;
}

}  // namespace dgm
