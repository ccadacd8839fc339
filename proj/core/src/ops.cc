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

#include "dgm/ops.h"

#include <algorithm>
#include <cmath>

#include "dgm/error.h"

namespace dgm {

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw_data(std::string(what) + ": expected rank-3 [C,H,W] tensor, got " + shape_str(t.shape));
  }
}

void require_filters(const Tensor& f, const char* what) {
  if (f.rank() != 4) {
    throw_data(std::string(what) + ": expected rank-4 [F,C,kh,kw] filters, got " +
               shape_str(f.shape));
  }
}

}  // namespace

std::int64_t pad_amount(Pad pad, std::int64_t k) {
  switch (pad) {
    case Pad::valid:
      return 0;
    case Pad::same:
      if (k % 2 == 0) {
        throw_config("same padding requires an odd kernel extent, got " + std::to_string(k));
      }
      return (k - 1) / 2;
    case Pad::full:
      return k - 1;
  }
  throw_config("unknown padding mode");
}

std::int64_t conv_out_extent(Pad pad, std::int64_t n, std::int64_t k) {
  const std::int64_t p = pad_amount(pad, k);
  const std::int64_t out = n + 2 * p - k + 1;
  if (out <= 0) {
    throw_data("convolution output extent " + std::to_string(out) + " not positive (input " +
               std::to_string(n) + ", kernel " + std::to_string(k) + ")");
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& filters, Pad pad) {
  require_chw(input, "conv2d input");
  require_filters(filters, "conv2d filters");
  const std::int64_t c_in = input.dim(0), h_in = input.dim(1), w_in = input.dim(2);
  const std::int64_t f = filters.dim(0), c_f = filters.dim(1);
  const std::int64_t kh = filters.dim(2), kw = filters.dim(3);
  if (c_in != c_f) {
    throw_data("conv2d: input channels " + shape_str(input.shape) + " do not match filters " +
               shape_str(filters.shape));
  }
  const std::int64_t ph = pad_amount(pad, kh), pw = pad_amount(pad, kw);
  const std::int64_t h_out = conv_out_extent(pad, h_in, kh);
  const std::int64_t w_out = conv_out_extent(pad, w_in, kw);

  Tensor out({f, h_out, w_out});
  // Shift-and-add: each (filter, channel, kernel offset) contributes a row
  // segment of the input to a row segment of the output.
  for (std::int64_t fi = 0; fi < f; ++fi) {
    double* out_map = out.data.data() + fi * h_out * w_out;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
      const double* in_map = input.data.data() + ci * h_in * w_in;
      const double* ker = filters.data.data() + ((fi * c_f + ci) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const double w = ker[dy * kw + dx];
          if (w == 0.0) continue;
          for (std::int64_t oy = 0; oy < h_out; ++oy) {
            const std::int64_t iy = oy - ph + dy;
            if (iy < 0 || iy >= h_in) continue;
            // ix = ox - pw + dx must stay in [0, w_in).
            const std::int64_t ox_lo = std::max<std::int64_t>(0, pw - dx);
            const std::int64_t ox_hi = std::min(w_out, w_in + pw - dx);
            const double* in_row = in_map + iy * w_in + (ox_lo - pw + dx);
            double* out_row = out_map + oy * w_out + ox_lo;
            for (std::int64_t i = 0; i < ox_hi - ox_lo; ++i) out_row[i] += w * in_row[i];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_transpose(const Tensor& grad_out, const Tensor& filters, Pad pad,
                        const Shape& input_shape) {
  require_chw(grad_out, "conv2d_transpose input");
  require_filters(filters, "conv2d_transpose filters");
  if (input_shape.size() != 3) {
    throw_data("conv2d_transpose: target shape must be rank-3, got " + shape_str(input_shape));
  }
  const std::int64_t c_in = input_shape[0], h_in = input_shape[1], w_in = input_shape[2];
  const std::int64_t f = filters.dim(0), c_f = filters.dim(1);
  const std::int64_t kh = filters.dim(2), kw = filters.dim(3);
  if (c_in != c_f) {
    throw_data("conv2d_transpose: target channels " + shape_str(input_shape) +
               " do not match filters " + shape_str(filters.shape));
  }
  const std::int64_t ph = pad_amount(pad, kh), pw = pad_amount(pad, kw);
  const std::int64_t h_out = conv_out_extent(pad, h_in, kh);
  const std::int64_t w_out = conv_out_extent(pad, w_in, kw);
  Shape want{f, h_out, w_out};
  require_shape(grad_out, want, "conv2d_transpose source");

  Tensor grad_in({c_in, h_in, w_in});
  // Exact adjoint of the loop in conv2d: the same index walk, with the
  // accumulation direction reversed.
  for (std::int64_t fi = 0; fi < f; ++fi) {
    const double* out_map = grad_out.data.data() + fi * h_out * w_out;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
      double* in_map = grad_in.data.data() + ci * h_in * w_in;
      const double* ker = filters.data.data() + ((fi * c_f + ci) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const double w = ker[dy * kw + dx];
          if (w == 0.0) continue;
          for (std::int64_t oy = 0; oy < h_out; ++oy) {
            const std::int64_t iy = oy - ph + dy;
            if (iy < 0 || iy >= h_in) continue;
            const std::int64_t ox_lo = std::max<std::int64_t>(0, pw - dx);
            const std::int64_t ox_hi = std::min(w_out, w_in + pw - dx);
            double* in_row = in_map + iy * w_in + (ox_lo - pw + dx);
            const double* out_row = out_map + oy * w_out + ox_lo;
            for (std::int64_t i = 0; i < ox_hi - ox_lo; ++i) in_row[i] += w * out_row[i];
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor conv2d_grad_filters(const Tensor& input, const Tensor& grad_out, Pad pad,
                           const Shape& filter_shape) {
  require_chw(input, "conv2d_grad_filters input");
  require_chw(grad_out, "conv2d_grad_filters grad");
  if (filter_shape.size() != 4) {
    throw_data("conv2d_grad_filters: filter shape must be rank-4, got " + shape_str(filter_shape));
  }
  const std::int64_t c_in = input.dim(0), h_in = input.dim(1), w_in = input.dim(2);
  const std::int64_t f = filter_shape[0], c_f = filter_shape[1];
  const std::int64_t kh = filter_shape[2], kw = filter_shape[3];
  if (c_in != c_f) {
    throw_data("conv2d_grad_filters: input channels " + shape_str(input.shape) +
               " do not match filter shape " + shape_str(filter_shape));
  }
  const std::int64_t ph = pad_amount(pad, kh), pw = pad_amount(pad, kw);
  const std::int64_t h_out = conv_out_extent(pad, h_in, kh);
  const std::int64_t w_out = conv_out_extent(pad, w_in, kw);
  require_shape(grad_out, Shape{f, h_out, w_out}, "conv2d_grad_filters grad");

  Tensor grad_f(filter_shape);
  for (std::int64_t fi = 0; fi < f; ++fi) {
    const double* out_map = grad_out.data.data() + fi * h_out * w_out;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
      const double* in_map = input.data.data() + ci * h_in * w_in;
      double* ker = grad_f.data.data() + ((fi * c_f + ci) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          double acc = 0.0;
          for (std::int64_t oy = 0; oy < h_out; ++oy) {
            const std::int64_t iy = oy - ph + dy;
            if (iy < 0 || iy >= h_in) continue;
            const std::int64_t ox_lo = std::max<std::int64_t>(0, pw - dx);
            const std::int64_t ox_hi = std::min(w_out, w_in + pw - dx);
            const double* in_row = in_map + iy * w_in + (ox_lo - pw + dx);
            const double* out_row = out_map + oy * w_out + ox_lo;
            for (std::int64_t i = 0; i < ox_hi - ox_lo; ++i) acc += in_row[i] * out_row[i];
          }
          ker[dy * kw + dx] += acc;
        }
      }
    }
  }
  return grad_f;
}

namespace {

template <bool kMax>
PoolResult pool_impl(const Tensor& input, std::int64_t window, std::int64_t stride,
                     const char* what) {
  require_chw(input, what);
  if (window <= 0 || stride <= 0) {
    throw_data(std::string(what) + ": window and stride must be positive");
  }
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (window > h || window > w) {
    throw_data(std::string(what) + ": window " + std::to_string(window) +
               " exceeds input extent " + shape_str(input.shape));
  }
  if ((h - window) % stride != 0 || (w - window) % stride != 0) {
    throw_data(std::string(what) + ": window " + std::to_string(window) + " stride " +
               std::to_string(stride) + " does not tile input " + shape_str(input.shape));
  }
  const std::int64_t h_out = (h - window) / stride + 1;
  const std::int64_t w_out = (w - window) / stride + 1;
  PoolResult r{Tensor({c, h_out, w_out}), IndexTensor({c, h_out, w_out})};
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const double* in_map = input.data.data() + ci * h * w;
    double* out_map = r.values.data.data() + ci * h_out * w_out;
    std::int64_t* idx_map = r.indices.data.data() + ci * h_out * w_out;
    for (std::int64_t oy = 0; oy < h_out; ++oy) {
      for (std::int64_t ox = 0; ox < w_out; ++ox) {
        std::int64_t best_idx = (oy * stride) * w + (ox * stride);
        double best = in_map[best_idx];
        // Walk the window in ascending flat order so a strict comparison
        // implements the lowest-flat-index tie rule.
        for (std::int64_t dy = 0; dy < window; ++dy) {
          const std::int64_t iy = oy * stride + dy;
          for (std::int64_t dx = 0; dx < window; ++dx) {
            const std::int64_t flat = iy * w + (ox * stride + dx);
            const double v = in_map[flat];
            const bool better = kMax ? (v > best) : (v < best);
            if (better) {
              best = v;
              best_idx = flat;
            }
          }
        }
        out_map[oy * w_out + ox] = best;
        idx_map[oy * w_out + ox] = best_idx;
      }
    }
  }
  return r;
}

}  // namespace

PoolResult maxpool(const Tensor& input, std::int64_t window, std::int64_t stride) {
  return pool_impl<true>(input, window, stride, "maxpool");
}

PoolResult minpool(const Tensor& input, std::int64_t window, std::int64_t stride) {
  return pool_impl<false>(input, window, stride, "minpool");
}

Tensor unpool(const Tensor& values, const IndexTensor& indices, const Shape& input_shape) {
  require_chw(values, "unpool values");
  if (values.shape != indices.shape) {
    throw_data("unpool: values " + shape_str(values.shape) + " and indices " +
               shape_str(indices.shape) + " differ");
  }
  if (input_shape.size() != 3 || input_shape[0] != values.dim(0)) {
    throw_data("unpool: bad target shape " + shape_str(input_shape) + " for values " +
               shape_str(values.shape));
  }
  const std::int64_t c = values.dim(0);
  const std::int64_t n_out = values.dim(1) * values.dim(2);
  const std::int64_t plane = input_shape[1] * input_shape[2];
  Tensor out(input_shape);
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const double* v = values.data.data() + ci * n_out;
    const std::int64_t* idx = indices.data.data() + ci * n_out;
    double* o = out.data.data() + ci * plane;
    for (std::int64_t i = 0; i < n_out; ++i) {
      if (idx[i] < 0 || idx[i] >= plane) {
        throw_data("unpool: index " + std::to_string(idx[i]) + " outside plane of " +
                   std::to_string(plane) + " elements");
      }
      o[idx[i]] += v[i];
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor nrelu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] < 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor leaky_relu(const Tensor& x, double alpha) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    y.data[i] = x.data[i] > 0.0 ? x.data[i] : alpha * x.data[i];
  }
  return y;
}

Tensor softmax_logits(const Tensor& logits) {
  if (logits.numel() == 0) throw_data("softmax_logits: empty input");
  ensure_finite(logits, "softmax_logits");
  const double m = max_value(logits);
  Tensor p(logits.shape);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    p.data[i] = std::exp(logits.data[i] - m);
    z += p.data[i];
  }
  for (double& v : p.data) v /= z;
  return p;
}

double log_sum_exp(const Tensor& v) { return log_sum_exp(v.data); }

double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) throw_data("log_sum_exp: empty input");
  double m = v[0];
  for (double x : v) m = (x > m) ? x : m;
  if (!std::isfinite(m)) {
    throw_numeric("log_sum_exp: non-finite max " + std::to_string(m));
  }
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

std::int64_t argmax_index(const Tensor& v) {
  if (v.numel() == 0) throw_data("argmax_index: empty input");
  std::int64_t best = 0;
  for (std::int64_t i = 1; i < v.numel(); ++i) {
    if (v.data[static_cast<std::size_t>(i)] > v.data[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace dgm
