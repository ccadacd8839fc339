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

#include "dgm/bounds.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dgm/error.h"
#include "dgm/inference.h"
#include "dgm/rng.h"

namespace dgm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Every rendered image, eta value, and squared norm of one model, indexed
// by class and enumeration position. With normalize set, each (y, z) pair
// is rescaled so the rendered image has unit norm; eta scales by the same
// factor, which keeps the score linear in the rescale.
struct PathTable {
  std::int64_t classes = 0;
  std::int64_t paths = 0;
  std::vector<std::vector<double>> h0;
  std::vector<double> eta_v;
  std::vector<double> sqn;

  std::int64_t at(std::int64_t y, std::int64_t zi) const { return y * paths + zi; }
};

// Renders every (y, z) pair. With normalize set, each rendering is rescaled
// to unit norm (the matching eta scales by the same factor); latent configs
// whose rendering nearly vanishes for some class make that rescale
// ill-conditioned, so the latent set is restricted to configs clearing a
// relative norm threshold. Restricting the latent set is sound: every bound
// quantifies over an arbitrary finite config set shared by all classes, and
// the |L|-dependent terms below count the restricted set.
PathTable build_paths(const DgmParams& params, const LatentEnumerator& en, bool normalize) {
  PathTable t;
  t.classes = params.num_classes();
  const std::int64_t all_paths = en.count();

  std::vector<std::vector<double>> imgs(static_cast<std::size_t>(t.classes * all_paths));
  std::vector<double> etas(imgs.size());
  std::vector<double> norms(imgs.size());
  double max_norm = 0.0;
  for (std::int64_t y = 0; y < t.classes; ++y) {
    for (std::int64_t zi = 0; zi < all_paths; ++zi) {
      const LatentConfig z = en.config(zi);
      const RenderStack stack = render(params, y, z);
      const std::size_t j = static_cast<std::size_t>(y * all_paths + zi);
      etas[j] = eta(params, z, stack);
      imgs[j] = stack.h[0].data;
      norms[j] = std::sqrt(dot(imgs[j], imgs[j]));
      max_norm = std::max(max_norm, norms[j]);
    }
  }

  std::vector<std::int64_t> kept;
  if (normalize) {
    const double threshold = std::max(1e-12, 1e-6 * max_norm);
    for (std::int64_t zi = 0; zi < all_paths; ++zi) {
      double lo = kInf;
      for (std::int64_t y = 0; y < t.classes; ++y) {
        lo = std::min(lo, norms[static_cast<std::size_t>(y * all_paths + zi)]);
      }
      if (lo >= threshold) kept.push_back(zi);
    }
    if (kept.empty()) {
      throw_numeric("equal-norm rescale infeasible: every latent config renders "
                    "a near-zero template for some class");
    }
  } else {
    kept.resize(static_cast<std::size_t>(all_paths));
    for (std::int64_t zi = 0; zi < all_paths; ++zi) kept[static_cast<std::size_t>(zi)] = zi;
  }

  t.paths = static_cast<std::int64_t>(kept.size());
  const std::size_t total = static_cast<std::size_t>(t.classes * t.paths);
  t.h0.reserve(total);
  t.eta_v.reserve(total);
  t.sqn.reserve(total);
  for (std::int64_t y = 0; y < t.classes; ++y) {
    for (const std::int64_t zi : kept) {
      const std::size_t j = static_cast<std::size_t>(y * all_paths + zi);
      std::vector<double> img = std::move(imgs[j]);
      double e = etas[j];
      double n2 = norms[j] * norms[j];
      if (normalize) {
        const double c = 1.0 / norms[j];
        for (double& v : img) v *= c;
        e *= c;
        n2 = 1.0;
      }
      t.h0.push_back(std::move(img));
      t.eta_v.push_back(e);
      t.sqn.push_back(n2);
    }
  }
  return t;
}

std::int64_t checked_label(const Dataset& data, std::int64_t i, std::int64_t classes,
                           const char* who) {
  const std::int64_t y = data.labels[i];
  if (y < 0 || y >= classes) {
    throw_data(std::string(who) + ": sample " + std::to_string(i) +
               " needs a label in [0, " + std::to_string(classes) + ")");
  }
  return y;
}

std::vector<double> log_priors(const DgmParams& params) {
  std::vector<double> lp(params.pi.size());
  for (std::size_t y = 0; y < params.pi.size(); ++y) {
    if (!(params.pi[y] > 0.0)) throw_config("class priors must be positive");
    lp[y] = std::log(params.pi[y]);
  }
  return lp;
}

void require_nonempty(const Dataset& data, const char* who) {
  if (data.size() == 0) throw_data(std::string(who) + ": empty dataset");
}

void check_image(const std::vector<double>& x, const PathTable& pt, std::int64_t i,
                 const char* who) {
  if (x.size() != pt.h0[0].size()) {
    throw_data(std::string(who) + ": image " + std::to_string(i) +
               " does not match the model input shape");
  }
}

}  // namespace

BoundReport make_report(const std::string& theorem, std::uint64_t seed, double lhs, double mid,
                        double rhs) {
  BoundReport r;
  r.theorem = theorem;
  r.seed = seed;
  r.lhs = lhs;
  r.mid = mid;
  r.rhs = rhs;
  r.slack = std::min(mid - lhs, rhs - mid);
  r.holds = r.slack >= kBoundSlackTol;
  return r;
}

BoundReport verify_ce_sandwich(const DgmParams& params, const Dataset& data, double sigma,
                               std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw_config("ce sandwich: sigma must be positive");
  require_nonempty(data, "ce sandwich");
  const LatentEnumerator en(params.spec);
  const PathTable pt = build_paths(params, en, /*normalize=*/true);
  const std::int64_t classes = pt.classes;
  const std::int64_t paths = pt.paths;
  const std::int64_t n = data.size();
  const double inv_s2 = 1.0 / (sigma * sigma);
  const std::vector<double> lpi = log_priors(params);

  double sum_logq = 0.0;
  double sum_mid = 0.0;
  double sum_gap = 0.0;
  std::vector<double> s(static_cast<std::size_t>(classes * paths));
  std::vector<double> m(static_cast<std::size_t>(classes));
  std::vector<double> col(static_cast<std::size_t>(classes));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t yi = checked_label(data, i, classes, "ce sandwich");
    const std::vector<double>& x = data.images[i].data;
    check_image(x, pt, i, "ce sandwich");
    for (std::int64_t y = 0; y < classes; ++y) {
      double best = -kInf;
      for (std::int64_t zi = 0; zi < paths; ++zi) {
        const std::int64_t j = pt.at(y, zi);
        const double v = (dot(pt.h0[j], x) + pt.eta_v[j]) * inv_s2 + lpi[y];
        s[static_cast<std::size_t>(j)] = v;
        best = std::max(best, v);
      }
      m[static_cast<std::size_t>(y)] = best;
    }
    sum_logq += m[static_cast<std::size_t>(yi)] - log_sum_exp(m);

    // Largest enumerated conditional log-likelihood of the true class, and
    // the score gap the upper bound pays at the winning configuration. Ties
    // go to the configuration with the larger true-class score; the chain
    // holds for any winner, and this choice makes the gap vanish whenever
    // the conditional and score argmaxes coincide.
    double best_mid = -kInf;
    std::int64_t zbar = 0;
    for (std::int64_t zi = 0; zi < paths; ++zi) {
      for (std::int64_t y = 0; y < classes; ++y) {
        col[static_cast<std::size_t>(y)] = s[static_cast<std::size_t>(pt.at(y, zi))];
      }
      const double v = col[static_cast<std::size_t>(yi)] - log_sum_exp(col);
      if (v > best_mid || (v == best_mid && s[static_cast<std::size_t>(pt.at(yi, zi))] >
                                                s[static_cast<std::size_t>(pt.at(yi, zbar))])) {
        best_mid = v;
        zbar = zi;
      }
    }
    sum_mid += best_mid;
    double gap = -kInf;
    for (std::int64_t y = 0; y < classes; ++y) {
      gap = std::max(gap, m[static_cast<std::size_t>(y)] -
                              s[static_cast<std::size_t>(pt.at(y, zbar))]);
    }
    sum_gap += gap;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double lhs = sum_logq * inv_n;
  const double mid = sum_mid * inv_n;
  const double rhs = lhs + sum_gap * inv_n + std::log(static_cast<double>(classes));
  return make_report("ce-sandwich", seed, lhs, mid, rhs);
}

std::vector<BoundReport> verify_un_vn(const DgmParams& params, const Dataset& data,
                                      double gamma_bar, std::uint64_t seed) {
  if (!(gamma_bar > 0.0) || !(gamma_bar < 0.5)) {
    throw_config("likelihood relaxation: gamma_bar must lie in (0, 0.5)");
  }
  for (double p : params.pi) {
    if (!(p >= gamma_bar)) {
      throw_config("likelihood relaxation: every class prior must be at least gamma_bar");
    }
  }
  require_nonempty(data, "likelihood relaxation");
  const LatentEnumerator en(params.spec);
  const PathTable pt = build_paths(params, en, /*normalize=*/false);
  const std::int64_t classes = pt.classes;
  const std::int64_t paths = pt.paths;
  const std::int64_t n = data.size();
  const std::vector<double> lpi = log_priors(params);

  // Joint-prior normalizer over every (y, z), and the tractable variant that
  // keeps only each class's best configuration.
  std::vector<double> joint(static_cast<std::size_t>(classes * paths));
  std::vector<double> per_class(static_cast<std::size_t>(classes));
  for (std::int64_t y = 0; y < classes; ++y) {
    double best = -kInf;
    for (std::int64_t zi = 0; zi < paths; ++zi) {
      const std::int64_t j = pt.at(y, zi);
      joint[static_cast<std::size_t>(j)] = pt.eta_v[j] + lpi[y];
      best = std::max(best, pt.eta_v[j]);
    }
    per_class[static_cast<std::size_t>(y)] = best + lpi[y];
  }
  const double log_zu = log_sum_exp(joint);
  const double log_zv = log_sum_exp(per_class);

  double sum_un = 0.0;
  double sum_vn = 0.0;
  double sum_prior = 0.0;
  double sum_dnorm = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::vector<double>& x = data.images[i].data;
    check_image(x, pt, i, "likelihood relaxation");
    const double x2 = dot(x, x);
    double best_score = -kInf;
    double best_cost = kInf;
    std::int64_t jv = 0;
    std::int64_t ju = 0;
    for (std::int64_t y = 0; y < classes; ++y) {
      for (std::int64_t zi = 0; zi < paths; ++zi) {
        const std::int64_t j = pt.at(y, zi);
        const double d = dot(pt.h0[j], x);
        const double score = d + pt.eta_v[j];
        const double cost = x2 - 2.0 * d + pt.sqn[j] - 2.0 * pt.eta_v[j];
        if (score > best_score) {
          best_score = score;
          jv = j;
        }
        if (cost < best_cost) {
          best_cost = cost;
          ju = j;
        }
      }
    }
    const std::int64_t yu = ju / paths;
    const std::int64_t yv = jv / paths;
    const double sq_u = x2 - 2.0 * dot(pt.h0[ju], x) + pt.sqn[ju];
    const double sq_v = x2 - 2.0 * dot(pt.h0[jv], x) + pt.sqn[jv];
    sum_un += 0.5 * sq_u - (pt.eta_v[ju] + lpi[yu] - log_zu);
    sum_vn += 0.5 * sq_v - (pt.eta_v[jv] + lpi[yv] - log_zv);
    sum_prior += lpi[yv] - lpi[yu];
    sum_dnorm += 0.5 * (pt.sqn[ju] - pt.sqn[jv]);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double un = sum_un * inv_n;
  const double vn = sum_vn * inv_n;
  const double mean_prior = sum_prior * inv_n;
  const double mean_dnorm = sum_dnorm * inv_n;
  const double log_paths = std::log(static_cast<double>(paths));

  std::vector<BoundReport> out;
  out.push_back(make_report("relaxation-upper", seed, un, vn + mean_prior + log_paths,
                            vn + std::log(1.0 / gamma_bar - 1.0) + log_paths));
  out.push_back(make_report("relaxation-lower", seed,
                            vn + std::log(gamma_bar / (1.0 - gamma_bar)) + mean_dnorm,
                            vn + mean_prior + mean_dnorm, un));
  return out;
}

BoundReport verify_posterior_bounds(const DgmParams& params, const Dataset& data,
                                    std::uint64_t seed) {
  require_nonempty(data, "posterior sandwich");
  const LatentEnumerator en(params.spec);
  const PathTable pt = build_paths(params, en, /*normalize=*/true);
  const std::int64_t classes = pt.classes;
  const std::int64_t paths = pt.paths;
  const std::int64_t n = data.size();
  const double inv_s2 = 1.0 / (params.sigma * params.sigma);
  const std::vector<double> lpi = log_priors(params);

  double sum_logq = 0.0;
  double sum_mid = 0.0;
  std::vector<double> s(static_cast<std::size_t>(classes * paths));
  std::vector<double> m(static_cast<std::size_t>(classes));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t yi = checked_label(data, i, classes, "posterior sandwich");
    const std::vector<double>& x = data.images[i].data;
    check_image(x, pt, i, "posterior sandwich");
    for (std::int64_t y = 0; y < classes; ++y) {
      double best = -kInf;
      for (std::int64_t zi = 0; zi < paths; ++zi) {
        const std::int64_t j = pt.at(y, zi);
        const double v = (dot(pt.h0[j], x) + pt.eta_v[j]) * inv_s2 + lpi[y];
        s[static_cast<std::size_t>(j)] = v;
        best = std::max(best, v);
      }
      m[static_cast<std::size_t>(y)] = best;
    }
    sum_logq += m[static_cast<std::size_t>(yi)] - log_sum_exp(m);
    sum_mid += m[static_cast<std::size_t>(yi)] - log_sum_exp(s);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double neg_h = sum_logq * inv_n;
  return make_report("posterior-sandwich", seed,
                     neg_h - std::log(static_cast<double>(paths)), sum_mid * inv_n, neg_h);
}

std::vector<BoundReport> verify_normfree_bounds(const DgmParams& params, const Dataset& data,
                                                double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw_config("norm-free sandwich: sigma must be positive");
  }
  require_nonempty(data, "norm-free sandwich");
  const LatentEnumerator en(params.spec);
  const PathTable pt = build_paths(params, en, /*normalize=*/false);
  const std::int64_t classes = pt.classes;
  const std::int64_t paths = pt.paths;
  const std::int64_t n = data.size();
  const double inv_s2 = 1.0 / (sigma * sigma);
  const std::vector<double> lpi = log_priors(params);

  double m1_sq = kInf;
  double m2_sq = -kInf;
  for (double q : pt.sqn) {
    m1_sq = std::min(m1_sq, q);
    m2_sq = std::max(m2_sq, q);
  }
  const double w = 0.5 * (m2_sq - m1_sq) * inv_s2;

  double sum_logq = 0.0;
  double sum_cond = 0.0;
  double sum_joint = 0.0;
  double sum_loss_label = 0.0;
  double sum_loss_max = 0.0;
  double sum_dev = 0.0;
  std::vector<double> raw(static_cast<std::size_t>(classes * paths));
  std::vector<double> full(static_cast<std::size_t>(classes * paths));
  std::vector<double> g(static_cast<std::size_t>(classes));
  std::vector<double> u(static_cast<std::size_t>(classes));
  std::vector<double> m_full(static_cast<std::size_t>(classes));
  std::vector<double> col(static_cast<std::size_t>(classes));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t yi = checked_label(data, i, classes, "norm-free sandwich");
    const Tensor& image = data.images[i];
    const std::vector<double>& x = image.data;
    check_image(x, pt, i, "norm-free sandwich");
    const InferenceTrace trace = forward(params, image);
    for (std::int64_t y = 0; y < classes; ++y) {
      g[static_cast<std::size_t>(y)] = trace.class_scores[static_cast<std::size_t>(y)] * inv_s2;
      double best_raw = -kInf;
      double best_full = -kInf;
      for (std::int64_t zi = 0; zi < paths; ++zi) {
        const std::int64_t j = pt.at(y, zi);
        const double r = (dot(pt.h0[j], x) + pt.eta_v[j]) * inv_s2;
        raw[static_cast<std::size_t>(j)] = r;
        const double f = r + lpi[y] - 0.5 * pt.sqn[j] * inv_s2;
        full[static_cast<std::size_t>(j)] = f;
        best_raw = std::max(best_raw, r);
        best_full = std::max(best_full, f);
      }
      u[static_cast<std::size_t>(y)] = best_raw;
      m_full[static_cast<std::size_t>(y)] = best_full;
    }

    for (std::int64_t y = 0; y < classes; ++y) {
      col[static_cast<std::size_t>(y)] = g[static_cast<std::size_t>(y)] + lpi[y];
    }
    sum_logq += g[static_cast<std::size_t>(yi)] + lpi[yi] - log_sum_exp(col);
    sum_joint += m_full[static_cast<std::size_t>(yi)] - log_sum_exp(full);

    double best_cond = -kInf;
    std::int64_t zbar = 0;
    for (std::int64_t zi = 0; zi < paths; ++zi) {
      for (std::int64_t y = 0; y < classes; ++y) {
        col[static_cast<std::size_t>(y)] = full[static_cast<std::size_t>(pt.at(y, zi))];
      }
      const double v = col[static_cast<std::size_t>(yi)] - log_sum_exp(col);
      if (v > best_cond) {
        best_cond = v;
        zbar = zi;
      }
    }
    sum_cond += best_cond;

    double dev = -kInf;
    double loss_max = -kInf;
    for (std::int64_t y = 0; y < classes; ++y) {
      dev = std::max(dev, g[static_cast<std::size_t>(y)] -
                              raw[static_cast<std::size_t>(pt.at(y, zbar))]);
      loss_max = std::max(loss_max, u[static_cast<std::size_t>(y)] -
                                        g[static_cast<std::size_t>(y)]);
    }
    sum_dev += dev;
    sum_loss_label += u[static_cast<std::size_t>(yi)] - g[static_cast<std::size_t>(yi)];
    sum_loss_max += loss_max;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const double neg_h = sum_logq * inv_n;
  const double mean_cond = sum_cond * inv_n;
  const double mean_joint = sum_joint * inv_n;
  const double mean_loss_label = sum_loss_label * inv_n;
  const double mean_loss_max = sum_loss_max * inv_n;
  const double mean_dev = sum_dev * inv_n;
  const double log_paths = std::log(static_cast<double>(paths));
  const double log_k = std::log(static_cast<double>(classes));

  std::vector<BoundReport> out;
  out.push_back(make_report("ce-sandwich-normfree", seed, neg_h - w, mean_cond,
                            neg_h + mean_loss_label + mean_dev + log_k + w));
  out.push_back(make_report("posterior-sandwich-normfree", seed,
                            neg_h - mean_loss_max - log_paths - w, mean_joint,
                            neg_h + mean_loss_label + w));
  return out;
}

double conjugate_form_check(const DgmParams& params, const Tensor& x) {
  const LatentEnumerator en(params.spec);
  const PathTable pt = build_paths(params, en, /*normalize=*/true);
  const std::int64_t classes = pt.classes;
  const std::int64_t paths = pt.paths;
  const double inv_s2 = 1.0 / (params.sigma * params.sigma);
  const std::vector<double> lpi = log_priors(params);
  const std::vector<double>& xv = x.data;
  if (xv.size() != pt.h0[0].size()) {
    throw_data("conjugacy check: input does not match the model input shape");
  }
  const double x2 = dot(xv, xv);

  const std::size_t total = static_cast<std::size_t>(classes * paths);
  std::vector<double> log_prior(total);
  for (std::int64_t y = 0; y < classes; ++y) {
    for (std::int64_t zi = 0; zi < paths; ++zi) {
      const std::int64_t j = pt.at(y, zi);
      log_prior[static_cast<std::size_t>(j)] = pt.eta_v[j] * inv_s2 + lpi[y];
    }
  }
  const double log_z = log_sum_exp(log_prior);
  for (double& v : log_prior) v -= log_z;

  // Posterior through the Gaussian likelihood; the residual after stripping
  // the prior and the linear evidence term must not depend on (y, z).
  std::vector<double> log_post(total);
  std::vector<double> linear(total);
  for (std::size_t j = 0; j < total; ++j) {
    const double d = dot(pt.h0[j], xv);
    linear[j] = d * inv_s2;
    log_post[j] = log_prior[j] - 0.5 * (x2 - 2.0 * d + pt.sqn[j]) * inv_s2;
  }
  const double log_norm = log_sum_exp(log_post);
  double lo = kInf;
  double hi = -kInf;
  for (std::size_t j = 0; j < total; ++j) {
    const double r = (log_post[j] - log_norm) - log_prior[j] - linear[j];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return hi - lo;
}

ActivePaths count_active_paths(const DgmParams& params, const Dataset& data) {
  const LatentEnumerator en(params.spec);
  const std::int64_t classes = params.num_classes();
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  const std::int64_t n = static_cast<std::int64_t>(data.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const InferenceTrace trace = forward(params, data.images[i]);
    std::int64_t y = data.labels[i];
    if (y >= classes) throw_data("active paths: label out of range at sample " + std::to_string(i));
    if (y < 0) y = pseudo_label(trace, params.pi);
    seen.insert({y, en.index_of(trace.latents)});
  }
  ActivePaths ap;
  ap.active = static_cast<std::int64_t>(seen.size());
  ap.total = classes * en.count();
  ap.ratio = ap.total > 0 ? static_cast<double>(ap.active) / static_cast<double>(ap.total) : 0.0;
  return ap;
}

DgmParams random_micro_params(std::uint64_t seed, bool nonneg, std::int64_t force_layers) {
  const Rng root(seed);
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng r = root.fork(attempt);
    ModelSpec spec;
    spec.classes = 2 + r.below(2);
    const std::int64_t side = r.bernoulli(0.5) ? 4 : 6;
    spec.input_shape = Shape{1, side, side};
    const std::int64_t depth = force_layers > 0 ? force_layers : 1 + r.below(2);
    std::int64_t cur = side;
    bool shape_ok = true;
    for (std::int64_t ell = 0; ell < depth; ++ell) {
      LayerSpec ls;
      ls.filters = 1 + r.below(2);
      ls.kernel = 3;
      ls.pad = r.bernoulli(0.5) ? Pad::same : Pad::valid;
      const std::int64_t out = ls.pad == Pad::valid ? cur - 2 : cur;
      if (out < 1) {
        shape_ok = false;
        break;
      }
      ls.pool = (out % 2 == 0 && r.bernoulli(0.5)) ? 2 : 1;
      cur = out / ls.pool;
      spec.layers.push_back(ls);
    }
    if (!shape_ok) continue;
    try {
      spec.resolve();
      const LatentEnumerator en(spec);
      if (en.count() * spec.classes > (std::int64_t{1} << 13)) continue;
    } catch (const Error&) {
      continue;
    }

    Rng pr = r.fork(1);
    DgmParams p = init_params(spec, pr);
    p.sigma = pr.uniform(0.4, 1.2);
    for (Tensor& b : p.bias) {
      for (double& v : b.data) v = pr.normal(0.0, 0.3);
    }
    double total = 0.0;
    for (double& w : p.pi) {
      w = pr.uniform(0.5, 1.5);
      total += w;
    }
    for (double& w : p.pi) w /= total;
    if (nonneg) {
      for (Tensor& t : p.mu) {
        for (double& v : t.data) v = std::fabs(v);
      }
      for (std::size_t ell = 1; ell < p.gamma.size(); ++ell) {
        for (double& v : p.gamma[ell].data) v = std::fabs(v);
      }
    }
    return p;
  }
  throw_config("random micro-model: no admissible architecture after 64 draws");
}

std::string bound_csv_row(const BoundReport& r) {
  char buf[192];
  std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g,%.17g,%d",
                static_cast<unsigned long long>(r.seed), r.lhs, r.mid, r.rhs, r.slack,
                r.holds ? 1 : 0);
  return r.theorem + buf;
}

}  // namespace dgm
