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

#include "dgm/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "dgm/bounds.h"
#include "dgm/error.h"
#include "dgm/inference.h"
#include "dgm/io.h"
#include "dgm/ops.h"
#include "dgm/rng.h"

namespace dgm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Samples used for the per-epoch train-accuracy probe; a deterministic
// prefix so the metric is comparable across epochs.
constexpr std::int64_t kTrainAccCap = 1024;

// Samples rendered for the non-negativity monitor when the objective itself
// builds no render stacks.
constexpr std::int64_t kMonitorProbeCap = 64;

void run_striped(std::int64_t threads, std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::int64_t t =
      std::max<std::int64_t>(1, std::min<std::int64_t>(threads, static_cast<std::int64_t>(n)));
  if (t == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(t));
  for (std::int64_t w = 0; w < t; ++w) {
    workers.emplace_back([&, w]() {
      for (std::size_t i = static_cast<std::size_t>(w); i < n;
           i += static_cast<std::size_t>(t)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& w : workers) w.join();
  if (first) std::rethrow_exception(first);
}

void add_into(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

void add_grads(ParamGrads& acc, const ParamGrads& g) {
  for (std::size_t i = 0; i < acc.mu.size(); ++i) add_into(acc.mu[i], g.mu[i]);
  for (std::size_t i = 0; i < acc.gamma.size(); ++i) add_into(acc.gamma[i], g.gamma[i]);
  for (std::size_t i = 0; i < acc.bias.size(); ++i) add_into(acc.bias[i], g.bias[i]);
  for (std::size_t i = 0; i < acc.skip.size(); ++i) {
    if (acc.skip[i].numel() != 0) add_into(acc.skip[i], g.skip[i]);
  }
}

bool grads_finite(const ParamGrads& g) {
  auto ok = [](const std::vector<Tensor>& ts) {
    for (const Tensor& t : ts) {
      for (double v : t.data) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  };
  return ok(g.mu) && ok(g.gamma) && ok(g.bias) && ok(g.skip);
}

}  // namespace

ParamGrads zero_grads(const DgmParams& params) {
  ParamGrads g;
  for (const Tensor& t : params.mu) g.mu.emplace_back(t.shape);
  for (const Tensor& t : params.gamma) g.gamma.emplace_back(t.shape);
  for (const Tensor& t : params.bias) g.bias.emplace_back(t.shape);
  for (const Tensor& t : params.skip) g.skip.emplace_back(t.shape);
  return g;
}

double OptimizerSpec::lr_at(std::int64_t epoch) const {
  double rate = lr;
  for (std::int64_t boundary : decay_epochs) {
    if (epoch >= boundary) rate *= decay;
  }
  return rate;
}

void OptimizerSpec::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw_config("OptimizerSpec: lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw_config("OptimizerSpec: momentum must lie in [0,1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw_config("OptimizerSpec: betas must lie in [0,1)");
  }
  if (!(decay > 0.0)) throw_config("OptimizerSpec: decay must be positive");
  if (!(clip >= 0.0) || !std::isfinite(clip)) {
    throw_config("OptimizerSpec: clip must be finite and >= 0");
  }
  for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= decay_epochs[i - 1]) {
      throw_config("OptimizerSpec: decay epochs must be strictly increasing");
    }
  }
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw_config("TrainConfig: epochs must be positive");
  if (batch <= 0) throw_config("TrainConfig: batch must be positive");
  if (threads <= 0) throw_config("TrainConfig: threads must be positive");
  if (eval_every <= 0) throw_config("TrainConfig: eval_every must be positive");
  if (enum_cadence < 0) throw_config("TrainConfig: enum_cadence must be non-negative");
  if (labeled < -1) throw_config("TrainConfig: labeled must be -1 or non-negative");
  opt.validate();
  weights.validate();
}

namespace {

// Everything built for one sample in the gradient pass. The tape stays
// alive until its backward runs (after the central moment-matching step
// when that term is active).
struct SampleSlot {
  Tape tape;
  ParamVars pv;
  ForwardVars fwd;
  ForwardVars fwd_min;
  RenderVars rnd;
  Var rc_var;
  Var root;
  bool has_min = false;
  bool has_render = false;
  std::int64_t eff = -1;
  double ce_max = 0.0;
  double ce_min = 0.0;
  double kl = 0.0;
  double rc = 0.0;
  double eta_v = 0.0;
  InferenceTrace trace;  // values, for moment matching
  RenderStack stack;     // values, for moment matching
  ParamGrads grads;
};

ParamGrads extract_grads(Tape& tape, const ParamVars& pv, const DgmParams& params) {
  ParamGrads g = zero_grads(params);
  for (std::size_t i = 0; i < pv.mu.size(); ++i) g.mu[i] = tape.grad(pv.mu[i]);
  for (std::size_t i = 0; i < pv.gamma.size(); ++i) g.gamma[i] = tape.grad(pv.gamma[i]);
  for (std::size_t i = 0; i < pv.bias.size(); ++i) g.bias[i] = tape.grad(pv.bias[i]);
  for (std::size_t i = 0; i < pv.skip.size(); ++i) {
    if (pv.skip[i].valid()) g.skip[i] = tape.grad(pv.skip[i]);
  }
  return g;
}

}  // namespace

LossReport objective_with_grads(const DgmParams& params, const std::vector<Tensor>& images,
                                const std::vector<std::int64_t>& labels, const LossWeights& w,
                                std::int64_t threads, ParamGrads* grads,
                                std::int64_t* latent_refreshes,
                                const std::vector<std::int64_t>* render_labels) {
  w.validate();
  if (images.empty() || images.size() != labels.size()) {
    throw_data("objective_with_grads: images and labels must be non-empty, equal length");
  }
  if (render_labels != nullptr && render_labels->size() != images.size()) {
    throw_data("objective_with_grads: render_labels length mismatch");
  }
  std::size_t labeled = 0;
  for (std::int64_t l : labels) {
    if (l >= params.num_classes()) throw_data("objective_with_grads: label out of range");
    if (l >= 0) ++labeled;
  }
  if (labeled == 0 && w.alpha_ce > 0.0) {
    throw_config("objective_with_grads: cross-entropy weight is positive but the batch "
                 "has no labeled samples");
  }
  const std::size_t n = images.size();
  const std::int64_t num_layers = params.num_layers();
  const bool need_render = w.alpha_rc > 0.0 || w.alpha_mm > 0.0;
  const bool need_rpn = w.alpha_rc > 0.0 && w.alpha_pn > 0.0;
  const bool need_mm = w.alpha_mm > 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_lab = labeled > 0 ? 1.0 / static_cast<double>(labeled) : 0.0;

  Tensor log_pi(Shape{params.num_classes()});
  for (std::int64_t k = 0; k < params.num_classes(); ++k) {
    log_pi.data[static_cast<std::size_t>(k)] = std::log(params.pi[static_cast<std::size_t>(k)]);
  }
  Tensor pi_tensor(Shape{params.num_classes()});
  for (std::int64_t k = 0; k < params.num_classes(); ++k) {
    pi_tensor.data[static_cast<std::size_t>(k)] = params.pi[static_cast<std::size_t>(k)];
  }

  Tensor denom_scores;
  if (need_rpn) denom_scores = rpn_denominator_scores(params);

  std::vector<SampleSlot> slots(n);

  auto build = [&](std::size_t i) {
    SampleSlot& s = slots[i];
    s.pv = emit_params(s.tape, params);
    s.fwd = forward_t(s.tape, params, s.pv, images[i], Branch::max);
    const Tensor& logits_v = s.tape.value(s.fwd.logits);
    if (labels[i] >= 0) {
      s.eff = labels[i];
    } else if (render_labels != nullptr && (*render_labels)[i] >= 0) {
      s.eff = (*render_labels)[i];
    } else {
      s.eff = argmax_index(logits_v);
    }
    std::vector<std::pair<Var, double>> root_terms;
    if (w.alpha_kl > 0.0) {
      const Var kl_var = kl_logits_prior_t(s.tape, s.fwd.logits, pi_tensor);
      s.kl = s.tape.value(kl_var).item();
      root_terms.emplace_back(kl_var, w.alpha_kl * inv_n);
    }
    if (labels[i] >= 0 && w.alpha_ce > 0.0) {
      const Var ce_var = ce_from_logits_t(s.tape, s.fwd.logits, labels[i]);
      s.ce_max = s.tape.value(ce_var).item();
      if (w.max_min) {
        if (w.alpha_max != 0.0) {
          root_terms.emplace_back(ce_var, w.alpha_ce * w.alpha_max * inv_lab);
        }
        if (w.alpha_min != 0.0) {
          s.fwd_min = forward_t(s.tape, params, s.pv, images[i], Branch::min);
          s.has_min = true;
          const Var ce_min_var = ce_from_logits_t(s.tape, s.fwd_min.logits, labels[i]);
          s.ce_min = s.tape.value(ce_min_var).item();
          root_terms.emplace_back(ce_min_var, w.alpha_ce * w.alpha_min * inv_lab);
        }
      } else {
        root_terms.emplace_back(ce_var, w.alpha_ce * inv_lab);
      }
    }
    if (need_render) {
      s.rnd = render_t(s.tape, params, s.pv, s.eff, s.fwd.latents);
      s.has_render = true;
      if (w.alpha_rc > 0.0) {
        s.rc_var = sqdiff_half_t(s.tape, s.rnd.h[0], images[i]);
        s.rc = s.tape.value(s.rc_var).item();
        root_terms.emplace_back(s.rc_var, w.alpha_rc * inv_n);
        if (w.alpha_pn > 0.0) {
          s.eta_v = s.tape.value(s.rnd.eta).item();
          root_terms.emplace_back(s.rnd.eta, -w.alpha_rc * w.alpha_pn * inv_n);
        }
      }
    }
    if (!root_terms.empty()) s.root = weighted_sum_t(s.tape, root_terms);
    if (need_mm) {
      s.trace.psi.resize(static_cast<std::size_t>(num_layers) + 1);
      s.trace.psi[0] = images[i];
      for (std::int64_t ell = 1; ell <= num_layers; ++ell) {
        s.trace.psi[static_cast<std::size_t>(ell)] =
            s.tape.value(s.fwd.psi[static_cast<std::size_t>(ell)]);
      }
      s.stack.h.resize(static_cast<std::size_t>(num_layers) + 1);
      for (std::int64_t ell = 0; ell <= num_layers; ++ell) {
        s.stack.h[static_cast<std::size_t>(ell)] =
            s.tape.value(s.rnd.h[static_cast<std::size_t>(ell)]);
      }
    }
  };

  MomentMatching mm;
  auto finish = [&](std::size_t i) {
    SampleSlot& s = slots[i];
    std::vector<std::pair<Var, Tensor>> seeds;
    if (s.root.valid()) seeds.emplace_back(s.root, Tensor::scalar(1.0));
    if (need_mm) {
      for (std::int64_t ell = 1; ell <= num_layers; ++ell) {
        Tensor dh = mm.d_h[i][static_cast<std::size_t>(ell - 1)];
        Tensor dp = mm.d_psi[i][static_cast<std::size_t>(ell - 1)];
        scale_in_place(dh, w.alpha_mm);
        scale_in_place(dp, w.alpha_mm);
        seeds.emplace_back(s.rnd.h[static_cast<std::size_t>(ell)], std::move(dh));
        seeds.emplace_back(s.fwd.psi[static_cast<std::size_t>(ell)], std::move(dp));
      }
    }
    if (!seeds.empty()) s.tape.backward(seeds);
    s.grads = extract_grads(s.tape, s.pv, params);
    s.tape = Tape();
  };

  if (!need_mm) {
    run_striped(threads, n, [&](std::size_t i) {
      build(i);
      finish(i);
    });
  } else {
    run_striped(threads, n, build);
    std::vector<const RenderStack*> sp;
    std::vector<const InferenceTrace*> tp;
    for (std::size_t i = 0; i < n; ++i) {
      sp.push_back(&slots[i].stack);
      tp.push_back(&slots[i].trace);
    }
    mm = moment_matching(sp, tp, true);
    run_striped(threads, n, finish);
  }

  // Fixed-order reduction: sample 0..n-1, then the shared normalizer tape.
  if (grads != nullptr) {
    *grads = zero_grads(params);
    for (std::size_t i = 0; i < n; ++i) add_grads(*grads, slots[i].grads);
    if (need_rpn) {
      Tape dt;
      ParamVars dpv = emit_params(dt, params);
      const Var lse = rpn_denominator_t(dt, params, dpv, Branch::max);
      dt.backward({{lse, Tensor::scalar(w.alpha_rc * w.alpha_pn)}});
      add_grads(*grads, extract_grads(dt, dpv, params));
    }
  }

  if (latent_refreshes != nullptr) *latent_refreshes += static_cast<std::int64_t>(n);

  LossReport report;
  double sum_ce_max = 0.0, sum_ce_min = 0.0, sum_rc = 0.0, sum_rpn = 0.0, sum_kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_ce_max += slots[i].ce_max;
    sum_ce_min += slots[i].ce_min;
    sum_kl += slots[i].kl;
    sum_rc += slots[i].rc;
    if (need_rpn) sum_rpn += rpn_value(slots[i].eta_v, slots[i].eff, denom_scores, params.pi);
  }
  if (w.alpha_ce > 0.0) {
    if (w.max_min) {
      report.set("ce_max", sum_ce_max * inv_lab, w.alpha_ce * w.alpha_max);
      report.set("ce_min", sum_ce_min * inv_lab, w.alpha_ce * w.alpha_min);
    } else {
      report.set("ce", sum_ce_max * inv_lab, w.alpha_ce);
    }
  }
  if (w.alpha_rc > 0.0) {
    report.set("rc", sum_rc * inv_n, w.alpha_rc);
    if (w.alpha_pn > 0.0) report.set("rpn", sum_rpn * inv_n, w.alpha_rc * w.alpha_pn);
  }
  if (w.alpha_kl > 0.0) report.set("kl", sum_kl * inv_n, w.alpha_kl);
  if (need_mm) report.set("mm", mm.value, w.alpha_mm);
  report.finalize();
  return report;
}

namespace {

// SGD-with-momentum / Adam state, tensor-for-tensor with the parameters.
struct OptState {
  ParamGrads m1;
  ParamGrads m2;
  std::int64_t step = 0;
};

void step_tensor(const OptimizerSpec& o, double lr, std::int64_t t, Tensor& p, const Tensor& g,
                 Tensor& m1, Tensor& m2) {
  if (o.kind == OptimizerSpec::Kind::sgd) {
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m1.data[i] = o.momentum * m1.data[i] - lr * g.data[i];
      p.data[i] += m1.data[i];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    m1.data[i] = o.beta1 * m1.data[i] + (1.0 - o.beta1) * g.data[i];
    m2.data[i] = o.beta2 * m2.data[i] + (1.0 - o.beta2) * g.data[i] * g.data[i];
    p.data[i] -= lr * (m1.data[i] / bc1) / (std::sqrt(m2.data[i] / bc2) + o.eps);
  }
}

void clip_global_norm(ParamGrads& g, double clip) {
  if (clip <= 0.0) return;
  double sq = 0.0;
  const auto add_group = [&sq](const std::vector<Tensor>& ts) {
    for (const Tensor& t : ts) {
      for (const double v : t.data) sq += v * v;
    }
  };
  add_group(g.mu);
  add_group(g.gamma);
  add_group(g.bias);
  add_group(g.skip);
  const double norm = std::sqrt(sq);
  if (norm <= clip) return;
  const double scale = clip / norm;
  const auto scale_group = [scale](std::vector<Tensor>& ts) {
    for (Tensor& t : ts) {
      for (double& v : t.data) v *= scale;
    }
  };
  scale_group(g.mu);
  scale_group(g.gamma);
  scale_group(g.bias);
  scale_group(g.skip);
}

void apply_step(DgmParams& p, const ParamGrads& g, OptState& st, const OptimizerSpec& o,
                double lr) {
  ++st.step;
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    step_tensor(o, lr, st.step, p.mu[i], g.mu[i], st.m1.mu[i], st.m2.mu[i]);
  }
  for (std::size_t i = 0; i < p.gamma.size(); ++i) {
    step_tensor(o, lr, st.step, p.gamma[i], g.gamma[i], st.m1.gamma[i], st.m2.gamma[i]);
  }
  for (std::size_t i = 0; i < p.bias.size(); ++i) {
    step_tensor(o, lr, st.step, p.bias[i], g.bias[i], st.m1.bias[i], st.m2.bias[i]);
  }
  for (std::size_t i = 0; i < p.skip.size(); ++i) {
    if (p.skip[i].numel() != 0) {
      step_tensor(o, lr, st.step, p.skip[i], g.skip[i], st.m1.skip[i], st.m2.skip[i]);
    }
  }
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t k = idx.size(); k > 1; --k) {
    std::swap(idx[k - 1], idx[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(k)))]);
  }
}

double accuracy_probe(const DgmParams& params, const Dataset& data, std::int64_t cap) {
  const std::int64_t n = std::min<std::int64_t>(cap, static_cast<std::int64_t>(data.size()));
  std::int64_t seen = 0, correct = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (data.labels[static_cast<std::size_t>(i)] < 0) continue;
    const InferenceTrace tr = forward(params, data.images[static_cast<std::size_t>(i)]);
    ++seen;
    if (argmax_index(tr.logits) == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : kNaN;
}

}  // namespace

TrainResult em_train(const DgmParams& init, const Dataset& train, const Dataset& val,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw_data("em_train: empty training set");
  validate_params(init);

  TrainResult result;
  result.params = init;
  DgmParams& params = result.params;

  Rng root(cfg.seed);

  // Working label view: the labeled budget masks here, never in the caller's
  // dataset. Ground-truth labels stay available for the accuracy probe.
  std::vector<std::int64_t> labels = train.labels;
  if (cfg.labeled >= 0) {
    Dataset tmp;
    tmp.labels = labels;
    tmp.num_classes = train.num_classes;
    Rng mask_rng = root.fork(0);
    mask_labels(tmp, cfg.labeled, mask_rng);
    labels = std::move(tmp.labels);
  }
  std::vector<std::size_t> labeled_pool;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) labeled_pool.push_back(i);
  }
  if (labeled_pool.empty() && cfg.weights.alpha_ce > 0.0) {
    throw_config("em_train: cross-entropy weight is positive but no sample is labeled");
  }

  const std::size_t n = train.size();
  OptState opt_state{zero_grads(params), zero_grads(params), 0};

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const bool renders_in_objective = cfg.weights.alpha_rc > 0.0 || cfg.weights.alpha_mm > 0.0;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = root.fork(static_cast<std::uint64_t>(epoch) + 1);
    shuffle_indices(order, epoch_rng);
    std::vector<std::size_t> pool = labeled_pool;
    shuffle_indices(pool, epoch_rng);
    std::size_t pool_next = 0;

    // Per-epoch E-step: freeze pseudo-labels for this epoch's renders.
    std::vector<std::int64_t> frozen;
    if (cfg.estep_per_epoch) {
      frozen = labels;
      for (std::size_t i = 0; i < n; ++i) {
        if (frozen[i] < 0) {
          const InferenceTrace tr = forward(params, train.images[i]);
          frozen[i] = pseudo_label(tr, params.pi);
        }
      }
    }

    const double lr = cfg.opt.lr_at(epoch);
    std::map<std::string, LossReport::Entry> sums;
    double total_sum = 0.0;
    std::int64_t batches = 0;
    double epoch_min_h = std::numeric_limits<double>::infinity();
    bool saw_min_h = false;

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
      std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      if (cfg.weights.alpha_ce > 0.0) {
        bool has_labeled = false;
        for (std::size_t i : batch_idx) {
          if (labels[i] >= 0) {
            has_labeled = true;
            break;
          }
        }
        if (!has_labeled) {
          batch_idx.push_back(pool[pool_next % pool.size()]);
          ++pool_next;
        }
      }
      std::vector<Tensor> bimgs;
      std::vector<std::int64_t> call_labels;
      std::vector<std::int64_t> render_override;
      bimgs.reserve(batch_idx.size());
      call_labels.reserve(batch_idx.size());
      for (std::size_t i : batch_idx) {
        bimgs.push_back(train.images[i]);
        call_labels.push_back(labels[i]);
        // In per-epoch E-step mode an unlabeled sample renders under its
        // frozen pseudo-label; it still contributes no cross entropy.
        render_override.push_back(cfg.estep_per_epoch && labels[i] < 0 ? frozen[i] : -1);
      }

      ParamGrads grads;
      LossReport report;
      try {
        report = objective_with_grads(params, bimgs, call_labels, cfg.weights, cfg.threads,
                                      &grads, &result.estep_refreshes,
                                      cfg.estep_per_epoch ? &render_override : nullptr);
      } catch (const Error& e) {
        // Overflowed parameters can surface as a numeric error inside the
        // objective itself; the diagnostic snapshot must still be written.
        if (e.kind() == ErrorKind::numeric && !cfg.snapshot_path.empty()) {
          save_checkpoint(cfg.snapshot_path, params);
        }
        throw;
      }
      if (!std::isfinite(report.total) || !grads_finite(grads)) {
        if (!cfg.snapshot_path.empty()) save_checkpoint(cfg.snapshot_path, params);
        std::ostringstream os;
        os << "em_train: non-finite loss at epoch " << epoch << ", batch " << batches
           << " (total=" << report.total << ")";
        if (!cfg.snapshot_path.empty()) os << "; diagnostic checkpoint at " << cfg.snapshot_path;
        throw_numeric(os.str());
      }
      clip_global_norm(grads, cfg.opt.clip);
      apply_step(params, grads, opt_state, cfg.opt, lr);

      for (const auto& [name, entry] : report.components) {
        auto& s = sums[name];
        s.value += entry.value;
        s.weight = entry.weight;
      }
      total_sum += report.total;
      ++batches;

      if (cfg.monitor_nonneg && renders_in_objective) {
        // Cheap monitor: render the batch under current (post-step) params.
        for (std::size_t j = 0; j < std::min<std::size_t>(batch_idx.size(), 8); ++j) {
          const InferenceTrace tr = forward(params, bimgs[j]);
          const std::int64_t y = call_labels[j] >= 0
                                     ? call_labels[j]
                                     : (render_override[j] >= 0 ? render_override[j]
                                                                : pseudo_label(tr, params.pi));
          epoch_min_h = std::min(epoch_min_h, min_h(render(params, y, tr.latents)));
          saw_min_h = true;
        }
      }
    }

    EpochMetrics row;
    row.epoch = epoch;
    for (const auto& [name, entry] : sums) {
      row.report.set(name, entry.value / static_cast<double>(batches), entry.weight);
    }
    row.report.finalize();
    row.train_acc = accuracy_probe(params, train, kTrainAccCap);
    const bool eval_now = !val.images.empty() &&
                          (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1);
    row.val_acc = eval_now ? evaluate(params, val).accuracy : kNaN;

    if (cfg.monitor_nonneg && !saw_min_h) {
      const std::int64_t probe = std::min<std::int64_t>(kMonitorProbeCap,
                                                        static_cast<std::int64_t>(n));
      for (std::int64_t i = 0; i < probe; ++i) {
        const std::size_t j = static_cast<std::size_t>(i);
        const InferenceTrace tr = forward(params, train.images[j]);
        const std::int64_t y = labels[j] >= 0 ? labels[j] : pseudo_label(tr, params.pi);
        epoch_min_h = std::min(epoch_min_h, min_h(render(params, y, tr.latents)));
        saw_min_h = true;
      }
    }
    row.min_h = saw_min_h ? epoch_min_h : kNaN;

    row.active_ratio = kNaN;
    if (cfg.enum_cadence > 0 && (epoch % cfg.enum_cadence == 0 || epoch == cfg.epochs - 1)) {
      try {
        Dataset view;
        view.images = train.images;
        view.labels = labels;
        view.num_classes = train.num_classes;
        row.active_ratio = count_active_paths(params, view).ratio;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::capacity) throw;
      }
    }
    result.history.push_back(std::move(row));
  }
  return result;
}

EvalResult evaluate(const DgmParams& params, const Dataset& data) {
  const std::int64_t k = params.num_classes();
  EvalResult r;
  r.confusion.assign(static_cast<std::size_t>(k * k), 0);
  std::int64_t seen = 0, correct = 0;
  double ce = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::int64_t label = data.labels[i];
    if (label < 0) continue;
    if (label >= k) throw_data("evaluate: label out of range");
    const InferenceTrace tr = forward(params, data.images[i]);
    const std::int64_t pred = argmax_index(tr.logits);
    ++seen;
    if (pred == label) ++correct;
    ce += cross_entropy_logits(tr.logits, label);
    ++r.confusion[static_cast<std::size_t>(label * k + pred)];
  }
  if (seen == 0) throw_data("evaluate: dataset has no labeled samples");
  r.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  r.mean_ce = ce / static_cast<double>(seen);
  return r;
}

double objective_grad_check(const DgmParams& params, const std::vector<Tensor>& images,
                            const std::vector<std::int64_t>& labels, const LossWeights& w,
                            double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw_config("objective_grad_check: eps must be positive");
  }
  ParamGrads grads;
  objective_with_grads(params, images, labels, w, 1, &grads);
  DgmParams probe = params;

  double worst = 0.0;
  const auto check_group = [&](const Tensor& analytic, Tensor& theta) {
    for (std::int64_t j = 0; j < theta.numel(); ++j) {
      const double saved = theta[j];
      const double e = eps * std::max(1.0, std::fabs(saved));
      const auto central = [&](double step) {
        theta[j] = saved + step;
        const double plus = objective_with_grads(probe, images, labels, w, 1, nullptr).total;
        theta[j] = saved - step;
        const double minus = objective_with_grads(probe, images, labels, w, 1, nullptr).total;
        theta[j] = saved;
        return (plus - minus) / (2.0 * step);
      };
      const double num = central(e);
      const double num_half = central(0.5 * e);
      const double agree =
          std::fabs(num - num_half) / std::max({1.0, std::fabs(num), std::fabs(num_half)});
      if (agree > 1e-4) continue;
      const double ana = analytic[j];
      const double rel = std::fabs(ana - num) / std::max({1.0, std::fabs(ana), std::fabs(num)});
      worst = std::max(worst, rel);
    }
  };
  for (std::size_t y = 0; y < probe.mu.size(); ++y) check_group(grads.mu[y], probe.mu[y]);
  for (std::size_t l = 0; l < probe.gamma.size(); ++l) check_group(grads.gamma[l], probe.gamma[l]);
  for (std::size_t l = 0; l < probe.bias.size(); ++l) check_group(grads.bias[l], probe.bias[l]);
  for (std::size_t l = 0; l < probe.skip.size(); ++l) {
    if (probe.skip[l].numel() > 0) check_group(grads.skip[l], probe.skip[l]);
  }
  return worst;
}

namespace {

std::string fmt_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot open metrics CSV for writing: " + path);
  os << "epoch,ce,rc,rpn,kl,mm,total,train_acc,val_acc,min_h,active_ratio\n";
  for (const EpochMetrics& m : history) {
    const auto& c = m.report.components;
    auto col = [&](const std::string& name) {
      auto it = c.find(name);
      return it != c.end() ? it->second.value : kNaN;
    };
    double ce = kNaN;
    if (c.count("ce") != 0u) {
      ce = col("ce");
    } else if (c.count("ce_max") != 0u) {
      // Fold the two branch entries by their relative weights.
      const auto& mx = c.at("ce_max");
      const auto& mn = c.at("ce_min");
      const double wsum = mx.weight + mn.weight;
      ce = wsum > 0.0 ? (mx.weight * mx.value + mn.weight * mn.value) / wsum : kNaN;
    }
    os << m.epoch << ',' << fmt_metric(ce) << ',' << fmt_metric(col("rc")) << ','
       << fmt_metric(col("rpn")) << ',' << fmt_metric(col("kl")) << ',' << fmt_metric(col("mm"))
       << ',' << fmt_metric(m.report.total) << ',' << fmt_metric(m.train_acc) << ','
       << fmt_metric(m.val_acc) << ',' << fmt_metric(m.min_h) << ','
       << fmt_metric(m.active_ratio) << '\n';
  }
  if (!os) throw_data("write failure on metrics CSV: " + path);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw_config("config key '" + key + "': cannot parse integer from '" + value + "'");
  }
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw_config("config key '" + key + "': cannot parse number from '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw_config("config key '" + key + "': cannot parse boolean from '" + value + "'");
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_data("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw_config("config file " + path + ": line " + std::to_string(lineno) +
                   " is not key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw_config("config file " + path + ": line " + std::to_string(lineno) + " has empty key");
    }
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

bool apply_train_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_i64(key, value);
  else if (key == "batch") cfg.batch = parse_i64(key, value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_i64(key, value));
  else if (key == "threads") cfg.threads = parse_i64(key, value);
  else if (key == "labeled") cfg.labeled = parse_i64(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_i64(key, value);
  else if (key == "enum_cadence") cfg.enum_cadence = parse_i64(key, value);
  else if (key == "estep_per_epoch") cfg.estep_per_epoch = parse_bool(key, value);
  else if (key == "monitor_nonneg") cfg.monitor_nonneg = parse_bool(key, value);
  else if (key == "snapshot") cfg.snapshot_path = value;
  else if (key == "lr") cfg.opt.lr = parse_f64(key, value);
  else if (key == "momentum") cfg.opt.momentum = parse_f64(key, value);
  else if (key == "beta1") cfg.opt.beta1 = parse_f64(key, value);
  else if (key == "beta2") cfg.opt.beta2 = parse_f64(key, value);
  else if (key == "decay") cfg.opt.decay = parse_f64(key, value);
  else if (key == "clip") cfg.opt.clip = parse_f64(key, value);
  else if (key == "alpha_ce") cfg.weights.alpha_ce = parse_f64(key, value);
  else if (key == "alpha_rc") cfg.weights.alpha_rc = parse_f64(key, value);
  else if (key == "alpha_kl") cfg.weights.alpha_kl = parse_f64(key, value);
  else if (key == "alpha_mm") cfg.weights.alpha_mm = parse_f64(key, value);
  else if (key == "alpha_pn") cfg.weights.alpha_pn = parse_f64(key, value);
  else if (key == "alpha_max") cfg.weights.alpha_max = parse_f64(key, value);
  else if (key == "alpha_min") cfg.weights.alpha_min = parse_f64(key, value);
  else if (key == "maxmin") cfg.weights.max_min = parse_bool(key, value);
  else if (key == "optimizer") {
    if (value == "sgd") cfg.opt.kind = OptimizerSpec::Kind::sgd;
    else if (value == "adam") cfg.opt.kind = OptimizerSpec::Kind::adam;
    else throw_config("config key 'optimizer': expected sgd or adam, got '" + value + "'");
  } else if (key == "decay_epochs") {
    cfg.opt.decay_epochs.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) cfg.opt.decay_epochs.push_back(parse_i64(key, t));
    }
  } else {
    return false;
  }
  return true;
}

}  // namespace dgm
