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

#ifndef DGM_TRAIN_H_
#define DGM_TRAIN_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgm/data.h"
#include "dgm/losses.h"
#include "dgm/model.h"

namespace dgm {

// Optimizer choice with a piecewise-constant learning-rate schedule:
// the rate is multiplied by decay at every epoch listed in decay_epochs.
struct OptimizerSpec {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  double lr = 0.05;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::int64_t> decay_epochs;
  double decay = 0.1;
  // Global gradient-norm ceiling applied before each step; 0 disables.
  double clip = 10.0;

  double lr_at(std::int64_t epoch) const;
  void validate() const;
};

struct TrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch = 32;
  OptimizerSpec opt;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::int64_t threads = 1;
  // Labeled-sample budget: >= 0 keeps a class-balanced subset of that size
  // labeled and strips the rest; -1 uses the dataset's labels as-is.
  std::int64_t labeled = -1;
  // Epochs between val-accuracy evaluations (always computed on the last
  // epoch; other rows carry NaN).
  std::int64_t eval_every = 1;
  // Epochs between active-path counts on enumerable models; 0 disables.
  std::int64_t enum_cadence = 0;
  // Track the minimum rendered unit over layers 1..L each epoch.
  bool monitor_nonneg = true;
  // Refresh pseudo-labels once per epoch instead of every batch.
  bool estep_per_epoch = false;
  // Where the diagnostic checkpoint goes when a non-finite loss aborts
  // training ("" skips the snapshot).
  std::string snapshot_path;

  void validate() const;
};

// Per-parameter-group gradients, mirroring DgmParams layout (skip entries
// are empty tensors for identity-skip layers).
struct ParamGrads {
  std::vector<Tensor> mu;
  std::vector<Tensor> gamma;
  std::vector<Tensor> bias;
  std::vector<Tensor> skip;
};

ParamGrads zero_grads(const DgmParams& params);

// One metrics row. Columns with no value that epoch hold NaN.
struct EpochMetrics {
  std::int64_t epoch = 0;
  LossReport report;  // component values averaged over the epoch's batches
  double train_acc = 0.0;
  double val_acc = 0.0;
  double min_h = 0.0;
  double active_ratio = 0.0;
};

struct TrainResult {
  DgmParams params;
  std::vector<EpochMetrics> history;
  // Number of per-sample latent recomputations performed by E-steps; lets
  // tests assert that latents are refreshed every batch rather than cached.
  std::int64_t estep_refreshes = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_ce = 0.0;
  std::vector<std::int64_t> confusion;  // K*K row-major, rows = true class
};

// Full objective of one batch with gradients for every parameter group.
// The report matches semi_supervised_objective on the same inputs. Samples
// are processed on `threads` workers; the gradient reduction runs in a
// fixed sample order, so results do not depend on the thread count.
// render_labels, when given, pins the rendering class of unlabeled samples
// (entry -1 falls back to the fresh pseudo-label; labeled samples always
// use their label).
LossReport objective_with_grads(const DgmParams& params, const std::vector<Tensor>& images,
                                const std::vector<std::int64_t>& labels, const LossWeights& w,
                                std::int64_t threads, ParamGrads* grads,
                                std::int64_t* latent_refreshes = nullptr,
                                const std::vector<std::int64_t>* render_labels = nullptr);

// Generalized-EM loop: per batch, an E-step assigns labels and latents by
// the current model, then an M-step takes one optimizer step on the
// semi-supervised objective. Batches are slices of a per-epoch shuffle;
// when cross entropy is active, a slice without any labeled sample gets one
// appended round-robin from the labeled pool so every step is well posed.
// A non-finite loss aborts with a numeric error after writing the
// diagnostic snapshot.
TrainResult em_train(const DgmParams& init, const Dataset& train, const Dataset& val,
                     const TrainConfig& cfg);

// Argmax-posterior classification over the labeled part of the dataset.
EvalResult evaluate(const DgmParams& params, const Dataset& data);

// Central-difference audit of objective_with_grads: every coordinate of
// every parameter group is perturbed and the analytic gradient compared
// against (f(t+e) - f(t-e)) / 2e with e = eps * max(1, |t|). Returns the
// largest relative error max|ad - fd| / max(1, |ad|, |fd|). Coordinates
// whose eps and eps/2 numeric estimates disagree sit on a branch boundary
// (pool or switch flip inside the probe interval) and are skipped.
double objective_grad_check(const DgmParams& params, const std::vector<Tensor>& images,
                            const std::vector<std::int64_t>& labels, const LossWeights& w,
                            double eps = 1e-6);

// Metrics CSV: header row
// epoch,ce,rc,rpn,kl,mm,total,train_acc,val_acc,min_h,active_ratio.
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

// Flat key=value config file: one pair per line, '#' comments, blank lines
// ignored. Later duplicates win.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// Applies one config entry to the train config; returns false when the key
// is not a training key (callers may route it elsewhere). Raises a config
// error for unparseable values.
bool apply_train_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dgm

#endif  // DGM_TRAIN_H_
