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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dgm/bounds.h"
#include "dgm/data.h"
#include "dgm/error.h"
#include "dgm/inference.h"
#include "dgm/io.h"
#include "dgm/losses.h"
#include "dgm/model.h"
#include "dgm/train.h"

namespace {

namespace fs = std::filesystem;

int exit_code_for(dgm::ErrorKind kind) {
  switch (kind) {
    case dgm::ErrorKind::config:
    case dgm::ErrorKind::capacity:
      return 1;
    case dgm::ErrorKind::data:
      return 2;
    case dgm::ErrorKind::numeric:
      return 3;
  }
  return 1;
}

void ensure_dir(const std::string& path) {
  if (!path.empty()) fs::create_directories(path);
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- Architecture construction ----

struct ArchOptions {
  std::string arch = "mnist-table6";
  double width = 0.25;
  bool resnet = false;
  bool densenet = false;
};

std::int64_t scaled(std::int64_t base, double width) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(base) * width));
}

// "mnist-table6": 28x28 input; 32@5x5 full + pool2; 64@3x3 valid;
// 64@3x3 full + pool2; 128@3x3 valid + pool6; class templates on [128,1,1].
// "micro": 6x6 input, two tiny layers with an enumerable path space.
// Filter counts scale by --width (floor 1).
dgm::ModelSpec make_spec(const ArchOptions& a) {
  dgm::ModelSpec spec;
  if (a.arch == "mnist-table6") {
    spec.classes = 10;
    spec.input_shape = dgm::Shape{1, 28, 28};
    spec.layers = {
        {scaled(32, a.width), 5, dgm::Pad::full, 2},
        {scaled(64, a.width), 3, dgm::Pad::valid, 1},
        {scaled(64, a.width), 3, dgm::Pad::full, 2},
        {scaled(128, a.width), 3, dgm::Pad::valid, 6},
    };
  } else if (a.arch == "micro") {
    spec.classes = 4;
    spec.input_shape = dgm::Shape{1, 6, 6};
    spec.layers = {
        {scaled(1, a.width), 3, dgm::Pad::valid, 2},
        {scaled(2, a.width), 3, dgm::Pad::same, 2},
    };
  } else {
    dgm::throw_config("unknown --arch '" + a.arch + "' (choose mnist-table6 or micro)");
  }
  if (a.resnet && a.densenet) dgm::throw_config("--resnet and --densenet are mutually exclusive");
  if (a.resnet) {
    spec.arch = dgm::ArchKind::residual;
    std::int64_t cur = spec.input_shape[1];
    for (dgm::LayerSpec& l : spec.layers) {
      l.pad = dgm::Pad::same;
      if (l.pool > 1 && cur % l.pool != 0) l.pool = 1;
      cur /= l.pool;
    }
  }
  if (a.densenet) {
    spec.arch = dgm::ArchKind::dense;
    for (dgm::LayerSpec& l : spec.layers) {
      l.pad = dgm::Pad::same;
      l.pool = 1;
    }
  }
  spec.resolve();
  return spec;
}

bool parse_cli_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  dgm::throw_config("config key '" + key + "': expected a boolean, got '" + value + "'");
}

// ---- train ----

struct TrainCli {
  std::string config;
  std::string out = "train-out";
  std::string data_dir = dgm::mnist_dir_from_env();
  std::string optimizer;
  ArchOptions arch;
  double sigma = 0.1;
  std::int64_t train_count = 2000;
  std::int64_t test_count = 500;
  dgm::TrainConfig cfg;
};

// Config key -> dominating CLI flag. Flags the user typed win over the file.
const std::map<std::string, std::string>& train_key_flags() {
  static const std::map<std::string, std::string> kFlags = {
      {"epochs", "--epochs"},         {"batch", "--batch"},
      {"seed", "--seed"},             {"threads", "--threads"},
      {"labeled", "--labeled"},       {"eval_every", "--eval-every"},
      {"enum_cadence", "--enum-cadence"},
      {"estep_per_epoch", "--estep-per-epoch"},
      {"lr", "--lr"},                 {"optimizer", "--optimizer"},
      {"clip", "--clip"},
      {"alpha_ce", "--alpha-ce"},     {"alpha_rc", "--alpha-rc"},
      {"alpha_kl", "--alpha-kl"},     {"alpha_mm", "--alpha-mm"},
      {"alpha_pn", "--alpha-pn"},     {"alpha_max", "--alpha-max"},
      {"alpha_min", "--alpha-min"},   {"maxmin", "--maxmin"},
      {"arch", "--arch"},             {"width", "--width"},
      {"resnet", "--resnet"},         {"densenet", "--densenet"},
      {"sigma", "--sigma"},           {"data_dir", "--data-dir"},
      {"train_count", "--train-count"},
      {"test_count", "--test-count"},
  };
  return kFlags;
}

int run_train(TrainCli& t, CLI::App* cmd) {
  if (!t.config.empty()) {
    for (const auto& [key, value] : dgm::parse_kv_file(t.config)) {
      const auto flag = train_key_flags().find(key);
      if (flag != train_key_flags().end() && cmd->count(flag->second) > 0) continue;
      if (dgm::apply_train_entry(t.cfg, key, value)) continue;
      if (key == "arch") {
        t.arch.arch = value;
      } else if (key == "width") {
        t.arch.width = std::stod(value);
      } else if (key == "resnet") {
        t.arch.resnet = parse_cli_bool(key, value);
      } else if (key == "densenet") {
        t.arch.densenet = parse_cli_bool(key, value);
      } else if (key == "sigma") {
        t.sigma = std::stod(value);
      } else if (key == "data_dir") {
        t.data_dir = value;
      } else if (key == "train_count") {
        t.train_count = std::stoll(value);
      } else if (key == "test_count") {
        t.test_count = std::stoll(value);
      } else {
        dgm::throw_config("unknown config key '" + key + "' in " + t.config);
      }
    }
  }
  if (!t.optimizer.empty()) {
    t.cfg.opt.kind = t.optimizer == "adam" ? dgm::OptimizerSpec::Kind::adam
                                           : dgm::OptimizerSpec::Kind::sgd;
  }

  dgm::ModelSpec spec = make_spec(t.arch);
  dgm::Rng init_rng = dgm::Rng(t.cfg.seed).fork(std::uint64_t{1} << 32);
  dgm::DgmParams params = dgm::init_params(spec, init_rng, t.sigma);

  dgm::Dataset train_data, test_data;
  if (t.arch.arch == "micro" && t.data_dir.empty()) {
    // Self-contained demo: draw the corpus from a matching random model.
    dgm::Rng truth_rng = dgm::Rng(t.cfg.seed).fork(55);
    dgm::DgmParams truth = dgm::init_params(spec, truth_rng, t.sigma);
    dgm::Rng train_rng = dgm::Rng(t.cfg.seed).fork(56);
    dgm::Rng test_rng = dgm::Rng(t.cfg.seed).fork(57);
    train_data = dgm::synth_dataset(truth, t.train_count, 1.0, train_rng).data;
    test_data = dgm::synth_dataset(truth, t.test_count, 1.0, test_rng).data;
  } else {
    std::tie(train_data, test_data) =
        dgm::load_digit_corpus(t.train_count, t.test_count, t.data_dir, t.cfg.seed);
  }

  ensure_dir(t.out);
  if (t.cfg.snapshot_path.empty()) t.cfg.snapshot_path = join(t.out, "diverged.ckpt");

  const dgm::TrainResult result = dgm::em_train(params, train_data, test_data, t.cfg);
  dgm::write_metrics_csv(join(t.out, "metrics.csv"), result.history);
  dgm::save_checkpoint(join(t.out, "model.ckpt"), result.params);

  if (!result.history.empty()) {
    const dgm::EpochMetrics& last = result.history.back();
    std::printf("epochs %zu  train_acc %s  val_acc %s  total %s\n", result.history.size(),
                fmt17(last.train_acc).c_str(), fmt17(last.val_acc).c_str(),
                fmt17(last.report.total).c_str());
  }
  std::printf("wrote %s\nwrote %s\n", join(t.out, "metrics.csv").c_str(),
              join(t.out, "model.ckpt").c_str());
  return 0;
}

// ---- eval ----

struct EvalCli {
  std::string model;
  std::string data_dir = dgm::mnist_dir_from_env();
  std::int64_t test_count = 500;
  std::uint64_t seed = 0;
};

int run_eval(const EvalCli& e) {
  const dgm::DgmParams params = dgm::load_checkpoint(e.model);
  const auto [train_data, test_data] =
      dgm::load_digit_corpus(1, e.test_count, e.data_dir, e.seed);
  (void)train_data;
  const dgm::EvalResult r = dgm::evaluate(params, test_data);
  std::printf("accuracy %s\nce %s\n", fmt17(r.accuracy).c_str(), fmt17(r.mean_ce).c_str());
  return 0;
}

// ---- sample ----

struct SampleCli {
  std::string model;
  std::string out = "samples";
  std::int64_t y = 0;
  std::int64_t count = 4;
  std::int64_t sweeps = 5;
  double sigma = -1.0;  // <0 keeps the checkpoint's sigma
  std::uint64_t seed = 0;
};

int run_sample(const SampleCli& s, bool sigma_given) {
  dgm::DgmParams params = dgm::load_checkpoint(s.model);
  if (sigma_given) {
    if (s.sigma < 0.0) dgm::throw_config("--sigma must be >= 0");
    params.sigma = s.sigma;
  }
  if (s.y < 0 || s.y >= params.num_classes()) {
    dgm::throw_config("--y " + std::to_string(s.y) + " out of range: model has " +
                      std::to_string(params.num_classes()) + " classes");
  }
  if (s.count < 1) dgm::throw_config("--count must be >= 1");
  ensure_dir(s.out);

  std::ofstream csv(join(s.out, "samples.csv"), std::ios::binary);
  if (!csv) dgm::throw_data("cannot write " + join(s.out, "samples.csv"));
  csv << "file,y,seed\n";
  dgm::Rng rng(s.seed);
  for (std::int64_t k = 0; k < s.count; ++k) {
    const dgm::LatentConfig z = dgm::sample_z(params, s.y, rng, s.sweeps);
    const dgm::Tensor img = dgm::sample_image(params, s.y, z, rng);
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04lld.pgm", static_cast<long long>(k));
    dgm::write_pgm(join(s.out, name), img);
    csv << name << ',' << s.y << ',' << s.seed << '\n';
  }
  std::printf("wrote %lld samples under %s\n", static_cast<long long>(s.count), s.out.c_str());
  return 0;
}

// ---- reconstruct ----

struct ReconCli {
  std::string model;
  std::string input;
  std::string out = "recon.pgm";
  std::int64_t index = 0;
  std::int64_t y = -1;
};

int run_reconstruct(const ReconCli& r) {
  const dgm::DgmParams params = dgm::load_checkpoint(r.model);
  const std::vector<dgm::Tensor> images = dgm::load_idx_images(r.input);
  if (r.index < 0 || r.index >= static_cast<std::int64_t>(images.size())) {
    dgm::throw_config("--index " + std::to_string(r.index) + " out of range: " + r.input +
                      " holds " + std::to_string(images.size()) + " images");
  }
  if (r.y >= params.num_classes()) {
    dgm::throw_config("--y " + std::to_string(r.y) + " out of range: model has " +
                      std::to_string(params.num_classes()) + " classes");
  }
  const dgm::Tensor recon =
      dgm::reconstruct(params, images[static_cast<std::size_t>(r.index)], r.y);
  ensure_parent_dir(r.out);
  dgm::write_pgm(r.out, recon);
  std::printf("wrote %s\n", r.out.c_str());
  return 0;
}

// ---- verify-bounds ----

struct VerifyCli {
  std::string out = "bounds.csv";
  std::int64_t models = 20;
  std::int64_t samples = 8;
  double gamma_bar = 0.01;
  std::uint64_t seed = 0;
};

int run_verify(const VerifyCli& v) {
  if (v.models < 1) dgm::throw_config("--models must be >= 1");
  if (v.samples < 1) dgm::throw_config("--samples must be >= 1");
  ensure_parent_dir(v.out);
  std::ofstream csv(v.out, std::ios::binary);
  if (!csv) dgm::throw_data("cannot write " + v.out);
  csv << dgm::kBoundCsvHeader << '\n';

  std::int64_t violations = 0;
  for (std::int64_t m = 0; m < v.models; ++m) {
    const std::uint64_t model_seed = v.seed + static_cast<std::uint64_t>(m);
    const dgm::DgmParams params = dgm::random_micro_params(model_seed);
    dgm::Rng data_rng = dgm::Rng(model_seed).fork(500);
    const dgm::Dataset data =
        dgm::synth_dataset(params, v.samples, 1.0, data_rng).data;

    std::vector<dgm::BoundReport> reports;
    reports.push_back(dgm::verify_ce_sandwich(params, data, params.sigma, model_seed));
    for (dgm::BoundReport& r : dgm::verify_un_vn(params, data, v.gamma_bar, model_seed)) {
      reports.push_back(std::move(r));
    }
    reports.push_back(dgm::verify_posterior_bounds(params, data, model_seed));
    for (dgm::BoundReport& r :
         dgm::verify_normfree_bounds(params, data, params.sigma, model_seed)) {
      reports.push_back(std::move(r));
    }
    for (const dgm::BoundReport& r : reports) {
      csv << dgm::bound_csv_row(r) << '\n';
      if (!r.holds) ++violations;
    }
  }
  csv.close();
  std::printf("wrote %s\n", v.out.c_str());
  if (violations > 0) {
    std::fprintf(stderr, "dgm: %lld bound row(s) violated\n",
                 static_cast<long long>(violations));
    return 3;
  }
  return 0;
}

// ---- gradcheck ----

struct GradCli {
  std::string out;
  std::int64_t models = 5;
  std::int64_t samples = 4;
  double eps = 1e-6;
  double tol = 1e-5;
  std::uint64_t seed = 0;
};

std::vector<std::pair<std::string, dgm::LossWeights>> gradcheck_components() {
  std::vector<std::pair<std::string, dgm::LossWeights>> out;
  dgm::LossWeights ce;
  ce.alpha_ce = 1.0;
  ce.alpha_rc = 0.0;
  ce.alpha_kl = 0.0;
  ce.alpha_mm = 0.0;
  out.emplace_back("ce", ce);
  dgm::LossWeights mm_ce = ce;
  mm_ce.max_min = true;
  mm_ce.alpha_max = 0.6;
  mm_ce.alpha_min = 0.4;
  out.emplace_back("maxmin-ce", mm_ce);
  dgm::LossWeights rc = ce;
  rc.alpha_ce = 0.0;
  rc.alpha_rc = 1.0;
  rc.alpha_pn = 0.0;
  out.emplace_back("rc", rc);
  dgm::LossWeights rpn = rc;
  rpn.alpha_pn = 1.0;
  out.emplace_back("rc-rpn", rpn);
  dgm::LossWeights kl = ce;
  kl.alpha_ce = 0.0;
  kl.alpha_kl = 1.0;
  out.emplace_back("kl", kl);
  dgm::LossWeights mm = ce;
  mm.alpha_ce = 0.0;
  mm.alpha_mm = 1.0;
  out.emplace_back("mm", mm);
  out.emplace_back("full", dgm::LossWeights{});
  return out;
}

int run_gradcheck(const GradCli& g) {
  if (g.models < 1) dgm::throw_config("--models must be >= 1");
  std::ofstream csv;
  if (!g.out.empty()) {
    ensure_parent_dir(g.out);
    csv.open(g.out, std::ios::binary);
    if (!csv) dgm::throw_data("cannot write " + g.out);
    csv << "seed,component,max_rel_err\n";
  }

  double worst = 0.0;
  for (std::int64_t m = 0; m < g.models; ++m) {
    const std::uint64_t model_seed = g.seed + static_cast<std::uint64_t>(m);
    const dgm::DgmParams params = dgm::random_micro_params(model_seed);
    dgm::Rng data_rng = dgm::Rng(model_seed).fork(600);
    const dgm::SynthData synth = dgm::synth_dataset(params, g.samples, 0.5, data_rng);
    for (const auto& [name, weights] : gradcheck_components()) {
      const double err = dgm::objective_grad_check(params, synth.data.images,
                                                   synth.data.labels, weights, g.eps);
      worst = std::max(worst, err);
      std::printf("seed %llu  %-10s max_rel_err %s\n",
                  static_cast<unsigned long long>(model_seed), name.c_str(),
                  fmt17(err).c_str());
      if (csv.is_open()) {
        csv << model_seed << ',' << name << ',' << fmt17(err) << '\n';
      }
    }
  }
  std::printf("worst %s (tolerance %s)\n", fmt17(worst).c_str(), fmt17(g.tol).c_str());
  if (worst > g.tol) {
    std::fprintf(stderr, "dgm: gradient check failed: %s > %s\n", fmt17(worst).c_str(),
                 fmt17(g.tol).c_str());
    return 3;
  }
  return 0;
}

// ---- synth ----

struct SynthCli {
  std::string model;
  std::string out = "synth-out";
  ArchOptions arch;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  std::int64_t count = 1000;
  std::int64_t test_count = 200;
};

int run_synth(const SynthCli& s) {
  if (s.count < 1 || s.test_count < 1) dgm::throw_config("--count/--test-count must be >= 1");
  dgm::DgmParams params;
  if (!s.model.empty()) {
    params = dgm::load_checkpoint(s.model);
  } else {
    dgm::Rng rng = dgm::Rng(s.seed).fork(55);
    params = dgm::init_params(make_spec(s.arch), rng, s.sigma);
  }
  ensure_dir(s.out);

  dgm::Rng train_rng = dgm::Rng(s.seed).fork(56);
  dgm::Rng test_rng = dgm::Rng(s.seed).fork(57);
  const dgm::Dataset train_data = dgm::synth_dataset(params, s.count, 1.0, train_rng).data;
  const dgm::Dataset test_data = dgm::synth_dataset(params, s.test_count, 1.0, test_rng).data;

  dgm::save_idx_images(join(s.out, "train-images-idx3-ubyte"), train_data.images);
  dgm::save_idx_labels(join(s.out, "train-labels-idx1-ubyte"), train_data.labels);
  dgm::save_idx_images(join(s.out, "t10k-images-idx3-ubyte"), test_data.images);
  dgm::save_idx_labels(join(s.out, "t10k-labels-idx1-ubyte"), test_data.labels);
  std::printf("wrote %lld train / %lld test images under %s\n",
              static_cast<long long>(s.count), static_cast<long long>(s.test_count),
              s.out.c_str());
  return 0;
}

void add_arch_flags(CLI::App* cmd, ArchOptions* arch) {
  cmd->add_option("--arch", arch->arch, "Architecture: mnist-table6 or micro")
      ->check(CLI::IsMember({"mnist-table6", "micro"}));
  cmd->add_option("--width", arch->width, "Filter-count scale factor (floor 1 per layer)");
  cmd->add_flag("--resnet", arch->resnet,
                "Residual inference graph (forces same-padding; drops non-tiling pools)");
  cmd->add_flag("--densenet", arch->densenet,
                "Dense inference graph (forces same-padding and pool=1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deconvolutional generative model: train, sample, verify"};
  app.require_subcommand(1);

  TrainCli t;
  CLI::App* train_cmd = app.add_subcommand("train", "EM-style semi-supervised training");
  train_cmd->add_option("--config", t.config, "key=value config file");
  train_cmd->add_option("--out", t.out, "Output directory (metrics.csv, model.ckpt)");
  train_cmd->add_option("--seed", t.cfg.seed, "RNG seed");
  train_cmd->add_option("--threads", t.cfg.threads, "Worker threads (1 = reproducible)");
  train_cmd->add_option("--epochs", t.cfg.epochs, "Training epochs");
  train_cmd->add_option("--batch", t.cfg.batch, "Batch size");
  train_cmd->add_option("--labeled", t.cfg.labeled,
                        "Labeled-sample budget (-1 keeps all labels)");
  train_cmd->add_option("--lr", t.cfg.opt.lr, "Learning rate");
  train_cmd->add_option("--optimizer", t.optimizer, "Optimizer: sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}));
  train_cmd->add_option("--clip", t.cfg.opt.clip,
                        "Global gradient-norm ceiling (0 disables clipping)");
  train_cmd->add_option("--alpha-ce", t.cfg.weights.alpha_ce, "Cross-entropy weight");
  train_cmd->add_option("--alpha-rc", t.cfg.weights.alpha_rc, "Reconstruction weight");
  train_cmd->add_option("--alpha-kl", t.cfg.weights.alpha_kl, "KL-to-prior weight");
  train_cmd->add_option("--alpha-mm", t.cfg.weights.alpha_mm, "Moment-matching weight");
  train_cmd->add_option("--alpha-pn", t.cfg.weights.alpha_pn, "Path-normalization weight");
  train_cmd->add_option("--alpha-max", t.cfg.weights.alpha_max, "Max-branch weight");
  train_cmd->add_option("--alpha-min", t.cfg.weights.alpha_min, "Min-branch weight");
  train_cmd->add_flag("--maxmin", t.cfg.weights.max_min, "Max-Min cross-entropy");
  train_cmd->add_option("--sigma", t.sigma, "Pixel noise scale");
  train_cmd->add_option("--data-dir", t.data_dir,
                        "IDX directory (default: DGM_MNIST_DIR, else procedural digits)");
  train_cmd->add_option("--train-count", t.train_count, "Training samples");
  train_cmd->add_option("--test-count", t.test_count, "Validation samples");
  train_cmd->add_option("--eval-every", t.cfg.eval_every, "Epochs between val evaluations");
  train_cmd->add_option("--enum-cadence", t.cfg.enum_cadence,
                        "Epochs between active-path counts (0 = off)");
  train_cmd->add_flag("--estep-per-epoch", t.cfg.estep_per_epoch,
                      "Refresh pseudo-labels once per epoch instead of per batch");
  add_arch_flags(train_cmd, &t.arch);

  EvalCli e;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_cmd->add_option("--model", e.model, "Checkpoint path")->required();
  eval_cmd->add_option("--data-dir", e.data_dir, "IDX directory");
  eval_cmd->add_option("--test-count", e.test_count, "Test samples");
  eval_cmd->add_option("--seed", e.seed, "Corpus seed (procedural fallback)");

  SampleCli s;
  CLI::App* sample_cmd = app.add_subcommand("sample", "Draw images from the generative model");
  sample_cmd->add_option("--model", s.model, "Checkpoint path")->required();
  sample_cmd->add_option("--y", s.y, "Class to render")->required();
  sample_cmd->add_option("--count", s.count, "Number of draws");
  sample_cmd->add_option("--sigma", s.sigma, "Pixel-noise override (0 = noiseless)");
  sample_cmd->add_option("--sweeps", s.sweeps, "Gibbs sweeps per latent draw");
  sample_cmd->add_option("--out", s.out, "Output directory (PGMs + samples.csv)");
  sample_cmd->add_option("--seed", s.seed, "RNG seed");

  ReconCli r;
  CLI::App* recon_cmd = app.add_subcommand("reconstruct", "Render back an inferred image");
  recon_cmd->add_option("--model", r.model, "Checkpoint path")->required();
  recon_cmd->add_option("--input", r.input, "IDX image file")->required();
  recon_cmd->add_option("--index", r.index, "Image index in the IDX file");
  recon_cmd->add_option("--y", r.y, "Rendering class (-1 = inferred argmax)");
  recon_cmd->add_option("--out", r.out, "Output PGM path");

  VerifyCli v;
  CLI::App* verify_cmd =
      app.add_subcommand("verify-bounds", "Check the likelihood bound chains on random models");
  verify_cmd->add_option("--models", v.models, "Number of random micro-models");
  verify_cmd->add_option("--samples", v.samples, "Synthetic samples per model");
  verify_cmd->add_option("--gamma-bar", v.gamma_bar, "Class-prior floor for the relaxation rows");
  verify_cmd->add_option("--out", v.out, "Output CSV path");
  verify_cmd->add_option("--seed", v.seed, "Base model seed");

  GradCli g;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  grad_cmd->add_option("--models", g.models, "Number of random micro-models");
  grad_cmd->add_option("--samples", g.samples, "Synthetic samples per model");
  grad_cmd->add_option("--eps", g.eps, "Base finite-difference step");
  grad_cmd->add_option("--tol", g.tol, "Failure threshold on the relative error");
  grad_cmd->add_option("--out", g.out, "Optional CSV path");
  grad_cmd->add_option("--seed", g.seed, "Base model seed");

  SynthCli sy;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Write a model-generated IDX corpus (train + t10k pairs)");
  synth_cmd->add_option("--model", sy.model, "Checkpoint to sample from (default: fresh init)");
  synth_cmd->add_option("--count", sy.count, "Training images");
  synth_cmd->add_option("--test-count", sy.test_count, "Test images");
  synth_cmd->add_option("--sigma", sy.sigma, "Pixel noise scale (fresh init only)");
  synth_cmd->add_option("--out", sy.out, "Output directory");
  synth_cmd->add_option("--seed", sy.seed, "RNG seed");
  add_arch_flags(synth_cmd, &sy.arch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(t, train_cmd);
    if (eval_cmd->parsed()) return run_eval(e);
    if (sample_cmd->parsed()) return run_sample(s, sample_cmd->count("--sigma") > 0);
    if (recon_cmd->parsed()) return run_reconstruct(r);
    if (verify_cmd->parsed()) return run_verify(v);
    if (grad_cmd->parsed()) return run_gradcheck(g);
    if (synth_cmd->parsed()) return run_synth(sy);
  } catch (const dgm::Error& err) {
    std::fprintf(stderr, "dgm: %s\n", err.what());
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::fprintf(stderr, "dgm: %s\n", err.what());
    return 1;
  }
  return 1;
}
