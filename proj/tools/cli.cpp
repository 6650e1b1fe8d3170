// Copyright 2026 The FusionSort Authors. All Rights Reserved.
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

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdarg>
#include <cstdio>
#include <optional>
#include <ostream>

#include "fusionsort/data_io.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/fusion.hpp"
#include "fusionsort/network.hpp"
#include "fusionsort/suite.hpp"

namespace fusionsort::cli {
namespace {

/// Invalid flag values that CLI11 cannot catch on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buffer[512];
  std::vsnprintf(buffer, sizeof buffer, fmt, args);
  va_end(args);
  return buffer;
}

std::vector<std::uint8_t> as_bytes(const std::string& text) { return {text.begin(), text.end()}; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file_atomic(path, as_bytes(text));
}

io::HyperCube tensor_to_cube(const Tensor& t) {
  require_rank(t, 4, "tensor_to_cube");
  io::HyperCube cube(t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t i = 0; i < cube.data.size(); ++i) cube.data[i] = static_cast<float>(t[i]);
  return cube;
}

struct FuseArgs {
  std::string cube, rgb, out, report;
  std::uint64_t seed = 0;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const io::HyperCube cube = io::read_cube(a.cube);
  const Tensor rgb = io::read_ppm(a.rgb);
  const fusion::PcaModel model = fusion::fit_pca(cube);
  const Tensor fused = fusion::fuse(rgb, fusion::project_hyper3(cube, model));
  const std::string report = format("variance_retained=%.6f\neigenvalues=%.6f,%.6f,%.6f\n", model.variance_retained,
                                    model.eigenvalues[0], model.eigenvalues[1], model.eigenvalues[2]);
  io::write_cube(tensor_to_cube(fused), a.out);
  if (!a.report.empty()) write_text(a.report, report);
  out << format("fused %zux%zu: %zu hyperspectral bands + RGB -> 6 channels\n", rgb.dim(2), rgb.dim(3),
                cube.bands)
      << report;
  return kOk;
}

struct GradcheckArgs {
  std::string config = "all";
  double eps = 1e-5;
  std::string sabotage;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (!(a.eps > 0.0)) throw UsageError("--eps must be positive, got " + format("%g", a.eps));
  const net::NetworkConfig config = net::NetworkConfig{}.with_ablation(net::parse_ablation(a.config));
  std::optional<SabotageScope> sabotage;
  if (!a.sabotage.empty()) sabotage.emplace(a.sabotage);
  const std::vector<net::BlockCheck> checks = net::run_gradcheck_suite(config, a.eps, a.seed);
  bool ok = true;
  for (const net::BlockCheck& c : checks) {
    ok = ok && c.passed();
    out << format("%-16s max_rel_error=%.6e limit=%.0e coords=%-6zu %s\n", c.block.c_str(), c.max_rel_error,
                  c.tolerance, c.coordinates, c.passed() ? "ok" : ("FAIL at " + c.worst_parameter).c_str());
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck failed\n");
  return ok ? kOk : kNumericalFailure;
}

struct TrainArgs {
  std::uint64_t seed = 0;
  std::size_t images = 10;
  std::size_t iters = 300;
  std::string out, history, data_dir;
  std::string ablation = "all";
  std::string modality = "fused";
  double lr = 1e-3;
  std::size_t classes = 3;
  std::size_t bands = 9;
  std::size_t size = 32;
};

int cmd_train_toy(const TrainArgs& a, std::ostream& out) {
  if (a.images == 0) throw UsageError("--images must be >= 1");
  if (a.iters == 0) throw UsageError("--iters must be >= 1");
  if (a.size == 0 || a.size % 4 != 0) throw UsageError("--size must be a positive multiple of 4");
  if (a.classes < 2 || a.classes > 256) throw UsageError("--classes must be in [2, 256]");
  if (a.bands < 3) throw UsageError("--bands must be >= 3");
  if (!(a.lr > 0.0)) throw UsageError("--lr must be positive");

  io::SyntheticOptions data_opts;
  data_opts.seed = a.seed;
  data_opts.count = a.images;
  data_opts.height = data_opts.width = a.size;
  data_opts.bands = a.bands;
  data_opts.num_classes = a.classes;
  const std::vector<io::SyntheticSample> samples = io::generate_synthetic_dataset(data_opts);

  net::NetworkConfig config;
  config.modality = net::parse_modality(a.modality);
  config.in_channels = net::modality_channels(config.modality, a.bands);
  config.num_classes = a.classes;
  config.seed = a.seed;
  config = config.with_ablation(net::parse_ablation(a.ablation));

  std::vector<net::TrainingExample> data;
  for (const io::SyntheticSample& s : samples) data.push_back({net::make_input(config.modality, s.cube, s.rgb), s.mask});

  net::TrainConfig train;
  train.learning_rate = a.lr;
  train.iterations = a.iters;

  net::Network network(config);
  const net::TrainResult result = net::train_toy(network, data, train);

  std::string history;
  for (double v : result.loss_history) history += format("%.12f\n", v);

  net::save_checkpoint(network, a.out);
  write_text(a.history.empty() ? a.out + ".loss" : a.history, history);
  if (!a.data_dir.empty()) {
    const std::filesystem::path dir(a.data_dir);
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::string stem = format("sample_%03zu", i);
      io::write_cube(samples[i].cube, dir / (stem + ".hsc"));
      io::write_ppm(samples[i].rgb, dir / (stem + ".ppm"));
      io::write_pgm(samples[i].mask, dir / (stem + ".pgm"));
    }
  }

  const metrics::SegmentationReport& r = result.train_report;
  out << format("ablation=%s\nparameters=%zu\nfinal_loss=%.6f\nmiou=%.6f\npixel_accuracy=%.6f\n",
                net::ablation_name(net::parse_ablation(a.ablation)).c_str(), network.parameter_count(),
                result.loss_history.back(), r.miou, r.pixel_accuracy);
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::vector<std::string> cubes, rgbs, masks, preds, outs;
  std::string report, csv, ablation, modality;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
};

void require_count(const std::vector<std::string>& v, std::size_t n, const char* flag) {
  if (v.size() != n) {
    throw UsageError(format("expected %zu %s path(s) to match --mask, got %zu", n, flag, v.size()));
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const std::size_t n = a.masks.size();
  if (n == 0) throw UsageError("eval needs at least one --mask");
  if (!a.outs.empty()) require_count(a.outs, n, "--out");

  std::optional<net::Network> network;
  std::size_t classes = a.classes;
  if (!a.ckpt.empty()) {
    network.emplace(net::load_network(a.ckpt));
    const net::NetworkConfig& cfg = network->config();
    if (classes != 0 && classes != cfg.num_classes) {
      throw ConfigError(format("--classes %zu does not match the checkpoint (%zu classes)", classes, cfg.num_classes));
    }
    if (!a.ablation.empty() && !(cfg.with_ablation(net::parse_ablation(a.ablation)) == cfg)) {
      throw ConfigError("--ablation " + a.ablation + " does not match the checkpoint config '" + cfg.serialize() + "'");
    }
    if (!a.modality.empty() && net::parse_modality(a.modality) != cfg.modality) {
      throw ConfigError("--modality " + a.modality + " does not match the checkpoint modality " +
                        net::modality_name(cfg.modality));
    }
    classes = cfg.num_classes;
  } else if (a.preds.empty()) {
    throw UsageError("eval needs --ckpt unless --pred masks are given");
  }
  if (classes == 0) throw UsageError("--classes is required when no checkpoint is given");

  std::vector<io::LabelMask> truth, predicted;
  for (const std::string& path : a.masks) truth.push_back(io::read_pgm(path, classes));

  if (!a.preds.empty()) {
    require_count(a.preds, n, "--pred");
    for (const std::string& path : a.preds) predicted.push_back(io::read_pgm(path, classes));
  } else {
    const net::Modality modality = network->config().modality;
    const bool needs_cube = modality != net::Modality::kRgb;
    const bool needs_rgb = modality == net::Modality::kRgb || modality == net::Modality::kFused;
    if (needs_cube) require_count(a.cubes, n, "--cube");
    if (needs_rgb) require_count(a.rgbs, n, "--rgb");
    for (std::size_t i = 0; i < n; ++i) {
      const io::HyperCube cube = needs_cube ? io::read_cube(a.cubes[i]) : io::HyperCube{};
      const Tensor rgb = needs_rgb ? io::read_ppm(a.rgbs[i]) : Tensor{};
      const Tensor input = net::make_input(modality, cube, rgb);
      if (input.dim(2) != truth[i].height || input.dim(3) != truth[i].width) {
        throw ShapeError(format("image %zu is %zux%zu but its mask is %zux%zu", i, input.dim(2), input.dim(3),
                                truth[i].height, truth[i].width));
      }
      predicted.push_back(metrics::argmax_labels(network->predict_logits(input)));
    }
  }

  metrics::ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < n; ++i) cm.add(predicted[i], truth[i]);
  const metrics::SegmentationReport report = metrics::summarize(cm);

  for (std::size_t i = 0; i < a.outs.size(); ++i) io::write_pgm(predicted[i], a.outs[i]);
  if (!a.report.empty()) write_text(a.report, metrics::format_report_text(report));
  if (!a.csv.empty()) write_text(a.csv, metrics::format_report_csv(report));
  out << metrics::format_report_text(report);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FusionSort: hyperspectral/RGB fusion and attention segmentation toolkit", "fusionsort"};
  app.require_subcommand(1);
  const CLI::IsMember kAblations({"baseline", "mamba", "ca", "wf", "all"});
  const CLI::IsMember kModalities({"rgb", "hyper3", "fused", "spectral"});

  FuseArgs fuse;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "PCA-reduce a cube to 3 bands and stack it with an RGB image");
  fuse_cmd->add_option("--cube", fuse.cube, "HSC1 hyperspectral cube")->required();
  fuse_cmd->add_option("--rgb", fuse.rgb, "binary PPM image")->required();
  fuse_cmd->add_option("--out", fuse.out, "output HSC1 file with 6 bands")->required();
  fuse_cmd->add_option("--report", fuse.report, "write variance retained and top eigenvalues here");
  fuse_cmd->add_option("--seed", fuse.seed, "random seed");

  GradcheckArgs grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  grad_cmd->add_option("--config", grad.config, "network ablation: baseline|mamba|ca|wf|all")
      ->check(kAblations);
  grad_cmd->add_option("--eps", grad.eps, "central-difference step");
  grad_cmd->add_option("--sabotage", grad.sabotage, "corrupt the backward rule of this op (harness self-test)");
  grad_cmd->add_option("--seed", grad.seed, "random seed");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "train on a synthetic dataset");
  train_cmd->add_option("--seed", train.seed, "random seed for data and weights");
  train_cmd->add_option("--images", train.images, "number of synthetic images");
  train_cmd->add_option("--iters", train.iters, "optimizer steps");
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--history", train.history, "loss history path (default: <out>.loss)");
  train_cmd->add_option("--data-dir", train.data_dir, "also write the synthetic images here");
  train_cmd->add_option("--ablation", train.ablation, "baseline|mamba|ca|wf|all")->check(kAblations);
  train_cmd->add_option("--modality", train.modality, "rgb|hyper3|fused|spectral")->check(kModalities);
  train_cmd->add_option("--lr", train.lr, "base learning rate");
  train_cmd->add_option("--classes", train.classes, "number of classes including background");
  train_cmd->add_option("--bands", train.bands, "spectral bands per synthetic cube");
  train_cmd->add_option("--size", train.size, "image height and width");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a set of predicted masks");
  eval_cmd->add_option("--ckpt", eval.ckpt, "checkpoint path");
  eval_cmd->add_option("--cube", eval.cubes, "HSC1 cube (repeat per image)");
  eval_cmd->add_option("--rgb", eval.rgbs, "PPM image (repeat per image)");
  eval_cmd->add_option("--mask", eval.masks, "ground-truth PGM mask (repeat per image)");
  eval_cmd->add_option("--pred", eval.preds, "score these PGM masks instead of running the network");
  eval_cmd->add_option("--out", eval.outs, "write the predicted mask here (repeat per image)");
  eval_cmd->add_option("--report", eval.report, "write the text report here");
  eval_cmd->add_option("--csv", eval.csv, "write the comma-separated report here");
  eval_cmd->add_option("--ablation", eval.ablation, "fail unless the checkpoint matches this ablation")
      ->check(kAblations);
  eval_cmd->add_option("--modality", eval.modality, "fail unless the checkpoint uses this modality")
      ->check(kModalities);
  eval_cmd->add_option("--classes", eval.classes, "class count when scoring --pred masks without a checkpoint");
  eval_cmd->add_option("--seed", eval.seed, "random seed");

  std::vector<const char*> argv{"fusionsort"};
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (fuse_cmd->parsed()) return cmd_fuse(fuse, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad, out);
    if (train_cmd->parsed()) return cmd_train_toy(train, out);
    return cmd_eval(eval, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace fusionsort::cli
