#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aal/checkpoint.hpp"
#include "aal/commands.hpp"
#include "aal/config.hpp"
#include "aal/gradcheck_suite.hpp"
#include "aal/train.hpp"

namespace {

int run_train(const std::string& config_path, const std::vector<std::uint64_t>& seed, const std::string& metrics,
              const std::string& checkpoint) {
  aal::TrainConfig config = aal::load_config(config_path);
  if (!seed.empty()) config.seed = seed.front();
  if (!metrics.empty()) config.metrics_path = metrics;
  if (!checkpoint.empty()) config.checkpoint_path = checkpoint;
  config.validate();
  aal::train(config, &std::cout);
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  int failed = 0;
  for (const auto& r : aal::gradcheck_suite(seed)) {
    std::printf("%-18s %s max_rel_err %.3e worst %s[%zu] entries %zu\n", r.name.c_str(), r.passed ? "ok  " : "FAIL",
                r.max_rel_error, r.worst_param.c_str(), r.worst_index, r.entries_checked);
    failed += r.passed ? 0 : 1;
  }
  if (failed) std::printf("%d check(s) above tolerance\n", failed);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive attention link training and analysis"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a teacher or student from a JSON config");
  std::string config_path, metrics_out, checkpoint_out;
  std::vector<std::uint64_t> seed_override;
  train->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed_override, "Override the config seed")->expected(1);
  train->add_option("--metrics", metrics_out, "Override the metrics CSV path");
  train->add_option("--checkpoint", checkpoint_out, "Override the checkpoint path");

  auto* select = app.add_subcommand("select-links", "Normalize and prune trained links");
  std::string ckpt, out;
  double theta = 0.05;
  select->add_option("--checkpoint", ckpt, "Student checkpoint with links")->required();
  select->add_option("--theta", theta, "Keep threshold on head-averaged normalized weights")->capture_default_str();
  select->add_option("--out", out, "Output prefix for .mask and .json")->required();

  auto* heat = app.add_subcommand("heatmap", "Export the block x layer link heatmap");
  heat->add_option("--checkpoint", ckpt, "Student checkpoint with links")->required();
  heat->add_option("--out", out, "Output prefix for .csv and .pgm")->required();

  auto* wsol = app.add_subcommand("wsol", "Localization accuracy of the student's attention maps");
  std::string images, boxes, wsol_config;
  std::vector<double> deltas{0.3, 0.5, 0.7};
  wsol->add_option("--checkpoint", ckpt, "Student checkpoint")->required();
  wsol->add_option("--images", images, "CIFAR-10 binary file");
  wsol->add_option("--boxes", boxes, "Boxes CSV matching --images");
  wsol->add_option("--config", wsol_config, "Evaluate on the validation split of this config");
  wsol->add_option("--iou", deltas, "IoU thresholds")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");
  std::uint64_t grad_seed = 0;
  grad->add_option("--seed", grad_seed, "Seed for the random inputs")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic shapes dataset");
  std::uint64_t gen_seed = 1;
  std::size_t gen_n = 500;
  int gen_classes = 2;
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("-n,--count", gen_n)->capture_default_str();
  gen->add_option("--classes", gen_classes)->capture_default_str();
  gen->add_option("--images", images, "CIFAR-10 binary output")->required();
  gen->add_option("--boxes", boxes, "Boxes CSV output")->required();

  auto* defaults = app.add_subcommand("default-config", "Print the default config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config_path, seed_override, metrics_out, checkpoint_out);
    if (*select) {
      const auto r = aal::select_links(ckpt, theta, out);
      std::printf("kept %.6f of %d links\n", r.kept, r.channels * r.maps);
      return 0;
    }
    if (*heat) {
      const auto h = aal::export_heatmap(ckpt, out);
      std::printf("heatmap %d blocks x %d layers\n", h.blocks, h.layers);
      return 0;
    }
    if (*wsol) {
      aal::Dataset data;
      if (!images.empty()) {
        if (boxes.empty()) throw aal::ConfigError("--images needs --boxes");
        data = aal::read_cifar10_batch(images);
        data.boxes = aal::read_boxes(boxes);
        if (data.boxes.size() != data.size()) throw aal::InputError("boxes file does not match the images");
      } else {
        const aal::TrainConfig config = wsol_config.empty()
                                            ? aal::read_meta(aal::load_checkpoint(ckpt)).config
                                            : aal::load_config(wsol_config);
        data = aal::load_datasets(config).second;
      }
      const auto report = aal::wsol_from_checkpoint(ckpt, data, deltas);
      std::cout << aal::wsol_report_text(report);
      return 0;
    }
    if (*grad) return run_gradcheck(grad_seed);
    if (*gen) {
      aal::gen_data(gen_seed, gen_n, gen_classes, images, boxes);
      return 0;
    }
    if (*defaults) {
      std::cout << aal::config_to_json(aal::TrainConfig{});
      return 0;
    }
  } catch (const aal::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
