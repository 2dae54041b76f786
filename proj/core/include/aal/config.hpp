#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aal/link.hpp"
#include "aal/models.hpp"

namespace aal {

/// Every setting of a training run. Serialized as a flat JSON object with
/// one key per field; keys not listed here are rejected on load.
struct TrainConfig {
  std::string model = "student";  // student | teacher
  std::string dataset_kind = "shapes";  // shapes | cifar10
  std::string dataset_path;  // cifar10 training batch
  std::string val_path;      // cifar10 validation batch
  int train_size = 2000;     // shapes sample counts (cifar10: cap, 0 = all)
  int val_size = 500;
  std::uint64_t data_seed = 1;
  int classes = 2;

  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double lr = 0.05;
  double momentum = 0.9;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  bool augment = true;
  std::string precision = "f32";  // f32 | f64

  bool aal = false;
  bool hard_distill = false;
  double lambda0 = 2000.0;
  double decay_early = 0.99;
  double decay_late = 0.98;
  int switch_epoch = 200;

  std::string teacher_checkpoint;
  std::string checkpoint_path = "checkpoint.aal";
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::string metrics_path = "metrics.csv";
  std::string mask_spec_path;  // block ranges applied at start
  std::string link_mask_path;  // raw mask applied at start
  int prune_epoch = -1;        // selective extraction after this epoch, -1 off
  double prune_threshold = 0.05;

  int image_size = 32;
  int patch_size = 4;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_hidden = 128;
  bool attn_map_scaled = true;
  std::vector<int> teacher_widths{8, 16, 32};
  std::string teacher_tap = "post_norm";  // post_norm | post_activation

  StudentConfig student() const;
  TeacherConfig teacher() const;
  LambdaSchedule schedule() const;
  /// Throws ConfigError for unknown enum strings or out-of-range values.
  void validate() const;
};

/// Pretty-printed JSON with every field.
std::string config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults. Throws ConfigError on unknown keys,
/// wrong value types, malformed JSON, or a failed validate().
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::string& path);

}  // namespace aal
