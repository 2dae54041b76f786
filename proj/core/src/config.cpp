#include "aal/config.hpp"

#include "json.hpp"

#include "io_util.hpp"

namespace aal {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, model, dataset_kind, dataset_path, val_path, train_size,
                                                val_size, data_seed, classes, epochs, batch_size, seed, lr, momentum,
                                                grad_clip, augment, precision, aal, hard_distill, lambda0,
                                                decay_early, decay_late, switch_epoch, teacher_checkpoint,
                                                checkpoint_path, checkpoint_every, metrics_path, mask_spec_path,
                                                link_mask_path, prune_epoch, prune_threshold, image_size,
                                                patch_size, embed_dim, depth, heads, mlp_hidden, attn_map_scaled,
                                                teacher_widths, teacher_tap)

StudentConfig TrainConfig::student() const {
  StudentConfig s;
  s.image_size = image_size;
  s.patch_size = patch_size;
  s.embed_dim = embed_dim;
  s.depth = depth;
  s.heads = heads;
  s.mlp_hidden = mlp_hidden;
  s.classes = classes;
  s.scaled_attention_maps = attn_map_scaled;
  return s;
}

TeacherConfig TrainConfig::teacher() const {
  TeacherConfig t;
  t.widths = teacher_widths;
  t.image_size = image_size;
  t.classes = classes;
  t.tap = teacher_tap == "post_activation" ? TapPoint::kPostActivation : TapPoint::kPostNorm;
  return t;
}

LambdaSchedule TrainConfig::schedule() const {
  return LambdaSchedule{lambda0, decay_early, decay_late, switch_epoch, epochs};
}

void TrainConfig::validate() const {
  auto one_of = [](const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
      if (v == a) return;
    }
    throw ConfigError("config key '" + key + "' has unsupported value '" + v + "'");
  };
  one_of("model", model, {"student", "teacher"});
  one_of("dataset_kind", dataset_kind, {"shapes", "cifar10"});
  one_of("precision", precision, {"f32", "f64"});
  one_of("teacher_tap", teacher_tap, {"post_norm", "post_activation"});
  if (epochs <= 0 || batch_size <= 0) throw ConfigError("epochs and batch_size must be positive");
  if (dataset_kind == "shapes" && (train_size <= 0 || val_size <= 0)) {
    throw ConfigError("shapes datasets need positive train_size and val_size");
  }
  if (train_size < 0 || val_size < 0) throw ConfigError("train_size and val_size must not be negative");
  if (dataset_kind == "cifar10" && dataset_path.empty()) throw ConfigError("cifar10 needs dataset_path");
  if (classes <= 0) throw ConfigError("classes must be positive");
  if (!(lr > 0.0) || momentum < 0.0 || momentum >= 1.0 || grad_clip < 0.0) {
    throw ConfigError("need lr > 0, momentum in [0, 1) and grad_clip >= 0");
  }
  if (lambda0 < 0.0 || !(decay_early > 0.0 && decay_early <= 1.0) || !(decay_late > 0.0 && decay_late <= 1.0) ||
      switch_epoch < 0) {
    throw ConfigError("lambda schedule needs lambda0 >= 0, decays in (0, 1] and switch_epoch >= 0");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must not be negative");
  if (prune_threshold < 0.0 || prune_threshold > 1.0) throw ConfigError("prune_threshold must lie in [0, 1]");
  if (prune_epoch >= epochs) throw ConfigError("prune_epoch must be below epochs");
  if (model == "student" && aal == false && (prune_epoch >= 0 || !mask_spec_path.empty() || !link_mask_path.empty())) {
    throw ConfigError("link masks and pruning need aal enabled");
  }
  if (model == "student" && (aal || hard_distill) && teacher_checkpoint.empty()) {
    throw ConfigError("aal and hard_distill need teacher_checkpoint");
  }
  student().validate();
  teacher().validate();
}

std::string config_to_json(const TrainConfig& config) { return nlohmann::json(config).dump(2) + "\n"; }

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const nlohmann::json known = TrainConfig{};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  TrainConfig config;
  try {
    config = j.get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::string& path) { return config_from_json(detail::read_file(path)); }

}  // namespace aal
