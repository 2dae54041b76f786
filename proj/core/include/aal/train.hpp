#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aal/checkpoint.hpp"
#include "aal/config.hpp"
#include "aal/data.hpp"
#include "aal/link.hpp"
#include "aal/linksel.hpp"
#include "aal/models.hpp"

namespace aal {

/// SGD with heavy-ball momentum: v = mu*v + g, p -= lr*v. Parameters
/// without a gradient are skipped.
template <typename T>
class Sgd {
 public:
  Sgd(NamedTensors<T> params, double momentum);

  void step(double lr);
  void zero_grad();
  /// Rescales all gradients so their global l2 norm is at most max_norm;
  /// returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  /// Zeroes the velocity of `name` wherever keep is 0.
  void reset_velocity(const std::string& name, std::span<const std::uint8_t> keep);

 private:
  NamedTensors<T> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
};

/// Half-cosine decay from base_lr at step 0 towards 0 at total_steps.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

struct EpochMetrics {
  int epoch = 0;
  std::optional<double> lambda;
  double loss_ce = 0.0;
  std::optional<double> loss_att;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

/// Header plus one row per epoch; empty lambda/loss_att cells when AAL is
/// off. Numbers use %.17g.
std::string metrics_csv(const std::vector<EpochMetrics>& rows);

struct TrainResult {
  std::vector<EpochMetrics> history;
};

/// Training and validation sets for a config: shapes data is generated
/// from data_seed and split, cifar10 is read from the configured files.
std::pair<Dataset, Dataset> load_datasets(const TrainConfig& config);

/// Runs cmd_train: trains the configured model, writes the metrics CSV after
/// every epoch and checkpoints every checkpoint_every epochs and at the end.
/// Progress lines go to `log` when given. Throws NumericError on a
/// non-finite loss (earlier checkpoints are left in place), ConfigError when
/// a teacher is required but missing.
TrainResult train(const TrainConfig& config, std::ostream* log = nullptr);

/// Metadata stored with every checkpoint.
struct CheckpointMeta {
  TrainConfig config;
  int epoch = 0;
  std::string model;
  bool has_links = false;
};
CheckpointMeta read_meta(const Checkpoint& ckpt);

/// Rebuilds a trained student (and its links, when present) from a checkpoint.
template <typename T>
Student<T> load_student(const Checkpoint& ckpt);
template <typename T>
Teacher<T> load_teacher(const Checkpoint& ckpt);
template <typename T>
Teacher<T> load_teacher(const std::string& path, const TrainConfig& config);
template <typename T>
LinkWeights<T> load_links(const Checkpoint& ckpt);

/// Links of a checkpoint with their shape metadata. Throws FormatError when
/// the checkpoint holds no links or lacks link metadata.
LinkSnapshot snapshot_from_checkpoint(const Checkpoint& ckpt);

}  // namespace aal
