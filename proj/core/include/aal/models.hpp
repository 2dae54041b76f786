#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aal/gradcheck.hpp"
#include "aal/ops.hpp"
#include "aal/random.hpp"
#include "aal/tensor.hpp"

namespace aal {

struct StudentConfig {
  int image_size = 32;
  int patch_size = 4;
  int channels = 3;
  int embed_dim = 64;
  int depth = 4;  // transformer layers N
  int heads = 4;  // heads per layer M
  int mlp_hidden = 128;
  int classes = 10;
  // Attention maps use the 1/sqrt(head_dim) scaled logits of the attention
  // layer; false takes the unscaled query-key products instead.
  bool scaled_attention_maps = true;

  int grid() const { return image_size / patch_size; }
  int patches() const { return grid() * grid(); }
  int tokens() const { return patches() + 1; }
  int head_dim() const { return embed_dim / heads; }
  int maps() const { return heads * depth; }

  /// Throws ConfigError on non-positive sizes or indivisible dimensions.
  void validate() const;
};

/// Class-token attention maps of every head of every layer.
/// Channel c of `maps` holds head c % heads of layer c / heads.
template <typename T>
struct AttentionStack {
  Tensor<T> maps;  // [B, heads*layers, P, P]
  int heads = 0;
  int layers = 0;

  int head_of(int channel) const { return channel % heads; }
  int layer_of(int channel) const { return channel / heads; }
};

template <typename T>
struct StudentOutput {
  Tensor<T> logits;  // [B, classes]
  AttentionStack<T> attn;
  // Per-layer queries and keys [B, heads, tokens, head_dim]; filled only when
  // requested.
  std::vector<Tensor<T>> queries;
  std::vector<Tensor<T>> keys;
};

/// Pre-norm vision transformer over non-overlapping patches with a learned
/// class token and learned positional embeddings (added to the tokens).
template <typename T>
class Student {
 public:
  /// Parameters drawn from `rng`: linear and patch weights from a normal
  /// truncated at two standard deviations (std 0.02), class token and
  /// positional table from a normal (std 0.02), zero biases, unit norms.
  Student(const StudentConfig& config, Rng& rng);

  const StudentConfig& config() const { return config_; }

  /// images: [B, channels, image_size, image_size].
  StudentOutput<T> forward(const Tensor<T>& images, bool keep_qk = false) const;

  /// Every trainable tensor under a stable dotted name ("student.…").
  NamedTensors<T> parameters() const;

 private:
  struct Block {
    Tensor<T> ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  StudentConfig config_;
  Tensor<T> patch_w_, patch_b_, cls_token_, pos_table_;
  std::vector<Block> blocks_;
  Tensor<T> norm_g_, norm_b_, head_w_, head_b_;
};

enum class TapPoint { kPostNorm, kPostActivation };

struct TeacherConfig {
  std::vector<int> widths{8, 16, 32};
  int channels = 3;
  int image_size = 32;
  int classes = 10;
  TapPoint tap = TapPoint::kPostNorm;

  int total_channels() const;
  void validate() const;
};

/// Teacher block maps resized to the student's patch grid; never on a tape.
template <typename T>
struct ActivationSet {
  Tensor<T> maps;                  // [B, C, P, P]
  std::vector<int> channel_block;  // block index of each channel
};

template <typename T>
struct TeacherOutput {
  Tensor<T> logits;
  // Per block, the tapped maps at the block's own resolution.
  std::vector<Tensor<T>> taps;
};

/// Small convolutional network: blocks of 3x3 conv (stride 1, pad 1) ->
/// batch norm -> relu -> 2x2 max pool, then global average pool -> linear.
template <typename T>
class Teacher {
 public:
  Teacher(const TeacherConfig& config, Rng& rng);

  const TeacherConfig& config() const { return config_; }

  /// training selects batch statistics (and updates the running buffers).
  TeacherOutput<T> forward(const Tensor<T>& images, bool training);

  NamedTensors<T> parameters() const;
  /// Running batch-norm statistics, named like parameters.
  NamedTensors<T> buffers() const;

 private:
  struct Block {
    Tensor<T> conv_w, conv_b, bn_g, bn_b, bn_mean, bn_var;
  };
  TeacherConfig config_;
  std::vector<Block> blocks_;
  Tensor<T> head_w_, head_b_;
};

template <typename T>
struct TeacherResult {
  Tensor<T> logits;
  ActivationSet<T> acts;
};

/// Frozen teacher pass: inference-mode batch norm, every tapped map
/// bicubic-resized to grid x grid and concatenated over blocks. Nothing is
/// recorded on the tape. Throws ConfigError for a non-positive grid.
template <typename T>
TeacherResult<T> teacher_forward(Teacher<T>& teacher, const Tensor<T>& images, int grid);

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  return cross_entropy(logits, labels);
}

/// Splits images [B,C,H,W] into [B, (H/p)*(W/p), C*p*p] in patch raster order.
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch);

}  // namespace aal
