#pragma once

#include <span>
#include <vector>

#include "aal/models.hpp"
#include "aal/random.hpp"
#include "aal/tensor.hpp"

namespace aal {

/// Trainable links from the M·N student maps to the C teacher channels.
/// mask holds 1 for an active link and 0 for a pruned one; it is never
/// trained, and the effective weight is W ⊙ mask.
template <typename T>
struct LinkWeights {
  Tensor<T> W;     // [C, M·N]
  Tensor<T> b;     // [C]
  Tensor<T> mask;  // [C, M·N], entries 0 or 1

  std::size_t channels() const { return W.dim(0); }
  std::size_t maps() const { return W.dim(1); }
};

/// W uniform in [-1/maps, 1/maps], b = 0, every link active.
template <typename T>
LinkWeights<T> init_links(int channels, int maps, Rng& rng);

/// Replaces the mask and zeroes W wherever the new mask is 0.
/// Throws DimensionError when the mask shape differs from W.
template <typename T>
void apply_mask(LinkWeights<T>& links, std::span<const unsigned char> mask);

/// A⁺_c = Σ_k (mask⊙W)[c,k] · A_k + b_c for attention maps [B, M·N, P, P],
/// computed as a 1x1 convolution. Throws DimensionError on a channel
/// mismatch.
template <typename T>
Tensor<T> augment(const Tensor<T>& maps, const LinkWeights<T>& links);

template <typename T>
Tensor<T> augment(const AttentionStack<T>& attn, const LinkWeights<T>& links) {
  return augment(attn.maps, links);
}

/// Mean over batch and channels of ‖ l2n(aug) - l2n(acts) ‖₂, each [B,C,P,P]
/// map flattened and normalized with eps 1e-12. Throws DimensionError on a
/// shape mismatch and NumericError on NaN input.
template <typename T>
Tensor<T> attention_loss(const Tensor<T>& aug, const Tensor<T>& acts);

/// ce + lambda * att.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& ce, const Tensor<T>& att, T lambda);

/// Per-epoch regularization weight.
struct LambdaSchedule {
  double lambda0 = 2000.0;
  double decay_early = 0.99;
  double decay_late = 0.98;
  int switch_epoch = 200;
  int total_epochs = 300;
};

/// lambda0 · decay_early^min(e, switch) · decay_late^max(0, e - switch),
/// evaluated in 50-digit arithmetic and rounded once to double.
/// Throws InputError unless 0 <= epoch < total_epochs.
double lambda_at(const LambdaSchedule& schedule, int epoch);

/// Row-wise argmax (first maximum wins).
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

/// Cross-entropy of the student logits against the teacher's argmax labels.
/// Throws DimensionError when batch or class counts differ.
template <typename T>
Tensor<T> hard_distill_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits);

}  // namespace aal
