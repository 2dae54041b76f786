#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aal/data.hpp"
#include "aal/linksel.hpp"
#include "aal/models.hpp"
#include "aal/wsol.hpp"

namespace aal {

struct SelectLinksResult {
  Mask mask;
  int channels = 0;
  int maps = 0;
  double kept = 0.0;
  std::vector<BlockRange> envelope;
};

/// Normalizes and prunes the links of a checkpoint, then writes
/// `<out>.mask` (raw mask) and `<out>.json` (block-range envelope of the
/// kept links, usable as a mask spec).
SelectLinksResult select_links(const std::string& checkpoint, double theta, const std::string& out);

/// Writes `<out>.csv` and `<out>.pgm` for the block x layer heatmap of a
/// checkpoint's links.
Heatmap export_heatmap(const std::string& checkpoint, const std::string& out);

/// Class-token attention maps of the student for every image of `data`,
/// CIFAR-normalized and run in batches without recording gradients.
template <typename T>
Tensor<double> student_attention_maps(const Student<T>& student, const Dataset& data, std::size_t batch = 100);

/// Localization of `data` (which must carry boxes) by the student stored
/// in `checkpoint`.
WsolReport wsol_from_checkpoint(const std::string& checkpoint, const Dataset& data, std::span<const double> deltas);

/// Deterministic synthetic-shapes set written as a CIFAR-10 binary file
/// plus its boxes CSV.
Dataset gen_data(std::uint64_t seed, std::size_t n, int classes, const std::string& images_path,
                 const std::string& boxes_path);

}  // namespace aal
