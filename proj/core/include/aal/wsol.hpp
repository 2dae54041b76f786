#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aal/data.hpp"
#include "aal/tensor.hpp"

namespace aal {

/// Intersection over union of two half-open boxes; 0 when both are empty.
double box_iou(const Box& a, const Box& b);

/// Bounding box of the largest 4-connected component of a row-major h x w
/// mask. Ties go to the component found first in raster order; nullopt for
/// an empty mask.
std::optional<Box> largest_component_box(std::span<const std::uint8_t> mask, int h, int w);

/// 0.05, 0.10, ..., 0.95.
std::vector<double> wsol_thresholds();

/// Mean over channels of maps[B, C, P, P], bicubic-resized to side x side.
/// Returns one row-major map per image.
std::vector<std::vector<double>> localization_maps(const Tensor<double>& maps, int side);

struct WsolReport {
  std::vector<double> thresholds;
  std::vector<double> deltas;
  std::vector<std::vector<double>> accuracy;  // [delta][threshold]
  std::vector<double> max_box_acc;            // per delta
  std::size_t images = 0;
  std::size_t empty_masks = 0;                // (image, threshold) pairs with nothing above threshold

  /// MaxBoxAcc averaged over the given deltas (each must be in `deltas`).
  double mean_max_box_acc(std::span<const double> which) const;
};

/// For every threshold t, each map is binarized at t * max(map), boxed by
/// its largest component and scored against the ground truth box; a hit
/// needs IoU > delta. Throws DimensionError when counts or sizes disagree.
WsolReport evaluate_wsol(const std::vector<std::vector<double>>& maps, int side, const std::vector<Box>& boxes,
                         std::span<const double> deltas);

/// Text table: one line per delta, then the [0.3, 0.5] and [0.3, 0.5, 0.7]
/// averages when those deltas are present.
std::string wsol_report_text(const WsolReport& report);

}  // namespace aal
