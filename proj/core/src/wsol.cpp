#include "aal/wsol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aal/resize.hpp"

namespace aal {

double box_iou(const Box& a, const Box& b) {
  const int iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const int ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long inter = static_cast<long>(iw) * ih;
  const long uni = static_cast<long>(std::max(0, a.area())) + std::max(0, b.area()) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::optional<Box> largest_component_box(std::span<const std::uint8_t> mask, int h, int w) {
  if (h < 0 || w < 0 || mask.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw DimensionError("mask size does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<int> stack;
  std::optional<Box> best;
  std::size_t best_size = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[start] || seen[start]) continue;
    Box box{w, h, 0, 0};
    std::size_t size = 0;
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w, x = p % w;
      ++size;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& [ny, nx] : nbr) {
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int q = ny * w + nx;
        if (mask[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = box;
    }
  }
  return best;
}

std::vector<double> wsol_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 19; ++i) t.push_back(i * 0.05);
  return t;
}

std::vector<std::vector<double>> localization_maps(const Tensor<double>& maps, int side) {
  if (maps.rank() != 4) throw DimensionError("localization maps need [B,C,P,P], got " + shape_str(maps.shape()));
  const std::size_t b = maps.dim(0), c = maps.dim(1), ph = maps.dim(2), pw = maps.dim(3);
  Tensor<double> mean({b, 1, ph, pw});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < ph * pw; ++p) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) s += maps.ptr()[(i * c + ch) * ph * pw + p];
      mean.ptr()[i * ph * pw + p] = s / static_cast<double>(c);
    }
  }
  const Tensor<double> up = bicubic_resize(mean, side, side);
  std::vector<std::vector<double>> out(b);
  const std::size_t n = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  for (std::size_t i = 0; i < b; ++i) out[i].assign(up.ptr() + i * n, up.ptr() + (i + 1) * n);
  return out;
}

double WsolReport::mean_max_box_acc(std::span<const double> which) const {
  if (which.empty()) throw InputError("no deltas to average");
  double s = 0.0;
  for (double d : which) {
    const auto it = std::find_if(deltas.begin(), deltas.end(), [d](double x) { return std::abs(x - d) < 1e-12; });
    if (it == deltas.end()) throw InputError("delta " + std::to_string(d) + " was not evaluated");
    s += max_box_acc[static_cast<std::size_t>(it - deltas.begin())];
  }
  return s / static_cast<double>(which.size());
}

WsolReport evaluate_wsol(const std::vector<std::vector<double>>& maps, int side, const std::vector<Box>& boxes,
                         std::span<const double> deltas) {
  if (maps.size() != boxes.size()) {
    throw DimensionError("wsol: " + std::to_string(maps.size()) + " maps but " + std::to_string(boxes.size()) +
                         " boxes");
  }
  WsolReport r;
  r.thresholds = wsol_thresholds();
  r.deltas.assign(deltas.begin(), deltas.end());
  r.images = maps.size();
  std::vector<std::vector<std::size_t>> hits(deltas.size(), std::vector<std::size_t>(r.thresholds.size(), 0));
  const std::size_t n = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& m = maps[i];
    if (m.size() != n) throw DimensionError("wsol: map " + std::to_string(i) + " is not " + std::to_string(side) + "^2");
    const double mx = *std::max_element(m.begin(), m.end());
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      const double cut = r.thresholds[t] * mx;
      for (std::size_t p = 0; p < n; ++p) mask[p] = m[p] >= cut ? 1 : 0;
      const auto box = largest_component_box(mask, side, side);
      if (!box) ++r.empty_masks;
      const double iou = box ? box_iou(*box, boxes[i]) : 0.0;
      for (std::size_t d = 0; d < deltas.size(); ++d) {
        if (iou > deltas[d]) ++hits[d][t];
      }
    }
  }
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    std::vector<double> acc(r.thresholds.size(), 0.0);
    for (std::size_t t = 0; t < acc.size(); ++t) {
      acc[t] = r.images ? static_cast<double>(hits[d][t]) / static_cast<double>(r.images) : 0.0;
    }
    r.max_box_acc.push_back(*std::max_element(acc.begin(), acc.end()));
    r.accuracy.push_back(std::move(acc));
  }
  return r;
}

std::string wsol_report_text(const WsolReport& report) {
  std::string out;
  char line[96];
  for (std::size_t d = 0; d < report.deltas.size(); ++d) {
    std::snprintf(line, sizeof line, "MaxBoxAcc@%.2f %.4f\n", report.deltas[d], report.max_box_acc[d]);
    out += line;
  }
  auto has = [&](double v) {
    return std::any_of(report.deltas.begin(), report.deltas.end(), [v](double x) { return std::abs(x - v) < 1e-12; });
  };
  const double two[] = {0.3, 0.5};
  const double three[] = {0.3, 0.5, 0.7};
  if (has(0.3) && has(0.5)) {
    std::snprintf(line, sizeof line, "MaxBoxAcc[0.3,0.5] %.4f\n", report.mean_max_box_acc(two));
    out += line;
  }
  if (has(0.3) && has(0.5) && has(0.7)) {
    std::snprintf(line, sizeof line, "MaxBoxAcc[0.3,0.5,0.7] %.4f\n", report.mean_max_box_acc(three));
    out += line;
  }
  std::snprintf(line, sizeof line, "images %zu empty_masks %zu\n", report.images, report.empty_masks);
  out += line;
  return out;
}

}  // namespace aal
