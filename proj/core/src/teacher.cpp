#include <cmath>
#include <numeric>
#include <string>

#include "aal/models.hpp"
#include "aal/resize.hpp"

namespace aal {

int TeacherConfig::total_channels() const { return std::accumulate(widths.begin(), widths.end(), 0); }

void TeacherConfig::validate() const {
  if (widths.empty()) throw ConfigError("teacher needs at least one block");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("teacher block widths must be positive");
  }
  if (channels <= 0 || classes <= 0) throw ConfigError("teacher channels and classes must be positive");
  if (image_size >> widths.size() <= 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is too small for " +
                      std::to_string(widths.size()) + " pooled blocks");
  }
}

template <typename T>
Teacher<T>::Teacher(const TeacherConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  std::size_t in = static_cast<std::size_t>(config_.channels);
  for (int width : config_.widths) {
    const auto out = static_cast<std::size_t>(width);
    Block blk;
    blk.conv_w = Tensor<T>({out, in, 3, 3});
    const double stddev = std::sqrt(2.0 / static_cast<double>(in * 9));
    for (auto& v : blk.conv_w.data()) v = static_cast<T>(rng.normal(stddev));
    blk.conv_b = Tensor<T>({out});
    blk.bn_g = Tensor<T>({out}, T(1));
    blk.bn_b = Tensor<T>({out});
    blk.bn_mean = Tensor<T>({out});
    blk.bn_var = Tensor<T>({out}, T(1));
    blocks_.push_back(std::move(blk));
    in = out;
  }
  const auto classes = static_cast<std::size_t>(config_.classes);
  head_w_ = Tensor<T>({in, classes});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : head_w_.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  head_b_ = Tensor<T>({classes});
  for (auto& [name, t] : parameters()) t.set_requires_grad(true);
}

template <typename T>
NamedTensors<T> Teacher<T>::parameters() const {
  NamedTensors<T> out;
  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const std::string p = "teacher.blocks." + std::to_string(n) + ".";
    const Block& b = blocks_[n];
    out.insert(out.end(), {{p + "conv.weight", b.conv_w},
                           {p + "conv.bias", b.conv_b},
                           {p + "bn.weight", b.bn_g},
                           {p + "bn.bias", b.bn_b}});
  }
  out.insert(out.end(), {{"teacher.head.weight", head_w_}, {"teacher.head.bias", head_b_}});
  return out;
}

template <typename T>
NamedTensors<T> Teacher<T>::buffers() const {
  NamedTensors<T> out;
  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const std::string p = "teacher.blocks." + std::to_string(n) + ".";
    out.emplace_back(p + "bn.running_mean", blocks_[n].bn_mean);
    out.emplace_back(p + "bn.running_var", blocks_[n].bn_var);
  }
  return out;
}

template <typename T>
TeacherOutput<T> Teacher<T>::forward(const Tensor<T>& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != static_cast<std::size_t>(config_.channels)) {
    throw DimensionError("teacher expects images [B," + std::to_string(config_.channels) + ",H,W], got " +
                         shape_str(images.shape()));
  }
  TeacherOutput<T> out;
  Tensor<T> x = images;
  for (Block& blk : blocks_) {
    Tensor<T> z = batch_norm(conv2d(x, blk.conv_w, blk.conv_b, 1, 1), blk.bn_g, blk.bn_b, blk.bn_mean,
                             blk.bn_var, training);
    Tensor<T> a = relu(z);
    out.taps.push_back(config_.tap == TapPoint::kPostNorm ? z : a);
    x = max_pool2d(a);
  }
  out.logits = linear(global_avg_pool(x), head_w_, head_b_);
  return out;
}

template <typename T>
TeacherResult<T> teacher_forward(Teacher<T>& teacher, const Tensor<T>& images, int grid) {
  if (grid <= 0) throw ConfigError("teacher_forward: grid must be positive, got " + std::to_string(grid));
  NoGradScope<T> no_grad;
  TeacherOutput<T> raw = teacher.forward(images, false);
  TeacherResult<T> result;
  result.logits = raw.logits.detach();
  std::vector<Tensor<T>> resized;
  for (std::size_t blk = 0; blk < raw.taps.size(); ++blk) {
    resized.push_back(bicubic_resize(raw.taps[blk], grid, grid));
    result.acts.channel_block.insert(result.acts.channel_block.end(), raw.taps[blk].dim(1),
                                     static_cast<int>(blk));
  }
  result.acts.maps = concat(resized, 1).detach();
  return result;
}

template class Teacher<float>;
template class Teacher<double>;
template TeacherResult<float> teacher_forward(Teacher<float>&, const Tensor<float>&, int);
template TeacherResult<double> teacher_forward(Teacher<double>&, const Tensor<double>&, int);

}  // namespace aal
