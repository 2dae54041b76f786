#include "aal/link.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "aal/ops.hpp"

namespace aal {

template <typename T>
LinkWeights<T> init_links(int channels, int maps, Rng& rng) {
  if (channels <= 0 || maps <= 0) throw ConfigError("link dimensions must be positive");
  const auto c = static_cast<std::size_t>(channels), k = static_cast<std::size_t>(maps);
  LinkWeights<T> links{Tensor<T>({c, k}), Tensor<T>({c}), Tensor<T>({c, k}, T(1))};
  const double bound = 1.0 / static_cast<double>(maps);
  for (auto& w : links.W.data()) w = static_cast<T>(rng.uniform(-bound, bound));
  links.W.set_requires_grad(true);
  links.b.set_requires_grad(true);
  return links;
}

template <typename T>
void apply_mask(LinkWeights<T>& links, std::span<const unsigned char> mask) {
  if (mask.size() != links.W.numel()) {
    throw DimensionError("mask of " + std::to_string(mask.size()) + " entries does not match links " +
                         shape_str(links.W.shape()));
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    links.mask[i] = mask[i] ? T(1) : T(0);
    if (!mask[i]) links.W[i] = T(0);
  }
}

template <typename T>
Tensor<T> augment(const Tensor<T>& maps, const LinkWeights<T>& links) {
  if (maps.rank() != 4 || maps.dim(1) != links.maps()) {
    throw DimensionError("augment: attention stack " + shape_str(maps.shape()) + " does not match links " +
                         shape_str(links.W.shape()));
  }
  Tensor<T> w = reshape(mul(links.W, links.mask), {links.channels(), links.maps(), 1, 1});
  return conv2d(maps, w, links.b);
}

template <typename T>
Tensor<T> attention_loss(const Tensor<T>& aug, const Tensor<T>& acts) {
  if (aug.rank() != 4 || aug.shape() != acts.shape()) {
    throw DimensionError("attention_loss: augmented maps " + shape_str(aug.shape()) +
                         " and activation maps " + shape_str(acts.shape()) + " differ");
  }
  for (const Tensor<T>* t : {&aug, &acts}) {
    for (T v : t->data()) {
      if (std::isnan(v)) throw NumericError("attention_loss: NaN in input maps");
    }
  }
  const T eps = T(kL2NormalizeEps);
  Tensor<T> diff = sub(l2_normalize(aug, eps, 2), l2_normalize(acts, eps, 2));
  return mean(map_norm(diff, 2));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& ce, const Tensor<T>& att, T lambda) {
  return add(ce, scale(att, lambda));
}

double lambda_at(const LambdaSchedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw InputError("lambda_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(s.total_epochs) + ")");
  }
  using Wide = boost::multiprecision::cpp_bin_float_50;
  // Each setting is taken at its shortest decimal spelling, so 0.99 means
  // 99/100 rather than the nearest double.
  auto wide = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return Wide(std::string(buf, res.ptr));
  };
  const int early = std::min(epoch, s.switch_epoch);
  const int late = std::max(0, epoch - s.switch_epoch);
  const Wide value = wide(s.lambda0) * boost::multiprecision::pow(wide(s.decay_early), early) *
                     boost::multiprecision::pow(wide(s.decay_late), late);
  return value.convert_to<double>();
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows needs [B,K], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[r * k + j] > logits[r * k + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
Tensor<T> hard_distill_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits) {
  if (student_logits.rank() != 2 || student_logits.shape() != teacher_logits.shape()) {
    throw DimensionError("hard_distill_loss: student logits " + shape_str(student_logits.shape()) +
                         " and teacher logits " + shape_str(teacher_logits.shape()) + " differ");
  }
  const std::vector<int> labels = argmax_rows(teacher_logits);
  return cross_entropy(student_logits, std::span<const int>(labels));
}

#define AAL_INSTANTIATE_LINK(T)                                                                 \
  template LinkWeights<T> init_links<T>(int, int, Rng&);                                        \
  template void apply_mask<T>(LinkWeights<T>&, std::span<const unsigned char>);                 \
  template Tensor<T> augment<T>(const Tensor<T>&, const LinkWeights<T>&);                       \
  template Tensor<T> attention_loss<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, T);                      \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);                                   \
  template Tensor<T> hard_distill_loss<T>(const Tensor<T>&, const Tensor<T>&);

AAL_INSTANTIATE_LINK(float)
AAL_INSTANTIATE_LINK(double)

}  // namespace aal
