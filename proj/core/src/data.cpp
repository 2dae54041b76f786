#include "aal/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aal/random.hpp"
#include "io_util.hpp"

namespace aal {

namespace {

constexpr int kPlane = kCifarSide * kCifarSide;
constexpr int kPad = 4;

}  // namespace

template <typename T>
Tensor<T> Dataset::batch(const std::vector<std::size_t>& indices) const {
  Tensor<T> out({indices.size(), 3, kCifarSide, kCifarSide});
  T* dst = out.ptr();
  for (std::size_t i : indices) {
    if (i >= size()) throw InputError("sample index " + std::to_string(i) + " out of range");
    const float* src = image(i);
    dst = std::transform(src, src + kCifarPixels, dst, [](float v) { return static_cast<T>(v); });
  }
  return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset out;
  out.classes = classes;
  out.pixels.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(n * kCifarPixels));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  if (has_boxes()) out.boxes.assign(boxes.begin(), boxes.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Dataset parse_cifar10(const std::string& bytes, const std::string& what) {
  Dataset data;
  data.classes = 10;
  detail::Reader in(bytes, what);
  while (!in.done()) {
    const std::size_t at = in.offset();
    const auto label = in.get<std::uint8_t>();
    if (label > 9) {
      throw FormatError(what + ": label byte " + std::to_string(label) + " at offset " + std::to_string(at) +
                        " exceeds 9");
    }
    const std::string_view px = in.take(kCifarPixels);
    data.labels.push_back(label);
    for (char c : px) data.pixels.push_back(static_cast<float>(static_cast<unsigned char>(c)) / 255.0f);
  }
  return data;
}

Dataset read_cifar10_batch(const std::string& path) { return parse_cifar10(detail::read_file(path), path); }

std::string encode_cifar10(const Dataset& data) {
  std::string out;
  out.reserve(data.size() * kCifarRecord);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] > 255) throw InputError("label does not fit in one byte");
    out.push_back(static_cast<char>(data.labels[i]));
    const float* img = data.image(i);
    for (int k = 0; k < kCifarPixels; ++k) {
      const long v = std::lround(std::clamp(img[k], 0.0f, 1.0f) * 255.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  return out;
}

void write_cifar10_batch(const std::string& path, const Dataset& data) {
  detail::write_file(path, encode_cifar10(data));
}

Dataset gen_shapes(std::uint64_t seed, std::size_t n, int classes) {
  if (n == 0) throw InputError("gen_shapes needs at least one sample");
  if (classes < 1 || classes > 2) throw ConfigError("gen_shapes supports 1 or 2 classes");
  Rng rng(seed);
  Dataset data;
  data.classes = classes;
  data.pixels.resize(n * kCifarPixels);
  for (std::size_t s = 0; s < n; ++s) {
    float* img = data.pixels.data() + s * kCifarPixels;
    for (int k = 0; k < kCifarPixels; ++k) img[k] = static_cast<float>(rng.uniform(0.0, 0.2));
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    const int size = rng.range(8, 16);
    const int x = rng.range(0, kCifarSide - size);
    const int y = rng.range(0, kCifarSide - size);
    std::array<float, 3> color{};
    for (auto& ch : color) ch = static_cast<float>(rng.uniform(0.5, 1.0));

    const double cx = x + size / 2.0, cy = y + size / 2.0, r2 = size * size / 4.0;
    Box box{kCifarSide, kCifarSide, 0, 0};
    for (int i = y; i < y + size; ++i) {
      for (int j = x; j < x + size; ++j) {
        const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
        if (label == 1 && dx * dx + dy * dy > r2) continue;
        for (int ch = 0; ch < 3; ++ch) img[ch * kPlane + i * kCifarSide + j] = color[static_cast<std::size_t>(ch)];
        box.x0 = std::min(box.x0, j);
        box.y0 = std::min(box.y0, i);
        box.x1 = std::max(box.x1, j + 1);
        box.y1 = std::max(box.y1, i + 1);
      }
    }
    data.labels.push_back(label);
    data.boxes.push_back(box);
  }
  return data;
}

std::string boxes_csv(const std::vector<Box>& boxes) {
  std::string out = "index,x0,y0,x1,y1\n";
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& b = boxes[i];
    out += std::to_string(i) + "," + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," +
           std::to_string(b.x1) + "," + std::to_string(b.y1) + "\n";
  }
  return out;
}

std::vector<Box> parse_boxes_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "index,x0,y0,x1,y1") {
    throw FormatError("boxes file must start with header index,x0,y0,x1,y1");
  }
  std::vector<Box> boxes;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<long> v;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stol(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError("boxes file line " + std::to_string(row) + ": '" + cell + "' is not an integer");
      }
    }
    if (v.size() != 5 || v[0] != static_cast<long>(boxes.size())) {
      throw FormatError("boxes file line " + std::to_string(row) + " must be index,x0,y0,x1,y1 in order");
    }
    Box b{static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3]), static_cast<int>(v[4])};
    if (b.x0 < 0 || b.y0 < 0 || b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > kCifarSide || b.y1 > kCifarSide) {
      throw FormatError("boxes file line " + std::to_string(row) + " is not a box inside the 32x32 image");
    }
    boxes.push_back(b);
  }
  return boxes;
}

void write_boxes(const std::string& path, const std::vector<Box>& boxes) { detail::write_file(path, boxes_csv(boxes)); }

std::vector<Box> read_boxes(const std::string& path) { return parse_boxes_csv(detail::read_file(path)); }

template <typename T>
void crop_flip(const T* image, T* out, int dy, int dx, bool flip) {
  if (dy < -kPad || dy > kPad || dx < -kPad || dx > kPad) throw InputError("crop shift outside [-4, 4]");
  for (int ch = 0; ch < 3; ++ch) {
    const T* src = image + ch * kPlane;
    T* dst = out + ch * kPlane;
    for (int i = 0; i < kCifarSide; ++i) {
      const int si = i + dy;
      for (int j = 0; j < kCifarSide; ++j) {
        const int sj = (flip ? kCifarSide - 1 - j : j) + dx;
        const bool inside = si >= 0 && si < kCifarSide && sj >= 0 && sj < kCifarSide;
        dst[i * kCifarSide + j] = inside ? src[si * kCifarSide + sj] : T(0);
      }
    }
  }
}

template <typename T>
Tensor<T> augment_batch(const Tensor<T>& images, std::uint64_t seed) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != kCifarSide || images.dim(3) != kCifarSide) {
    throw DimensionError("augment_batch expects [B,3,32,32], got " + shape_str(images.shape()));
  }
  Rng rng(seed);
  Tensor<T> out(images.shape());
  for (std::size_t b = 0; b < images.dim(0); ++b) {
    const int dy = rng.range(-kPad, kPad);
    const int dx = rng.range(-kPad, kPad);
    const bool flip = rng.uniform() < 0.5;
    crop_flip(images.ptr() + b * kCifarPixels, out.ptr() + b * kCifarPixels, dy, dx, flip);
  }
  return out;
}

template <typename T>
void normalize_cifar(Tensor<T>& images) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("normalize_cifar expects [B,3,H,W], got " + shape_str(images.shape()));
  }
  const std::size_t plane = images.dim(2) * images.dim(3);
  T* p = images.ptr();
  for (std::size_t b = 0; b < images.dim(0); ++b) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const T m = static_cast<T>(kCifarMean[ch]), s = static_cast<T>(kCifarStd[ch]);
      for (std::size_t k = 0; k < plane; ++k, ++p) *p = (*p - m) / s;
    }
  }
}

#define AAL_INSTANTIATE_DATA(T)                                                   \
  template Tensor<T> Dataset::batch<T>(const std::vector<std::size_t>&) const;    \
  template void crop_flip<T>(const T*, T*, int, int, bool);                       \
  template Tensor<T> augment_batch<T>(const Tensor<T>&, std::uint64_t);           \
  template void normalize_cifar<T>(Tensor<T>&);

AAL_INSTANTIATE_DATA(float)
AAL_INSTANTIATE_DATA(double)

}  // namespace aal
