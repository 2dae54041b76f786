#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aal/tensor.hpp"

namespace aal {

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr int kCifarRecord = 1 + kCifarPixels;
inline constexpr std::array<float, 3> kCifarMean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd{0.2470f, 0.2435f, 0.2616f};

/// Half-open pixel box: columns [x0, x1), rows [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const Box&) const = default;
};

/// Images [N,3,32,32] in [0,1] stored flat, labels and optional boxes.
struct Dataset {
  std::vector<float> pixels;
  std::vector<int> labels;
  std::vector<Box> boxes;
  int classes = 10;

  std::size_t size() const { return labels.size(); }
  bool has_boxes() const { return !boxes.empty(); }
  const float* image(std::size_t i) const { return pixels.data() + i * kCifarPixels; }

  /// Copies the listed images into a [k,3,32,32] tensor.
  template <typename T>
  Tensor<T> batch(const std::vector<std::size_t>& indices) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& indices) const;
  /// First n samples (or all when n exceeds the size).
  Dataset head(std::size_t n) const;
};

/// Parses the CIFAR-10 binary layout (1 label byte + 3072 channel-planar
/// pixel bytes per record). Throws FormatError on truncation or a label
/// above 9, InputError when the file cannot be read.
Dataset parse_cifar10(const std::string& bytes, const std::string& what = "cifar10");
Dataset read_cifar10_batch(const std::string& path);
/// Inverse of the reader; pixels are rounded to the nearest byte.
std::string encode_cifar10(const Dataset& data);
void write_cifar10_batch(const std::string& path, const Dataset& data);

/// Noise background in [0, 0.2] with one filled shape of size 8..16 at a
/// random position in a bright random color: a square for class 0, a disc
/// for class 1. Boxes bound the drawn shape exactly.
Dataset gen_shapes(std::uint64_t seed, std::size_t n, int classes = 2);

/// CSV with header index,x0,y0,x1,y1.
std::string boxes_csv(const std::vector<Box>& boxes);
std::vector<Box> parse_boxes_csv(const std::string& text);
void write_boxes(const std::string& path, const std::vector<Box>& boxes);
std::vector<Box> read_boxes(const std::string& path);

/// Zero-pads by 4 and crops 32x32 shifted by (dy, dx) in [-4, 4] from the
/// centre, then mirrors horizontally when flip is set. A zero shift without
/// flip copies the image. image and out are [3,32,32].
template <typename T>
void crop_flip(const T* image, T* out, int dy, int dx, bool flip);

/// crop_flip with offsets and flip (probability 0.5) drawn per image from
/// `seed`; images is [B,3,32,32].
template <typename T>
Tensor<T> augment_batch(const Tensor<T>& images, std::uint64_t seed);

/// Subtracts the CIFAR-10 channel means and divides by the channel stds.
template <typename T>
void normalize_cifar(Tensor<T>& images);

}  // namespace aal
