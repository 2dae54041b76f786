#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aal/gradcheck.hpp"
#include "aal/tensor.hpp"

namespace aal {

/// Binary checkpoint, little-endian:
///   magic "AALCKPT1\0" (9 bytes), u32 tensor count,
///   per tensor: u16 name length, name, u8 dtype (0 f32, 1 f64), u8 rank,
///               rank x u32 dims, raw payload,
///   u32 length + JSON metadata.
/// Payloads and metadata are kept as raw bytes, so decoding and re-encoding
/// reproduces the file exactly.
struct Checkpoint {
  enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

  struct Entry {
    std::string name;
    DType dtype = DType::kF32;
    std::vector<std::uint32_t> dims;
    std::string payload;
  };

  std::vector<Entry> tensors;
  std::string meta = "{}";

  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;

  /// Stores the tensor values (replacing an entry of the same name).
  template <typename T>
  void put(const std::string& name, const Tensor<T>& t);
  template <typename T>
  void put_all(const NamedTensors<T>& named);

  /// Values converted to T. Throws FormatError for a missing name.
  template <typename T>
  Tensor<T> get(const std::string& name) const;
  /// Copies the stored values into `dst`; throws FormatError when the name
  /// is missing or the shape differs.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& dst) const;
  template <typename T>
  void load_all(const NamedTensors<T>& named) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError naming the byte offset on a bad magic, truncation,
/// unknown dtype or trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint");

/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace aal
