#include "aal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "io_util.hpp"

namespace aal {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[] = "AALCKPT1";  // written with its terminating NUL
constexpr std::size_t kMagicSize = sizeof(kMagic);

std::size_t dtype_size(Checkpoint::DType d) { return d == Checkpoint::DType::kF32 ? 4 : 8; }

template <typename T>
constexpr Checkpoint::DType dtype_of() {
  return sizeof(T) == 4 ? Checkpoint::DType::kF32 : Checkpoint::DType::kF64;
}

std::size_t dims_numel(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename S, typename D>
void convert(const std::string& payload, D* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    S v;
    std::memcpy(&v, payload.data() + i * sizeof(S), sizeof(S));
    out[i] = static_cast<D>(v);
  }
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : tensors) {
    if (e.name == name) return true;
  }
  return false;
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : tensors) {
    if (e.name == name) return e;
  }
  throw FormatError("checkpoint has no tensor named '" + name + "'");
}

template <typename T>
void Checkpoint::put(const std::string& name, const Tensor<T>& t) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw InputError("tensor name too long");
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw InputError("tensor rank too large");
  Entry e;
  e.name = name;
  e.dtype = dtype_of<T>();
  for (auto d : t.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
  e.payload.assign(reinterpret_cast<const char*>(t.ptr()), t.numel() * sizeof(T));
  for (auto& existing : tensors) {
    if (existing.name == name) {
      existing = std::move(e);
      return;
    }
  }
  tensors.push_back(std::move(e));
}

template <typename T>
void Checkpoint::put_all(const NamedTensors<T>& named) {
  for (const auto& [name, t] : named) put(name, t);
}

template <typename T>
Tensor<T> Checkpoint::get(const std::string& name) const {
  const Entry& e = entry(name);
  Shape shape(e.dims.begin(), e.dims.end());
  Tensor<T> t(shape);
  if (e.dtype == DType::kF32) {
    convert<float>(e.payload, t.ptr(), t.numel());
  } else {
    convert<double>(e.payload, t.ptr(), t.numel());
  }
  return t;
}

template <typename T>
void Checkpoint::load_into(const std::string& name, Tensor<T>& dst) const {
  Tensor<T> src = get<T>(name);
  if (src.shape() != dst.shape()) {
    throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                      shape_str(dst.shape()));
  }
  std::copy(src.data().begin(), src.data().end(), dst.data().begin());
}

template <typename T>
void Checkpoint::load_all(const NamedTensors<T>& named) const {
  for (auto [name, t] : named) load_into(name, t);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, kMagicSize);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& e : ckpt.tensors) {
    if (e.payload.size() != dims_numel(e.dims) * dtype_size(e.dtype)) {
      throw DimensionError("checkpoint tensor '" + e.name + "' payload does not match its dims");
    }
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.dtype));
    out.push_back(static_cast<char>(e.dims.size()));
    for (auto d : e.dims) detail::put_le<std::uint32_t>(out, d);
    out += e.payload;
  }
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  out += ckpt.meta;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& what) {
  detail::Reader in(bytes, what);
  if (in.take(std::min(kMagicSize, in.remaining())) != std::string_view(kMagic, kMagicSize)) {
    throw FormatError(what + ": bad magic at byte offset 0");
  }
  Checkpoint ckpt;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Entry e;
    e.name = std::string(in.take(in.get<std::uint16_t>()));
    const std::size_t dtype_at = in.offset();
    const auto dtype = in.get<std::uint8_t>();
    if (dtype > 1) {
      throw FormatError(what + ": unknown dtype " + std::to_string(dtype) + " at byte offset " +
                        std::to_string(dtype_at));
    }
    e.dtype = static_cast<Checkpoint::DType>(dtype);
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) {
      const std::size_t at = in.offset();
      e.dims.push_back(in.get<std::uint32_t>());
      if (e.dims.back() == 0) throw FormatError(what + ": zero dimension at byte offset " + std::to_string(at));
    }
    e.payload = std::string(in.take(dims_numel(e.dims) * dtype_size(e.dtype)));
    ckpt.tensors.push_back(std::move(e));
  }
  ckpt.meta = std::string(in.take(in.get<std::uint32_t>()));
  if (!in.done()) throw FormatError(what + ": trailing bytes at byte offset " + std::to_string(in.offset()));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path), path); }

#define AAL_INSTANTIATE_CKPT(T)                                                          \
  template void Checkpoint::put<T>(const std::string&, const Tensor<T>&);                \
  template void Checkpoint::put_all<T>(const NamedTensors<T>&);                          \
  template Tensor<T> Checkpoint::get<T>(const std::string&) const;                       \
  template void Checkpoint::load_into<T>(const std::string&, Tensor<T>&) const;          \
  template void Checkpoint::load_all<T>(const NamedTensors<T>&) const;

AAL_INSTANTIATE_CKPT(float)
AAL_INSTANTIATE_CKPT(double)

}  // namespace aal
