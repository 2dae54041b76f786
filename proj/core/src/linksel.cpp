#include "aal/linksel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "aal/error.hpp"
#include "io_util.hpp"

namespace aal {

int LinkSnapshot::channels() const { return std::accumulate(block_widths.begin(), block_widths.end(), 0); }

std::vector<int> LinkSnapshot::channel_block() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < block_widths.size(); ++j) out.insert(out.end(), block_widths[j], static_cast<int>(j));
  return out;
}

void LinkSnapshot::validate() const {
  if (heads <= 0 || layers <= 0) throw DimensionError("link snapshot needs positive heads and layers");
  for (int w : block_widths) {
    if (w < 0) throw DimensionError("link snapshot has a negative block width");
  }
  const auto expected = static_cast<std::size_t>(channels()) * static_cast<std::size_t>(maps());
  if (W.size() != expected) {
    throw DimensionError("link snapshot holds " + std::to_string(W.size()) + " weights, metadata implies " +
                         std::to_string(expected));
  }
  for (double w : W) {
    if (!std::isfinite(w)) throw NumericError("link snapshot contains a non-finite weight");
  }
}

LinkSnapshot normalize_links(const LinkSnapshot& snap) {
  snap.validate();
  if (snap.W.empty()) throw DegenerateInputError("no link weights to normalize");
  const auto [lo_it, hi_it] = std::minmax_element(snap.W.begin(), snap.W.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) throw DegenerateInputError("all link weights equal " + std::to_string(lo) + "; cannot normalize");
  LinkSnapshot out = snap;
  for (double& w : out.W) w = (w - lo) / (hi - lo);
  return out;
}

Mask prune_links(const LinkSnapshot& normalized, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InputError("prune threshold must lie in [0, 1]");
  normalized.validate();
  const int c_count = normalized.channels(), m_count = normalized.heads;
  Mask mask(normalized.W.size(), 0);
  for (int c = 0; c < c_count; ++c) {
    for (int n = 0; n < normalized.layers; ++n) {
      double acc = 0.0;
      for (int m = 0; m < m_count; ++m) acc += std::abs(normalized.at(c, m, n));
      if (acc / m_count > theta) {
        for (int m = 0; m < m_count; ++m) {
          mask[static_cast<std::size_t>(c * normalized.maps() + n * m_count + m)] = 1;
        }
      }
    }
  }
  return mask;
}

double kept_fraction(const Mask& mask) {
  if (mask.empty()) return 0.0;
  const auto kept = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  return static_cast<double>(kept) / static_cast<double>(mask.size());
}

Heatmap block_heatmap(const LinkSnapshot& snap) {
  snap.validate();
  Heatmap heat;
  heat.blocks = static_cast<int>(snap.block_widths.size());
  heat.layers = snap.layers;
  heat.values.assign(static_cast<std::size_t>(heat.blocks * heat.layers), 0.0);
  int c0 = 0;
  for (int j = 0; j < heat.blocks; ++j) {
    const int width = snap.block_widths[static_cast<std::size_t>(j)];
    if (width == 0) throw ConfigError("teacher block " + std::to_string(j + 1) + " has no channels");
    for (int n = 0; n < snap.layers; ++n) {
      double acc = 0.0;
      for (int c = c0; c < c0 + width; ++c) {
        for (int m = 0; m < snap.heads; ++m) acc += std::abs(snap.at(c, m, n));
      }
      heat.values[static_cast<std::size_t>(j * heat.layers + n)] = acc / (width * snap.heads);
    }
    c0 += width;
  }
  return heat;
}

Mask build_range_mask(const std::vector<BlockRange>& ranges, const std::vector<int>& block_widths, int heads,
                      int layers) {
  if (heads <= 0 || layers <= 0) throw InputError("range mask needs positive heads and layers");
  const int blocks = static_cast<int>(block_widths.size());
  std::vector<const BlockRange*> by_block(block_widths.size(), nullptr);
  for (const BlockRange& r : ranges) {
    if (r.block < 1 || r.block > blocks) {
      throw InputError("mask spec names block " + std::to_string(r.block) + " but the teacher has " +
                       std::to_string(blocks) + " blocks");
    }
    if (r.lo < 1 || r.hi > layers || r.lo > r.hi) {
      throw InputError("block " + std::to_string(r.block) + " range [" + std::to_string(r.lo) + ", " +
                       std::to_string(r.hi) + "] is not within [1, " + std::to_string(layers) + "]");
    }
    auto& slot = by_block[static_cast<std::size_t>(r.block - 1)];
    if (slot) throw InputError("mask spec lists block " + std::to_string(r.block) + " twice");
    slot = &r;
  }
  const int maps = heads * layers;
  Mask mask;
  for (int j = 0; j < blocks; ++j) {
    const BlockRange* r = by_block[static_cast<std::size_t>(j)];
    for (int c = 0; c < block_widths[static_cast<std::size_t>(j)]; ++c) {
      for (int k = 0; k < maps; ++k) {
        const int n = k / heads + 1;
        mask.push_back(r && n >= r->lo && n <= r->hi ? 1 : 0);
      }
    }
  }
  return mask;
}

std::vector<BlockRange> block_envelope(const Mask& mask, const std::vector<int>& block_widths, int heads,
                                       int layers) {
  const int maps = heads * layers;
  const auto channels = std::accumulate(block_widths.begin(), block_widths.end(), 0);
  if (mask.size() != static_cast<std::size_t>(channels * maps)) {
    throw DimensionError("mask size " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(channels) + " channels x " + std::to_string(maps) + " maps");
  }
  std::vector<BlockRange> out;
  int c0 = 0;
  for (std::size_t j = 0; j < block_widths.size(); ++j) {
    int lo = layers + 1, hi = 0;
    for (int c = c0; c < c0 + block_widths[j]; ++c) {
      for (int k = 0; k < maps; ++k) {
        if (mask[static_cast<std::size_t>(c * maps + k)]) {
          lo = std::min(lo, k / heads + 1);
          hi = std::max(hi, k / heads + 1);
        }
      }
    }
    if (hi > 0) out.push_back({static_cast<int>(j) + 1, lo, hi});
    c0 += block_widths[j];
  }
  return out;
}

std::string mask_spec_to_json(const std::vector<BlockRange>& ranges) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : ranges) j.push_back({{"block", r.block}, {"lo", r.lo}, {"hi", r.hi}});
  return j.dump(2) + "\n";
}

std::vector<BlockRange> mask_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("mask spec is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw FormatError("mask spec must be a JSON list of {block, lo, hi}");
  std::vector<BlockRange> out;
  for (const auto& item : j) {
    if (!item.is_object()) throw FormatError("mask spec entries must be objects");
    BlockRange r;
    for (auto [key, field] : {std::pair{"block", &r.block}, std::pair{"lo", &r.lo}, std::pair{"hi", &r.hi}}) {
      auto it = item.find(key);
      if (it == item.end() || !it->is_number_integer()) {
        throw FormatError(std::string("mask spec entry lacks integer field '") + key + "'");
      }
      *field = it->get<int>();
    }
    out.push_back(r);
  }
  return out;
}

std::vector<BlockRange> read_mask_spec(const std::string& path) { return mask_spec_from_json(detail::read_file(path)); }

void write_mask_spec(const std::string& path, const std::vector<BlockRange>& ranges) {
  detail::write_file(path, mask_spec_to_json(ranges));
}

void write_raw_mask(const std::string& path, const Mask& mask, int channels, int maps) {
  if (mask.size() != static_cast<std::size_t>(channels) * static_cast<std::size_t>(maps)) {
    throw DimensionError("mask size does not match its header");
  }
  std::string bytes;
  detail::put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(channels));
  detail::put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(maps));
  bytes.append(mask.begin(), mask.end());
  detail::write_file(path, bytes);
}

Mask read_raw_mask(const std::string& path, int& channels, int& maps) {
  const std::string bytes = detail::read_file(path);
  detail::Reader in(bytes, path);
  channels = static_cast<int>(in.get<std::uint32_t>());
  maps = static_cast<int>(in.get<std::uint32_t>());
  const std::string_view body = in.take(static_cast<std::size_t>(channels) * static_cast<std::size_t>(maps));
  if (!in.done()) throw FormatError(path + ": trailing bytes at offset " + std::to_string(in.offset()));
  Mask mask(body.begin(), body.end());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw FormatError(path + ": mask byte at offset " + std::to_string(8 + i) + " is not 0 or 1");
  }
  return mask;
}

std::string heatmap_csv(const Heatmap& heat) {
  std::string out = "block";
  for (int n = 0; n < heat.layers; ++n) out += ",layer_" + std::to_string(n + 1);
  out += "\n";
  char buf[32];
  for (int j = 0; j < heat.blocks; ++j) {
    out += std::to_string(j + 1);
    for (int n = 0; n < heat.layers; ++n) {
      std::snprintf(buf, sizeof buf, ",%.6g", heat.at(j, n));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string heatmap_pgm(const Heatmap& heat) {
  std::string out = "P5\n" + std::to_string(heat.layers) + " " + std::to_string(heat.blocks) + "\n255\n";
  if (heat.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(heat.values.begin(), heat.values.end());
  const double lo = *lo_it, hi = *hi_it;
  for (double v : heat.values) {
    long px = 0;
    if (hi > lo) {
      px = std::lround((v - lo) / (hi - lo) * 255.0);
    } else if (v != 0.0) {
      px = 255;
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(px)));
  }
  return out;
}

}  // namespace aal
