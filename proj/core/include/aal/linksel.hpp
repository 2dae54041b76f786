#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aal {

/// Read-only copy of trained link weights with the shape metadata needed
/// for analysis. W is [channels, heads*layers]; column n*heads + m is head m
/// of layer n. Teacher channels are grouped into consecutive blocks.
struct LinkSnapshot {
  std::vector<double> W;
  int heads = 0;
  int layers = 0;
  std::vector<int> block_widths;
  int epoch = -1;

  int channels() const;
  int maps() const { return heads * layers; }
  std::vector<int> channel_block() const;
  double at(int c, int m, int n) const { return W[static_cast<std::size_t>(c * maps() + n * heads + m)]; }
  /// Throws DimensionError when W does not match the metadata.
  void validate() const;
};

using Mask = std::vector<std::uint8_t>;

/// Global min-max rescaling of the signed weights into [0, 1].
/// Throws DegenerateInputError when all weights are equal.
LinkSnapshot normalize_links(const LinkSnapshot& snap);

/// Keeps all heads of (channel c, layer n) when the head-average of |w| is
/// strictly above theta. Expects a normalized snapshot. Throws InputError
/// for theta outside [0, 1].
Mask prune_links(const LinkSnapshot& normalized, double theta);

/// Fraction of ones in a mask.
double kept_fraction(const Mask& mask);

struct Heatmap {
  int blocks = 0;
  int layers = 0;
  std::vector<double> values;  // [blocks, layers]

  double at(int j, int n) const { return values[static_cast<std::size_t>(j * layers + n)]; }
};

/// Entry (j, n) is the mean of |W| over the channels of block j and every
/// head of layer n. Throws ConfigError for an empty block.
Heatmap block_heatmap(const LinkSnapshot& snap);

/// Inclusive, 1-based range of student layers linked to one teacher block
/// (blocks are 1-based as well).
struct BlockRange {
  int block = 1;
  int lo = 1;
  int hi = 1;

  bool operator==(const BlockRange&) const = default;
};

/// Mask with ones exactly where the channel's block has a range containing
/// the layer; blocks without a range are disconnected. Throws InputError for
/// ranges outside [1, layers], reversed ranges, unknown or repeated blocks.
Mask build_range_mask(const std::vector<BlockRange>& ranges, const std::vector<int>& block_widths, int heads,
                      int layers);

/// Per block, the smallest range covering every layer kept by `mask`;
/// blocks with no kept link are omitted.
std::vector<BlockRange> block_envelope(const Mask& mask, const std::vector<int>& block_widths, int heads,
                                       int layers);

std::string mask_spec_to_json(const std::vector<BlockRange>& ranges);
/// Parses a JSON list of {"block", "lo", "hi"} objects; FormatError on bad
/// JSON or missing fields.
std::vector<BlockRange> mask_spec_from_json(const std::string& text);
std::vector<BlockRange> read_mask_spec(const std::string& path);
void write_mask_spec(const std::string& path, const std::vector<BlockRange>& ranges);

/// Raw mask file: u32 channels, u32 maps (little-endian), then one byte per
/// entry in row-major order.
void write_raw_mask(const std::string& path, const Mask& mask, int channels, int maps);
Mask read_raw_mask(const std::string& path, int& channels, int& maps);

/// Rows are teacher blocks, columns student layers, 6 significant digits.
std::string heatmap_csv(const Heatmap& heat);
/// Binary 8-bit PGM (P5), one pixel per entry, values min-max scaled to
/// 0-255. A constant heatmap maps to 255 when nonzero and 0 otherwise.
std::string heatmap_pgm(const Heatmap& heat);

}  // namespace aal
