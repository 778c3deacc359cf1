#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlmech/autograd.hpp"
#include "vlmech/sequence.hpp"
#include "vlmech/tensor.hpp"

namespace vlmech {

/// Temporal, vertical and horizontal position of one token.
struct PositionId {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  friend bool operator==(const PositionId&, const PositionId&) = default;
};

enum class Axis { t = 0, h = 1, w = 2 };

std::string_view to_string(Axis axis);
std::size_t component(const PositionId& id, Axis axis);

/// Assigns (t, h, w) ids with a running scalar offset:
///  - a text token gets (n, n, n) and advances n by one;
///  - an image block of gh x gw starting at n gets (n, n + row, n + col);
///  - a run of adjacent frame groups shares the base offset n0 of its first
///    group for t, so group g gets t = n0 + g, while h and w use the offset
///    n at the start of that group (n + row, n + col);
///  - after every block n becomes (largest id emitted so far) + 1.
/// Timestamp text is ordinary text. Tokens inside a block are row-major.
std::vector<PositionId> assign_position_ids(const MultimodalSequence& seq);

enum class RopeScheme { chunked, interleaved };

std::string_view to_string(RopeScheme scheme);
RopeScheme parse_rope_scheme(std::string_view name);

/// Rotary pairs given to each axis by the chunked layout, in t, h, w order.
struct ChunkSplit {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t total() const { return t + h + w; }
  friend bool operator==(const ChunkSplit&, const ChunkSplit&) = default;
};

/// Equal thirds of `pairs`; remainder pairs go to t, then h.
ChunkSplit equal_thirds(std::size_t pairs);

/// Per-pair axis assignment and angular frequency theta[i] = base^(-2i/head_dim).
struct FrequencyAllocation {
  std::size_t head_dim = 0;
  double base = 10000.0;
  RopeScheme scheme = RopeScheme::interleaved;
  std::optional<ChunkSplit> chunk_split;
  std::vector<Axis> axis_of_pair;
  std::vector<double> theta;

  std::size_t pairs() const { return head_dim / 2; }

  /// {"schema_version":1,"head_dim":..,"base":..,"scheme":..,"chunk_split":[t,h,w]|null}
  std::string to_json() const;
  static FrequencyAllocation from_json(std::string_view text);
};

/// Throws ConfigError for odd or zero head_dim, base <= 1, or a chunk split
/// that is missing (chunked), present (interleaved), or does not sum to
/// head_dim / 2. Interleaved assigns axis [t, h, w][i mod 3] to pair i.
FrequencyAllocation build_frequency_allocation(std::size_t head_dim, double base, RopeScheme scheme,
                                               std::optional<ChunkSplit> chunk_split = std::nullopt);

/// Chunked layout with the default equal-thirds split.
FrequencyAllocation chunked_allocation(std::size_t head_dim, double base = 10000.0);
FrequencyAllocation interleaved_allocation(std::size_t head_dim, double base = 10000.0);

/// cos / sin of every (token, pair) rotation angle, each [tokens x pairs].
struct RotaryTable {
  Tensor cos;
  Tensor sin;
};

RotaryTable rotary_table(const std::vector<PositionId>& ids, const FrequencyAllocation& alloc);

/// Rotates pair (x[2i], x[2i+1]) of each token by p * theta[i], where p is
/// the id component selected by axis_of_pair[i]:
///   (x1 cos a - x2 sin a, x1 sin a + x2 cos a).
Tensor apply_mrope(const Tensor& x, const std::vector<PositionId>& ids, const FrequencyAllocation& alloc);
Var apply_mrope(Tape& tape, Var x, const std::vector<PositionId>& ids, const FrequencyAllocation& alloc);

struct AxisSpectrum {
  std::size_t count = 0;
  std::size_t min_index = 0;
  std::size_t max_index = 0;
  /// Largest difference between consecutive assigned pair indices; 0 when
  /// the axis holds fewer than two pairs.
  std::size_t max_gap = 0;
};

std::array<AxisSpectrum, 3> spectrum_report(const FrequencyAllocation& alloc);

/// Width of the low and high frequency bands used by the balance check:
/// max(3, ceil(pairs / 3)).
std::size_t band_width(std::size_t pairs);

/// True when the axis has a pair in the lowest band [0, band_width) and one
/// in the highest band [pairs - band_width, pairs).
bool spans_frequency_bands(const AxisSpectrum& s, std::size_t pairs);

}  // namespace vlmech
