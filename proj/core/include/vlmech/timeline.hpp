#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlmech/sequence.hpp"

namespace vlmech {

/// Video sampling knobs. `group_size` is the number of frames per temporal
/// patch.
struct SamplingPolicy {
  double fps = 2.0;
  std::size_t max_frames = 2048;
  std::size_t tokens_per_frame = 128;
  std::size_t token_budget = 256 * 1024;  // default cap = 2048 frames
  std::size_t group_size = 2;

  /// Throws ConfigError on non-positive fields or a budget too small to
  /// hold one frame.
  void validate() const;
  /// min(max_frames, floor(token_budget / tokens_per_frame)).
  std::size_t frame_cap() const;
};

/// Frame timestamps in seconds.
///
/// The sampling rate is min(policy.fps, native_fps). The target count is
/// floor(duration * rate), at least 1. When it fits under frame_cap(), frame
/// k sits at k / rate; otherwise frame_cap() frames are spread uniformly as
/// k * duration / n. A zero-length clip yields {0.0}.
std::vector<double> sample_frames(double duration, double native_fps, const SamplingPolicy& policy);

/// "<X.Y seconds>" (one decimal, round half up on t*10) or "<HH:MM:SS>"
/// (seconds truncated, hours zero-padded to at least two digits).
std::string format_timestamp(double seconds, TimestampStyle style);

/// Parses "<HH:MM:SS>" back to whole seconds.
double parse_hms(std::string_view text);

/// Splits frames into consecutive groups of `group_size` (the last may be
/// short) and prefixes each group with the tokenized timestamp of its first
/// frame.
MultimodalSequence interleave_timestamps(std::span<const double> frames, std::size_t group_size,
                                         TimestampStyle style, std::size_t gh = 1, std::size_t gw = 1);

enum class TemporalIdScheme { textual_timestamp, absolute_time };

std::string_view to_string(TemporalIdScheme scheme);
TemporalIdScheme parse_temporal_scheme(std::string_view name);

struct PositionRangeReport {
  std::size_t max_t = 0;
  std::size_t min_t = 0;
  std::size_t distinct_t = 0;
  /// (max_t - min_t + 1) / distinct_t; 1 means dense consecutive ids.
  double sparsity = 0.0;
};

/// Temporal-id statistics over the frame groups of `seq`.
///
/// textual_timestamp: ids come from assign_position_ids over the frame
/// groups alone (timestamps are text, so groups advance t by one).
/// absolute_time: group g gets t = round(start_g / granularity).
PositionRangeReport position_id_range_report(const MultimodalSequence& seq, TemporalIdScheme scheme,
                                             double granularity = 1.0);

}  // namespace vlmech
