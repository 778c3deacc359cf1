#include "vlmech/timeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <set>

#include "vlmech/errors.hpp"
#include "vlmech/mrope.hpp"
#include "vlmech/tokenizer.hpp"

namespace vlmech {

void SamplingPolicy::validate() const {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("sampling fps must be positive");
  if (max_frames == 0) throw ConfigError("max_frames must be positive");
  if (tokens_per_frame == 0) throw ConfigError("tokens_per_frame must be positive");
  if (token_budget == 0) throw ConfigError("token_budget must be positive");
  if (group_size == 0) throw ConfigError("group_size must be positive");
  if (token_budget < tokens_per_frame) {
    throw ConfigError("token_budget " + std::to_string(token_budget) + " cannot hold one frame of " +
                      std::to_string(tokens_per_frame) + " tokens");
  }
}

std::size_t SamplingPolicy::frame_cap() const { return std::min(max_frames, token_budget / tokens_per_frame); }

std::vector<double> sample_frames(double duration, double native_fps, const SamplingPolicy& policy) {
  policy.validate();
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw ValidationError("duration must be finite and >= 0");
  if (!(native_fps > 0.0) || !std::isfinite(native_fps)) throw ValidationError("native fps must be positive");
  if (duration == 0.0) return {0.0};

  const double rate = std::min(policy.fps, native_fps);
  const double wanted = std::floor(duration * rate);
  const std::size_t cap = policy.frame_cap();
  std::vector<double> out;
  if (wanted <= static_cast<double>(cap)) {
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(wanted));
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(static_cast<double>(k) / rate);
  } else {
    out.reserve(cap);
    for (std::size_t k = 0; k < cap; ++k) out.push_back(static_cast<double>(k) * duration / static_cast<double>(cap));
  }
  return out;
}

std::string format_timestamp(double seconds, TimestampStyle style) {
  if (!std::isfinite(seconds) || seconds < 0.0) throw ValidationError("timestamp must be finite and >= 0");
  if (seconds * 10.0 >= 9.0e18) throw ValidationError("timestamp too large to format");
  if (style == TimestampStyle::seconds) {
    const auto tenths = static_cast<std::uint64_t>(std::floor(seconds * 10.0 + 0.5));
    return "<" + std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + " seconds>";
  }
  const auto total = static_cast<std::uint64_t>(std::floor(seconds));
  const std::uint64_t h = total / 3600, m = (total / 60) % 60, s = total % 60;
  auto two = [](std::uint64_t v) { return (v < 10 ? "0" : "") + std::to_string(v); };
  return "<" + two(h) + ":" + two(m) + ":" + two(s) + ">";
}

double parse_hms(std::string_view text) {
  auto fail = [&] { throw ValidationError("not an <HH:MM:SS> timestamp: '" + std::string(text) + "'"); };
  if (text.size() < 10 || text.front() != '<' || text.back() != '>') fail();
  const std::string_view body = text.substr(1, text.size() - 2);
  const auto c2 = body.rfind(':');
  if (c2 == std::string_view::npos || c2 == 0) fail();
  const auto c1 = body.rfind(':', c2 - 1);
  if (c1 == std::string_view::npos) fail();
  auto field = [&](std::string_view s, std::size_t min_digits) {
    std::uint64_t v = 0;
    if (s.size() < min_digits) fail();
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail();
    return v;
  };
  const std::uint64_t h = field(body.substr(0, c1), 2);
  const std::string_view ms = body.substr(c1 + 1, c2 - c1 - 1);
  const std::string_view ss = body.substr(c2 + 1);
  if (ms.size() != 2 || ss.size() != 2) fail();
  const std::uint64_t m = field(ms, 2), s = field(ss, 2);
  if (m > 59 || s > 59) fail();
  return static_cast<double>(h * 3600 + m * 60 + s);
}

MultimodalSequence interleave_timestamps(std::span<const double> frames, std::size_t group_size,
                                         TimestampStyle style, std::size_t gh, std::size_t gw) {
  if (frames.empty()) throw ValidationError("interleave_timestamps needs at least one frame");
  if (group_size == 0) throw ConfigError("group_size must be positive");
  MultimodalSequence seq;
  for (std::size_t first = 0; first < frames.size(); first += group_size) {
    const std::size_t last = std::min(frames.size(), first + group_size) - 1;
    seq.push(TextSpan{tokenize(format_timestamp(frames[first], style))});
    seq.push(FrameGroup{frames[first], frames[last], gh, gw, style, last - first + 1});
  }
  return seq;
}

std::string_view to_string(TemporalIdScheme scheme) {
  return scheme == TemporalIdScheme::absolute_time ? "absolute_time" : "textual_timestamp";
}

TemporalIdScheme parse_temporal_scheme(std::string_view name) {
  if (name == "textual_timestamp") return TemporalIdScheme::textual_timestamp;
  if (name == "absolute_time") return TemporalIdScheme::absolute_time;
  throw ConfigError("unknown temporal id scheme '" + std::string(name) +
                    "' (expected textual_timestamp or absolute_time)");
}

PositionRangeReport position_id_range_report(const MultimodalSequence& seq, TemporalIdScheme scheme,
                                             double granularity) {
  if (scheme == TemporalIdScheme::absolute_time && (!(granularity > 0.0) || !std::isfinite(granularity))) {
    throw ConfigError("absolute-time granularity must be positive");
  }
  if (seq.empty()) throw ValidationError("position report needs a non-empty sequence");

  std::vector<FrameGroup> groups;
  for (const auto& e : seq.elements())
    if (const auto* fg = std::get_if<FrameGroup>(&e)) groups.push_back(*fg);
  if (groups.empty()) throw ValidationError("sequence holds no frame groups");

  std::vector<std::size_t> ts;
  ts.reserve(groups.size());
  if (scheme == TemporalIdScheme::textual_timestamp) {
    MultimodalSequence video_only;
    for (const auto& g : groups) video_only.push(g);
    const auto ids = assign_position_ids(video_only);
    std::size_t offset = 0;
    for (const auto& g : groups) {
      ts.push_back(ids[offset].t);
      offset += g.gh * g.gw;
    }
  } else {
    for (const auto& g : groups) ts.push_back(static_cast<std::size_t>(std::llround(g.start / granularity)));
  }

  const std::set<std::size_t> distinct(ts.begin(), ts.end());
  PositionRangeReport r;
  r.min_t = *distinct.begin();
  r.max_t = *distinct.rbegin();
  r.distinct_t = distinct.size();
  r.sparsity = static_cast<double>(r.max_t - r.min_t + 1) / static_cast<double>(r.distinct_t);
  return r;
}

}  // namespace vlmech
