#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vlmech {

enum class TimestampStyle { seconds, hms };

std::string_view to_string(TimestampStyle style);
TimestampStyle parse_timestamp_style(std::string_view name);

struct TextSpan {
  std::vector<std::size_t> tokens;
};

/// An image occupying gh x gw decoder tokens (the grid after 2x2 merging).
struct ImageBlock {
  std::size_t gh = 1;
  std::size_t gw = 1;
};

/// One video temporal patch: `frames` consecutive frames sharing a single
/// gh x gw token grid. Times are in seconds; `start` is the first frame's
/// timestamp and `end` the last frame's.
struct FrameGroup {
  double start = 0.0;
  double end = 0.0;
  std::size_t gh = 1;
  std::size_t gw = 1;
  TimestampStyle style = TimestampStyle::seconds;
  std::size_t frames = 1;
};

using SequenceElement = std::variant<TextSpan, ImageBlock, FrameGroup>;

/// Ordered text, image and video elements. Elements are validated on entry.
class MultimodalSequence {
 public:
  MultimodalSequence() = default;
  explicit MultimodalSequence(std::vector<SequenceElement> elements);

  void push(SequenceElement element);

  const std::vector<SequenceElement>& elements() const { return elements_; }
  bool empty() const { return elements_.empty(); }
  std::size_t size() const { return elements_.size(); }

  /// Decoder tokens contributed by all elements.
  std::size_t token_count() const;

  /// JSON manifest: {"schema_version":1,"elements":[...]}.
  std::string to_json() const;
  static MultimodalSequence from_json(std::string_view text);

  friend bool operator==(const MultimodalSequence& a, const MultimodalSequence& b);

 private:
  std::vector<SequenceElement> elements_;
};

std::size_t token_count(const SequenceElement& element);

bool operator==(const TextSpan& a, const TextSpan& b);
bool operator==(const ImageBlock& a, const ImageBlock& b);
bool operator==(const FrameGroup& a, const FrameGroup& b);

}  // namespace vlmech
