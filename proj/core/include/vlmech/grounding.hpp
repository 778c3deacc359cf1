#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vlmech::grounding {

/// Upper end of the normalized coordinate range.
inline constexpr int kScale = 1000;

/// round_half_up(v * 1000 / dim), clamped to [0, 1000]. Requires dim >= 1
/// and 0 <= v <= dim; throws ValidationError otherwise.
int normalize(double v, double dim);
/// n * dim / 1000.
double denormalize(int n, double dim);

struct NormalizedBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::string label;

  friend bool operator==(const NormalizedBox&, const NormalizedBox&) = default;
};

struct NormalizedPoint {
  int x = 0, y = 0;
  std::string label;

  friend bool operator==(const NormalizedPoint&, const NormalizedPoint&) = default;
};

/// 9-DoF box: center and size in meters, roll/pitch/yaw in radians.
struct Box3D {
  double x_center = 0, y_center = 0, z_center = 0;
  double x_size = 0, y_size = 0, z_size = 0;
  double roll = 0, pitch = 0, yaw = 0;
  std::string label;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Direct counting answer: {"count": n, "label": ...}.
struct CountAnswer {
  std::int64_t count = 0;
  std::string label;

  friend bool operator==(const CountAnswer&, const CountAnswer&) = default;
};

/// Normalizes a pixel-space box against an image of width x height.
NormalizedBox normalize_box(double x1, double y1, double x2, double y2, double width, double height,
                            std::string label = {});

/// Throws ValidationError unless 0 <= x1 <= x2 <= 1000 and 0 <= y1 <= y2 <= 1000.
void validate(const NormalizedBox& box);
void validate(const NormalizedPoint& point);
void validate(const Box3D& box);

enum class Kind { box2d, point, box3d, count };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view name);

using Detection = std::variant<NormalizedBox, NormalizedPoint, Box3D, CountAnswer>;

/// Parses a JSON array of records of the given kind:
///   box2d: {"bbox_2d":[x1,y1,x2,y2],"label":".."}
///   point: {"point_2d":[x,y],"label":".."}
///   box3d: {"bbox_3d":[xc,yc,zc,xs,ys,zs,roll,pitch,yaw],"label":".."}
///   count: {"count":n,"label":".."}
/// Normalized coordinates must be integers in [0, 1000]. Errors are
/// ParseError naming the offending element index where one exists.
std::vector<Detection> parse_grounding_json(std::string_view text, Kind kind);

/// Canonical form: compact UTF-8 JSON, coordinate key first then "label",
/// no trailing whitespace. Re-parses to identical records.
std::string serialize_grounding_json(const std::vector<Detection>& records);

/// Intersection over union of the two boxes' areas; 0 when the union is 0.
double iou(const NormalizedBox& a, const NormalizedBox& b);

}  // namespace vlmech::grounding
