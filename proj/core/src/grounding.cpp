#include "vlmech/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "vlmech/errors.hpp"

namespace vlmech::grounding {

int normalize(double v, double dim) {
  if (!(dim >= 1.0) || !std::isfinite(dim)) throw ValidationError("image dimension must be >= 1");
  if (!(v >= 0.0 && v <= dim)) {
    throw ValidationError("pixel coordinate " + std::to_string(v) + " outside [0, " + std::to_string(dim) + "]");
  }
  const double scaled = v * kScale / dim;
  return std::clamp(static_cast<int>(std::floor(scaled + 0.5)), 0, kScale);
}

double denormalize(int n, double dim) { return static_cast<double>(n) * dim / kScale; }

NormalizedBox normalize_box(double x1, double y1, double x2, double y2, double width, double height,
                            std::string label) {
  NormalizedBox b{normalize(x1, width), normalize(y1, height), normalize(x2, width), normalize(y2, height),
                  std::move(label)};
  validate(b);
  return b;
}

namespace {

bool in_range(int v) { return v >= 0 && v <= kScale; }

}  // namespace

void validate(const NormalizedBox& b) {
  if (!in_range(b.x1) || !in_range(b.y1) || !in_range(b.x2) || !in_range(b.y2)) {
    throw ValidationError("box coordinate outside [0, 1000]");
  }
  if (b.x1 > b.x2 || b.y1 > b.y2) throw ValidationError("box corners out of order (need x1 <= x2, y1 <= y2)");
}

void validate(const NormalizedPoint& p) {
  if (!in_range(p.x) || !in_range(p.y)) throw ValidationError("point coordinate outside [0, 1000]");
}

void validate(const Box3D& b) {
  const double all[] = {b.x_center, b.y_center, b.z_center, b.x_size, b.y_size, b.z_size, b.roll, b.pitch, b.yaw};
  for (double v : all)
    if (!std::isfinite(v)) throw ValidationError("3D box values must be finite");
  if (b.x_size < 0 || b.y_size < 0 || b.z_size < 0) throw ValidationError("3D box sizes must be non-negative");
}

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::box2d:
      return "box2d";
    case Kind::point:
      return "point";
    case Kind::box3d:
      return "box3d";
    case Kind::count:
      return "count";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  if (name == "box2d") return Kind::box2d;
  if (name == "point") return Kind::point;
  if (name == "box3d") return Kind::box3d;
  if (name == "count") return Kind::count;
  throw ConfigError("unknown grounding kind '" + std::string(name) + "' (expected box2d, point, box3d or count)");
}

namespace {

const char* coordinate_key(Kind kind) {
  switch (kind) {
    case Kind::box2d:
      return "bbox_2d";
    case Kind::point:
      return "point_2d";
    case Kind::box3d:
      return "bbox_3d";
    case Kind::count:
      return "count";
  }
  return "";
}

std::size_t arity(Kind kind) {
  switch (kind) {
    case Kind::box2d:
      return 4;
    case Kind::point:
      return 2;
    case Kind::box3d:
      return 9;
    case Kind::count:
      return 1;
  }
  return 0;
}

int normalized_int(const nlohmann::json& v, std::size_t index) {
  if (!v.is_number()) throw ParseError("coordinate is not a number", index);
  const double d = v.get<double>();
  if (d != std::floor(d)) throw ParseError("normalized coordinate " + v.dump() + " is not an integer", index);
  if (d < 0 || d > kScale) throw ParseError("normalized coordinate " + v.dump() + " outside [0, 1000]", index);
  return static_cast<int>(d);
}

Detection parse_record(const nlohmann::json& rec, Kind kind, std::size_t index) {
  if (!rec.is_object()) throw ParseError("record is not an object", index);
  const char* key = coordinate_key(kind);
  if (!rec.contains(key)) throw ParseError(std::string("missing \"") + key + "\"", index);
  if (!rec.contains("label")) throw ParseError("missing \"label\"", index);
  if (!rec["label"].is_string()) throw ParseError("\"label\" is not a string", index);
  std::string label = rec["label"].get<std::string>();
  const auto& coords = rec[key];

  if (kind == Kind::count) {
    if (!coords.is_number_integer() || coords.get<std::int64_t>() < 0) {
      throw ParseError("\"count\" must be a non-negative integer", index);
    }
    return CountAnswer{coords.get<std::int64_t>(), std::move(label)};
  }
  if (!coords.is_array()) throw ParseError(std::string("\"") + key + "\" is not an array", index);
  if (coords.size() != arity(kind)) {
    throw ParseError("expected " + std::to_string(arity(kind)) + " numbers in \"" + key + "\", got " +
                     std::to_string(coords.size()),
                     index);
  }
  try {
    if (kind == Kind::box2d) {
      NormalizedBox b{normalized_int(coords[0], index), normalized_int(coords[1], index),
                      normalized_int(coords[2], index), normalized_int(coords[3], index), std::move(label)};
      validate(b);
      return b;
    }
    if (kind == Kind::point) {
      return NormalizedPoint{normalized_int(coords[0], index), normalized_int(coords[1], index), std::move(label)};
    }
    double v[9];
    for (std::size_t i = 0; i < 9; ++i) {
      if (!coords[i].is_number()) throw ParseError("3D box value is not a number", index);
      v[i] = coords[i].get<double>();
    }
    Box3D b{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], std::move(label)};
    validate(b);
    return b;
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), index);
  }
}

void validate_record(const NormalizedBox& r) { validate(r); }
void validate_record(const NormalizedPoint& r) { validate(r); }
void validate_record(const Box3D& r) { validate(r); }
void validate_record(const CountAnswer& r) {
  if (r.count < 0) throw ValidationError("count must be non-negative");
}

}  // namespace

std::vector<Detection> parse_grounding_json(std::string_view text, Kind kind) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("top level must be a JSON array of records");
  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(parse_record(doc[i], kind, i));
  return out;
}

std::string serialize_grounding_json(const std::vector<Detection>& records) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& record : records) {
    nlohmann::ordered_json j;
    std::visit(
        [&j](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          validate_record(r);
          if constexpr (std::is_same_v<T, NormalizedBox>) {
            j["bbox_2d"] = {r.x1, r.y1, r.x2, r.y2};
          } else if constexpr (std::is_same_v<T, NormalizedPoint>) {
            j["point_2d"] = {r.x, r.y};
          } else if constexpr (std::is_same_v<T, Box3D>) {
            j["bbox_3d"] = {r.x_center, r.y_center, r.z_center, r.x_size, r.y_size,
                            r.z_size,   r.roll,     r.pitch,    r.yaw};
          } else {
            j["count"] = r.count;
          }
          j["label"] = r.label;
        },
        record);
    doc.push_back(std::move(j));
  }
  try {
    return doc.dump();
  } catch (const nlohmann::json::type_error& e) {
    throw ValidationError(std::string("label is not valid UTF-8: ") + e.what());
  }
}

double iou(const NormalizedBox& a, const NormalizedBox& b) {
  auto area = [](const NormalizedBox& r) {
    return static_cast<double>(r.x2 - r.x1) * static_cast<double>(r.y2 - r.y1);
  };
  const int ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const int iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = static_cast<double>(ix) * static_cast<double>(iy);
  const double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace vlmech::grounding
