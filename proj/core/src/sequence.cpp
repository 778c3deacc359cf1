#include "vlmech/sequence.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "vlmech/errors.hpp"

namespace vlmech {

namespace {

constexpr int kManifestSchema = 1;

void validate(const SequenceElement& e) {
  if (const auto* img = std::get_if<ImageBlock>(&e)) {
    if (img->gh == 0 || img->gw == 0) throw ValidationError("image grid must be at least 1x1");
  } else if (const auto* fg = std::get_if<FrameGroup>(&e)) {
    if (fg->gh == 0 || fg->gw == 0) throw ValidationError("frame-group grid must be at least 1x1");
    if (!std::isfinite(fg->start) || !std::isfinite(fg->end) || fg->start < 0.0 || fg->end < fg->start) {
      throw ValidationError("frame-group times must satisfy 0 <= start <= end");
    }
    if (fg->frames == 0) throw ValidationError("frame group must hold at least one frame");
  }
}

std::size_t checked_grid(const nlohmann::json& j, std::size_t index, std::size_t& gw) {
  const auto& grid = j.at("grid");
  if (!grid.is_array() || grid.size() != 2) throw ParseError("grid must be [gh, gw]", index);
  gw = grid[1].get<std::size_t>();
  return grid[0].get<std::size_t>();
}

}  // namespace

std::string_view to_string(TimestampStyle style) { return style == TimestampStyle::hms ? "hms" : "seconds"; }

TimestampStyle parse_timestamp_style(std::string_view name) {
  if (name == "seconds") return TimestampStyle::seconds;
  if (name == "hms") return TimestampStyle::hms;
  throw ConfigError("unknown timestamp style '" + std::string(name) + "' (expected seconds or hms)");
}

bool operator==(const TextSpan& a, const TextSpan& b) { return a.tokens == b.tokens; }
bool operator==(const ImageBlock& a, const ImageBlock& b) { return a.gh == b.gh && a.gw == b.gw; }
bool operator==(const FrameGroup& a, const FrameGroup& b) {
  return a.start == b.start && a.end == b.end && a.gh == b.gh && a.gw == b.gw && a.style == b.style &&
         a.frames == b.frames;
}

MultimodalSequence::MultimodalSequence(std::vector<SequenceElement> elements) {
  for (auto& e : elements) push(std::move(e));
}

void MultimodalSequence::push(SequenceElement element) {
  validate(element);
  elements_.push_back(std::move(element));
}

std::size_t token_count(const SequenceElement& element) {
  return std::visit(
      [](const auto& e) -> std::size_t {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, TextSpan>) {
          return e.tokens.size();
        } else {
          return e.gh * e.gw;
        }
      },
      element);
}

std::size_t MultimodalSequence::token_count() const {
  std::size_t n = 0;
  for (const auto& e : elements_) n += vlmech::token_count(e);
  return n;
}

std::string MultimodalSequence::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kManifestSchema;
  auto& list = doc["elements"] = nlohmann::ordered_json::array();
  for (const auto& element : elements_) {
    nlohmann::ordered_json j;
    std::visit(
        [&j](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, TextSpan>) {
            j["kind"] = "text";
            j["tokens"] = e.tokens;
          } else if constexpr (std::is_same_v<T, ImageBlock>) {
            j["kind"] = "image";
            j["grid"] = {e.gh, e.gw};
          } else {
            j["kind"] = "frames";
            j["start"] = e.start;
            j["end"] = e.end;
            j["grid"] = {e.gh, e.gw};
            j["frames"] = e.frames;
            j["timestamp_style"] = std::string(to_string(e.style));
          }
        },
        element);
    list.push_back(std::move(j));
  }
  return doc.dump();
}

MultimodalSequence MultimodalSequence::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed sequence manifest: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != kManifestSchema || !doc.contains("elements") ||
      !doc["elements"].is_array()) {
    throw ParseError("sequence manifest needs schema_version 1 and an elements array");
  }
  MultimodalSequence seq;
  const auto& list = doc["elements"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& j = list[i];
    try {
      const std::string kind = j.at("kind").get<std::string>();
      std::size_t gw = 0;
      if (kind == "text") {
        seq.push(TextSpan{j.at("tokens").get<std::vector<std::size_t>>()});
      } else if (kind == "image") {
        const std::size_t gh = checked_grid(j, i, gw);
        seq.push(ImageBlock{gh, gw});
      } else if (kind == "frames") {
        const std::size_t gh = checked_grid(j, i, gw);
        seq.push(FrameGroup{j.at("start").get<double>(), j.at("end").get<double>(), gh, gw,
                            parse_timestamp_style(j.at("timestamp_style").get<std::string>()),
                            j.at("frames").get<std::size_t>()});
      } else {
        throw ParseError("unknown element kind '" + kind + "'", i);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), i);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), i);
    }
  }
  return seq;
}

bool operator==(const MultimodalSequence& a, const MultimodalSequence& b) { return a.elements_ == b.elements_; }

}  // namespace vlmech
