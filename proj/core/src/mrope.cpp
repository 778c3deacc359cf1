#include "vlmech/mrope.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "vlmech/errors.hpp"
#include "vlmech/ops.hpp"

namespace vlmech {

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::t:
      return "t";
    case Axis::h:
      return "h";
    case Axis::w:
      return "w";
  }
  return "?";
}

std::size_t component(const PositionId& id, Axis axis) {
  switch (axis) {
    case Axis::t:
      return id.t;
    case Axis::h:
      return id.h;
    case Axis::w:
      return id.w;
  }
  return 0;
}

std::vector<PositionId> assign_position_ids(const MultimodalSequence& seq) {
  std::vector<PositionId> ids;
  ids.reserve(seq.token_count());
  std::size_t next = 0;
  std::size_t max_emitted = 0;
  bool emitted_any = false;
  bool in_video_run = false;
  std::size_t run_base = 0;
  std::size_t run_group = 0;

  auto emit = [&](PositionId id) {
    ids.push_back(id);
    max_emitted = std::max({max_emitted, id.t, id.h, id.w});
    emitted_any = true;
  };
  auto advance = [&] {
    if (emitted_any) next = max_emitted + 1;
  };

  for (const auto& element : seq.elements()) {
    if (const auto* text = std::get_if<TextSpan>(&element)) {
      in_video_run = false;
      for (std::size_t k = 0; k < text->tokens.size(); ++k) {
        emit({next, next, next});
        advance();
      }
    } else if (const auto* img = std::get_if<ImageBlock>(&element)) {
      in_video_run = false;
      for (std::size_t r = 0; r < img->gh; ++r)
        for (std::size_t c = 0; c < img->gw; ++c) emit({next, next + r, next + c});
      advance();
    } else {
      const auto& fg = std::get<FrameGroup>(element);
      if (!in_video_run) {
        in_video_run = true;
        run_base = next;
        run_group = 0;
      }
      const std::size_t t = run_base + run_group;
      for (std::size_t r = 0; r < fg.gh; ++r)
        for (std::size_t c = 0; c < fg.gw; ++c) emit({t, next + r, next + c});
      ++run_group;
      advance();
    }
  }
  return ids;
}

std::string_view to_string(RopeScheme scheme) { return scheme == RopeScheme::chunked ? "chunked" : "interleaved"; }

RopeScheme parse_rope_scheme(std::string_view name) {
  if (name == "chunked") return RopeScheme::chunked;
  if (name == "interleaved") return RopeScheme::interleaved;
  throw ConfigError("unknown rope scheme '" + std::string(name) + "' (expected chunked or interleaved)");
}

ChunkSplit equal_thirds(std::size_t pairs) {
  const std::size_t q = pairs / 3, r = pairs % 3;
  return {q + (r > 0 ? 1 : 0), q + (r > 1 ? 1 : 0), q};
}

FrequencyAllocation build_frequency_allocation(std::size_t head_dim, double base, RopeScheme scheme,
                                               std::optional<ChunkSplit> chunk_split) {
  if (head_dim < 2 || head_dim % 2 != 0) {
    throw ConfigError("head_dim must be even and >= 2, got " + std::to_string(head_dim));
  }
  if (!(base > 1.0) || !std::isfinite(base)) throw ConfigError("rotary base must be a finite value > 1");
  const std::size_t pairs = head_dim / 2;

  FrequencyAllocation alloc;
  alloc.head_dim = head_dim;
  alloc.base = base;
  alloc.scheme = scheme;
  alloc.axis_of_pair.reserve(pairs);
  alloc.theta.reserve(pairs);

  if (scheme == RopeScheme::chunked) {
    if (!chunk_split) throw ConfigError("chunked allocation requires a chunk split");
    if (chunk_split->total() != pairs) {
      throw ConfigError("chunk split sums to " + std::to_string(chunk_split->total()) + ", expected " +
                        std::to_string(pairs));
    }
    alloc.chunk_split = chunk_split;
    alloc.axis_of_pair.insert(alloc.axis_of_pair.end(), chunk_split->t, Axis::t);
    alloc.axis_of_pair.insert(alloc.axis_of_pair.end(), chunk_split->h, Axis::h);
    alloc.axis_of_pair.insert(alloc.axis_of_pair.end(), chunk_split->w, Axis::w);
  } else {
    if (chunk_split) throw ConfigError("interleaved allocation takes no chunk split");
    for (std::size_t i = 0; i < pairs; ++i) alloc.axis_of_pair.push_back(static_cast<Axis>(i % 3));
  }
  for (std::size_t i = 0; i < pairs; ++i) {
    alloc.theta.push_back(std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim)));
  }
  return alloc;
}

FrequencyAllocation chunked_allocation(std::size_t head_dim, double base) {
  return build_frequency_allocation(head_dim, base, RopeScheme::chunked, equal_thirds(head_dim / 2));
}

FrequencyAllocation interleaved_allocation(std::size_t head_dim, double base) {
  return build_frequency_allocation(head_dim, base, RopeScheme::interleaved);
}

std::string FrequencyAllocation::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["head_dim"] = head_dim;
  j["base"] = base;
  j["scheme"] = std::string(to_string(scheme));
  if (chunk_split) {
    j["chunk_split"] = {chunk_split->t, chunk_split->h, chunk_split->w};
  } else {
    j["chunk_split"] = nullptr;
  }
  return j.dump();
}

FrequencyAllocation FrequencyAllocation::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed allocation config: ") + e.what());
  }
  try {
    const RopeScheme scheme = parse_rope_scheme(j.at("scheme").get<std::string>());
    const std::size_t head_dim = j.at("head_dim").get<std::size_t>();
    const double base = j.value("base", 10000.0);
    std::optional<ChunkSplit> split;
    if (j.contains("chunk_split") && !j["chunk_split"].is_null()) {
      const auto v = j["chunk_split"].get<std::vector<std::size_t>>();
      if (v.size() != 3) throw ConfigError("chunk_split must list three counts");
      split = ChunkSplit{v[0], v[1], v[2]};
    } else if (scheme == RopeScheme::chunked) {
      split = equal_thirds(head_dim / 2);
    }
    return build_frequency_allocation(head_dim, base, scheme, split);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid allocation config: ") + e.what());
  }
}

RotaryTable rotary_table(const std::vector<PositionId>& ids, const FrequencyAllocation& alloc) {
  const std::size_t n = ids.size(), pairs = alloc.pairs();
  std::vector<double> c(n * pairs), s(n * pairs);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < pairs; ++i) {
      const double angle = static_cast<double>(component(ids[r], alloc.axis_of_pair[i])) * alloc.theta[i];
      c[r * pairs + i] = std::cos(angle);
      s[r * pairs + i] = std::sin(angle);
    }
  }
  return {Tensor({n, pairs}, std::move(c)), Tensor({n, pairs}, std::move(s))};
}

namespace {

void check_rope_shapes(const Tensor& x, const std::vector<PositionId>& ids, const FrequencyAllocation& alloc) {
  if (x.rank() != 2 || x.dim(1) != alloc.head_dim) {
    throw ShapeError("apply_mrope: expected [seq x " + std::to_string(alloc.head_dim) + "], got " +
                     shape_string(x.shape()));
  }
  if (x.dim(0) != ids.size()) {
    throw ShapeError("apply_mrope: " + std::to_string(ids.size()) + " position ids for " + std::to_string(x.dim(0)) +
                     " tokens");
  }
}

}  // namespace

Tensor apply_mrope(const Tensor& x, const std::vector<PositionId>& ids, const FrequencyAllocation& alloc) {
  check_rope_shapes(x, ids, alloc);
  const RotaryTable table = rotary_table(ids, alloc);
  return rotate_pairs(x, table.cos, table.sin);
}

Var apply_mrope(Tape& tape, Var x, const std::vector<PositionId>& ids, const FrequencyAllocation& alloc) {
  check_rope_shapes(tape.value(x), ids, alloc);
  const RotaryTable table = rotary_table(ids, alloc);
  return rotate_pairs(tape, x, table.cos, table.sin);
}

std::array<AxisSpectrum, 3> spectrum_report(const FrequencyAllocation& alloc) {
  std::array<AxisSpectrum, 3> report{};
  std::array<bool, 3> seen{};
  std::array<std::size_t, 3> last{};
  for (std::size_t i = 0; i < alloc.axis_of_pair.size(); ++i) {
    const auto a = static_cast<std::size_t>(alloc.axis_of_pair[i]);
    AxisSpectrum& s = report[a];
    if (!seen[a]) {
      seen[a] = true;
      s.min_index = i;
    } else {
      s.max_gap = std::max(s.max_gap, i - last[a]);
    }
    s.max_index = i;
    last[a] = i;
    ++s.count;
  }
  return report;
}

std::size_t band_width(std::size_t pairs) { return std::max<std::size_t>(3, (pairs + 2) / 3); }

bool spans_frequency_bands(const AxisSpectrum& s, std::size_t pairs) {
  if (s.count == 0) return false;
  const std::size_t band = std::min(band_width(pairs), pairs);
  return s.min_index < band && s.max_index >= pairs - band;
}

}  // namespace vlmech
