#include "vlmech/report.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "vlmech/errors.hpp"

namespace vlmech {

namespace {

constexpr const char* kProbeNote =
    "desk-scale substitute: attention-score retrieval over MRoPE-rotated frame-group keys, not a trained model";

std::string shortest(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw ValidationError("cannot format number");
  return std::string(buf.data(), end);
}

void check_rectangular(const NiahGrid& grid) {
  if (grid.cells.empty()) throw ValidationError("NIAH report grid is empty");
  const auto& c = grid.config;
  if (grid.cells.size() != c.durations_min.size() * c.depths.size()) {
    throw ValidationError("NIAH grid has " + std::to_string(grid.cells.size()) + " cells, expected " +
                          std::to_string(c.durations_min.size()) + " x " + std::to_string(c.depths.size()));
  }
  for (std::size_t k = 0; k < grid.cells.size(); ++k) {
    const auto& cell = grid.cells[k];
    if (cell.duration_min != c.durations_min[k / c.depths.size()] || cell.depth != c.depths[k % c.depths.size()]) {
      throw ValidationError("NIAH grid cell " + std::to_string(k) + " is out of duration-major order");
    }
  }
}

}  // namespace

std::string niah_csv(const NiahGrid& grid) {
  check_rectangular(grid);
  std::string out = "duration,depth,accuracy\n";
  for (const auto& cell : grid.cells)
    out += shortest(cell.duration_min) + "," + shortest(cell.depth) + "," + shortest(cell.accuracy) + "\n";
  return out;
}

std::string niah_json(const NiahGrid& grid) {
  check_rectangular(grid);
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["probe"] = kProbeNote;
  j["metadata"] = {{"tool", "vlmech"}, {"version", "0.1.0"}, {"git_commit", "unknown"}, {"git_dirty", false}};
  j["config"] = nlohmann::ordered_json::parse(grid.config.to_json());
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& cell : grid.cells) {
    nlohmann::ordered_json c;
    c["duration_min"] = cell.duration_min;
    c["depth"] = cell.depth;
    c["groups"] = cell.groups;
    c["accuracy"] = cell.accuracy;
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const auto& t : cell.trials) {
      trials.push_back(
          {{"needle", t.needle}, {"predicted", t.predicted}, {"margin", t.margin}, {"correct", t.correct}});
    }
    c["trials"] = std::move(trials);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

NiahGrid parse_niah_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  NiahGrid grid;
  try {
    if (j.at("schema_version").get<int>() != 1) throw ParseError("unsupported report schema_version");
    try {
      grid.config = NiahConfig::from_json(j.at("config").dump());
    } catch (const ConfigError& e) {
      throw ParseError(std::string("report config: ") + e.what());
    }
    const auto& cells = j.at("cells");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& c = cells[k];
      NiahCell cell;
      cell.duration_min = c.at("duration_min").get<double>();
      cell.depth = c.at("depth").get<double>();
      cell.groups = c.at("groups").get<std::size_t>();
      cell.accuracy = c.at("accuracy").get<double>();
      for (const auto& t : c.at("trials")) {
        cell.trials.push_back({t.at("needle").get<std::size_t>(), t.at("predicted").get<std::size_t>(),
                               t.at("margin").get<double>(), t.at("correct").get<bool>()});
      }
      grid.cells.push_back(std::move(cell));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid report: ") + e.what());
  }
  try {
    check_rectangular(grid);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  return grid;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void emit_report(const NiahGrid& grid, const std::filesystem::path& json_path, const std::filesystem::path& csv_path) {
  // Render both before touching the filesystem so a bad grid writes nothing.
  const std::string json = niah_json(grid);
  const std::string csv = niah_csv(grid);
  write_text_file(json_path, json);
  write_text_file(csv_path, csv);
}

}  // namespace vlmech
