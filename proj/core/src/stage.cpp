#include "vlmech/stage.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "vlmech/errors.hpp"

namespace vlmech {

namespace {

using vision::ParamGroup;

struct PresetRow {
  const char* name;
  std::size_t sequence_length;
  std::uint64_t token_budget;
  std::set<ParamGroup> trainable;
};

// Toy contexts are the full-scale ones divided by this factor.
constexpr std::size_t kToyLengthDivisor = 256;

const std::vector<PresetRow>& preset_rows() {
  static const std::vector<PresetRow> rows = {
      {"S0", 8192, 67'000'000'000ULL, {ParamGroup::merger}},
      {"S1", 8192, 1'000'000'000'000ULL, {ParamGroup::encoder, ParamGroup::merger, ParamGroup::decoder}},
      {"S2", 32768, 1'000'000'000'000ULL, {ParamGroup::encoder, ParamGroup::merger, ParamGroup::decoder}},
      {"S3", 262144, 100'000'000'000ULL, {ParamGroup::encoder, ParamGroup::merger, ParamGroup::decoder}},
  };
  return rows;
}

std::string valid_names() {
  std::string out;
  for (const auto& n : stage_names()) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::uint64_t scaled_budget(std::uint64_t full_scale, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("budget_scale must be positive");
  const double scaled = std::round(static_cast<double>(full_scale) * scale);
  return scaled < 1.0 ? 1 : static_cast<std::uint64_t>(scaled);
}

}  // namespace

std::vector<std::string> stage_names() {
  std::vector<std::string> names;
  for (const auto& r : preset_rows()) names.emplace_back(r.name);
  return names;
}

void StageConfig::validate() const {
  if (name.empty()) throw ConfigError("stage name is empty");
  if (sequence_length == 0 || toy_sequence_length == 0) throw ConfigError("stage sequence lengths must be positive");
  if (token_budget == 0) throw ConfigError("stage token budget must be positive");
  if (trainable.empty()) throw ConfigError("stage " + name + " trains nothing");
  if (name == "S0" && trainable != std::set<ParamGroup>{ParamGroup::merger}) {
    throw ConfigError("S0 trains the merger only");
  }
}

std::string StageConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["stage"] = name;
  j["sequence_length"] = sequence_length;
  j["toy_sequence_length"] = toy_sequence_length;
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (ParamGroup g : trainable) groups.push_back(std::string(vision::to_string(g)));
  j["trainable"] = groups;
  j["full_scale_token_budget"] = full_scale_token_budget;
  j["budget_scale"] = budget_scale;
  j["token_budget"] = token_budget;
  return j.dump(2);
}

StageConfig stage_preset(std::string_view name, double budget_scale) {
  for (const auto& r : preset_rows()) {
    if (name != r.name) continue;
    StageConfig s;
    s.name = r.name;
    s.sequence_length = r.sequence_length;
    s.trainable = r.trainable;
    s.full_scale_token_budget = r.token_budget;
    s.budget_scale = budget_scale;
    s.token_budget = scaled_budget(r.token_budget, budget_scale);
    s.toy_sequence_length = r.sequence_length / kToyLengthDivisor;
    return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "' (valid: " + valid_names() + ")");
}

StageConfig parse_stage_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed stage config: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ConfigError("stage config must be a JSON object");
    if (j.value("schema_version", 1) != 1) throw ConfigError("unsupported stage config schema_version");
    if (!j.contains("stage")) throw ConfigError("stage config needs a \"stage\" name (valid: " + valid_names() + ")");
    const double scale = j.value("budget_scale", 1e-7);
    StageConfig s = stage_preset(j["stage"].get<std::string>(), scale);
    if (j.contains("toy_sequence_length")) s.toy_sequence_length = j["toy_sequence_length"].get<std::size_t>();
    if (j.contains("trainable")) {
      s.trainable.clear();
      for (const auto& g : j["trainable"]) s.trainable.insert(vision::parse_param_group(g.get<std::string>()));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid stage config: ") + e.what());
  }
}

StageConfig load_stage_config(std::string_view name_or_path) {
  for (const auto& n : stage_names())
    if (name_or_path == n) return stage_preset(n);
  std::ifstream in{std::string(name_or_path)};
  if (!in) {
    throw ConfigError("unknown stage '" + std::string(name_or_path) + "' (valid: " + valid_names() +
                      ", or a path to a stage JSON file)");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_stage_config(text.str());
}

void validate_schedule(std::span<const StageConfig> stages) {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].validate();
    if (i == 0) continue;
    if (stages[i].sequence_length < stages[i - 1].sequence_length ||
        stages[i].toy_sequence_length < stages[i - 1].toy_sequence_length) {
      throw ConfigError("sequence length shrinks from " + stages[i - 1].name + " to " + stages[i].name);
    }
  }
}

}  // namespace vlmech
