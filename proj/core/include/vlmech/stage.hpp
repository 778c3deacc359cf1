#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlmech/vision_stack.hpp"

namespace vlmech {

/// One row of the four-stage pretraining schedule.
///
/// `sequence_length` and `full_scale_token_budget` document the full-scale
/// schedule; `toy_sequence_length` and `token_budget` are what the toy
/// trainer actually uses. The schedule (which groups train, and that lengths
/// never shrink) is the testable content, not the scale.
struct StageConfig {
  std::string name;
  std::size_t sequence_length = 0;
  std::set<vision::ParamGroup> trainable;
  std::uint64_t full_scale_token_budget = 0;
  double budget_scale = 1e-7;
  std::uint64_t token_budget = 0;
  std::size_t toy_sequence_length = 0;

  bool is_trainable(vision::ParamGroup group) const { return trainable.count(group) != 0; }

  /// Throws ConfigError on empty/zero fields, or if S0 trains anything
  /// other than exactly the merger.
  void validate() const;
  std::string to_json() const;
};

/// "S0", "S1", "S2", "S3".
std::vector<std::string> stage_names();

/// The built-in row for `name` with token budgets scaled by `budget_scale`.
/// Throws ConfigError listing the valid names for anything else.
StageConfig stage_preset(std::string_view name, double budget_scale = 1e-7);

/// Loads a stage by preset name, or from a JSON file of the form
///   {"schema_version":1, "stage":"S1", "budget_scale":1e-7,
///    "toy_sequence_length":64, "trainable":["merger","decoder"]}
/// where every key but "stage" is an optional override of the preset.
StageConfig load_stage_config(std::string_view name_or_path);
StageConfig parse_stage_config(std::string_view json_text);

/// Throws ConfigError unless sequence lengths (full-scale and toy) are
/// non-decreasing along the schedule.
void validate_schedule(std::span<const StageConfig> stages);

}  // namespace vlmech
