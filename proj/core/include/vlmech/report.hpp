#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vlmech/niah.hpp"

namespace vlmech {

/// "duration,depth,accuracy" header plus one row per cell, duration-major.
/// Numbers use the shortest round-trip decimal form. Throws ValidationError
/// for an empty or non-rectangular grid.
std::string niah_csv(const NiahGrid& grid);

/// {"schema_version":1, "probe":..., "metadata":{...}, "config":{...},
///  "cells":[{"duration_min","depth","groups","accuracy","trials":[...]}]}.
/// The metadata block is a fixed stub (no clock or host data) so identical
/// inputs give identical bytes.
std::string niah_json(const NiahGrid& grid);

/// Inverse of niah_json. Throws ParseError on schema violations.
NiahGrid parse_niah_json(std::string_view text);

/// Writes both files. Throws IoError when a path cannot be written.
void emit_report(const NiahGrid& grid, const std::filesystem::path& json_path, const std::filesystem::path& csv_path);

/// Writes `text` to `path` or throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);
/// Reads `path` or throws IoError.
std::string read_text_file(const std::filesystem::path& path);

}  // namespace vlmech
