// vlmech: command-line harness for the toy VLM mechanisms.
//
// Exit codes: 0 success, 2 configuration error, 3 validation failure.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "vlmech/errors.hpp"
#include "vlmech/grounding.hpp"
#include "vlmech/mrope.hpp"
#include "vlmech/niah.hpp"
#include "vlmech/report.hpp"
#include "vlmech/rng.hpp"
#include "vlmech/stage.hpp"
#include "vlmech/timeline.hpp"
#include "vlmech/train.hpp"
#include "vlmech/vision_stack.hpp"

namespace {

using namespace vlmech;
using json = nlohmann::ordered_json;

constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "RNG seed (overrides the config)");
}

std::string config_text(const Common& c) {
  if (c.config.empty()) return "{}";
  try {
    return read_text_file(c.config);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

json parse_object(const std::string& text, const char* what) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
    if (j.value("schema_version", 1) != 1) throw ConfigError(std::string("unsupported ") + what + " schema_version");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed ") + what + " config: " + e.what());
  }
}

// ---- niah -------------------------------------------------------------------

struct NiahArgs {
  Common common;
  std::string out_json = "niah_report.json";
  std::string out_csv = "niah_report.csv";
  unsigned threads = 0;
};

int run_niah(const NiahArgs& a) {
  NiahConfig cfg = NiahConfig::from_json(config_text(a.common));
  if (a.common.seed) cfg.seed = *a.common.seed;
  const NiahGrid grid = run_niah_grid(cfg, a.threads);
  emit_report(grid, a.out_json, a.out_csv);
  std::cout << "probe: attention-score retrieval over MRoPE-rotated keys (desk-scale substitute, not a trained "
               "model)\n";
  std::cout << "duration_min  groups  depth  accuracy\n";
  for (const auto& c : grid.cells) {
    std::printf("%12g  %6zu  %5.2f  %8.3f\n", c.duration_min, c.groups, c.depth, c.accuracy);
  }
  std::cout << "wrote " << a.out_json << " and " << a.out_csv << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string stage;
};

int run_train(const TrainArgs& a) {
  const json j = parse_object(config_text(a.common), "train");
  StageConfig stage;
  if (!a.stage.empty()) {
    stage = load_stage_config(a.stage);
  } else if (j.contains("stage") && j["stage"].is_object()) {
    stage = parse_stage_config(j["stage"].dump());
  } else {
    stage = load_stage_config(j.value("stage", std::string("S0")));
  }
  vision::ModelConfig model;
  if (j.contains("model")) model = vision::ModelConfig::from_json(j["model"].dump());
  TrainOptions opts;
  std::size_t examples = 8;
  std::size_t max_tokens = 16;
  std::uint64_t seed = 0;
  try {
    opts.steps = j.value("steps", opts.steps);
    opts.lr = j.value("lr", opts.lr);
    opts.scheme = objective::parse_scheme(j.value("scheme", std::string("sqrt")));
    examples = j.value("examples", examples);
    max_tokens = j.value("max_tokens", std::min<std::size_t>(max_tokens, stage.toy_sequence_length));
    seed = j.value("seed", seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  if (a.common.seed) seed = *a.common.seed;

  const auto init = vision::init_params(model, seed);
  const auto batch = synthetic_batch(model, examples, max_tokens, Rng(seed).split(1).seed());
  const TrainResult r = train_toy(init, model, stage, batch, opts);

  json frozen = json::object();
  for (auto group : {vision::ParamGroup::encoder, vision::ParamGroup::merger, vision::ParamGroup::decoder}) {
    if (stage.is_trainable(group)) continue;
    bool same = true;
    std::vector<const Tensor*> before;
    init.visit([&](const std::string&, vision::ParamGroup g, const Tensor& t) {
      if (g == group) before.push_back(&t);
    });
    std::size_t k = 0;
    r.params.visit([&](const std::string&, vision::ParamGroup g, const Tensor& t) {
      if (g == group) same = same && bit_identical(*before[k++], t);
    });
    frozen[std::string(vision::to_string(group))] = same ? "bit-identical" : "CHANGED";
  }
  json out;
  out["schema_version"] = 1;
  out["stage"] = json::parse(stage.to_json());
  out["steps"] = opts.steps;
  out["lr"] = opts.lr;
  out["scheme"] = std::string(objective::to_string(opts.scheme));
  out["seed"] = seed;
  out["initial_loss"] = r.losses.front();
  out["final_loss"] = r.losses.back();
  out["losses"] = r.losses;
  out["frozen_groups"] = frozen;
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---- spectrum ---------------------------------------------------------------

struct SpectrumArgs {
  Common common;
  std::optional<std::size_t> head_dim;
  std::optional<std::string> scheme;
};

int run_spectrum(const SpectrumArgs& a) {
  json j = parse_object(config_text(a.common), "spectrum");
  if (a.head_dim) j["head_dim"] = *a.head_dim;
  if (a.scheme) j["scheme"] = *a.scheme;
  if (!j.contains("head_dim")) j["head_dim"] = 128;
  if (!j.contains("scheme")) j["scheme"] = "interleaved";
  const FrequencyAllocation alloc = FrequencyAllocation::from_json(j.dump());
  const auto report = spectrum_report(alloc);
  std::cout << "scheme " << to_string(alloc.scheme) << ", head_dim " << alloc.head_dim << ", " << alloc.pairs()
            << " pairs, band width " << band_width(alloc.pairs()) << "\n";
  std::cout << "axis  count  min  max  max_gap  spans_bands\n";
  bool all_span = true;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = report[k];
    const bool spans = spans_frequency_bands(s, alloc.pairs());
    all_span = all_span && spans;
    std::printf("%-4s  %5zu  %3zu  %3zu  %7zu  %s\n", std::string(to_string(static_cast<Axis>(k))).c_str(), s.count,
                s.min_index, s.max_index, s.max_gap, spans ? "yes" : "no");
  }
  std::cout << (all_span ? "balanced: every axis spans low and high frequencies\n"
                         : "unbalanced: some axis misses a frequency band\n");
  return 0;
}

// ---- sparsity ---------------------------------------------------------------

int run_sparsity(const Common& c) {
  const json j = parse_object(config_text(c), "sparsity");
  SamplingPolicy policy;
  double duration = 7200.0, native_fps = 30.0, granularity = 0.1;
  TimestampStyle style = TimestampStyle::seconds;
  try {
    duration = j.value("duration_s", duration);
    native_fps = j.value("native_fps", native_fps);
    granularity = j.value("granularity", granularity);
    policy.fps = j.value("fps", 1.0);
    policy.max_frames = j.value("max_frames", std::size_t{8192});
    policy.tokens_per_frame = j.value("tokens_per_frame", std::size_t{1});
    policy.token_budget = j.value("token_budget", policy.max_frames * policy.tokens_per_frame);
    policy.group_size = j.value("group_size", policy.group_size);
    if (j.contains("timestamp_style")) style = parse_timestamp_style(j["timestamp_style"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid sparsity config: ") + e.what());
  }
  const auto frames = sample_frames(duration, native_fps, policy);
  const auto seq = interleave_timestamps(frames, policy.group_size, style);
  const auto textual = position_id_range_report(seq, TemporalIdScheme::textual_timestamp);
  const auto absolute = position_id_range_report(seq, TemporalIdScheme::absolute_time, granularity);
  std::printf("%zu frames in %zu groups over %g s\n", frames.size(), textual.distinct_t, duration);
  std::printf("%-18s  %8s  %8s  %8s  %9s\n", "scheme", "min_t", "max_t", "distinct", "sparsity");
  std::printf("%-18s  %8zu  %8zu  %8zu  %9.4f\n", "textual_timestamp", textual.min_t, textual.max_t,
              textual.distinct_t, textual.sparsity);
  std::printf("%-18s  %8zu  %8zu  %8zu  %9.4f  (granularity %g s)\n", "absolute_time", absolute.min_t,
              absolute.max_t, absolute.distinct_t, absolute.sparsity, granularity);
  return 0;
}

// ---- ground -----------------------------------------------------------------

struct GroundArgs {
  Common common;
  std::string input = "-";
  std::optional<std::string> kind;
};

int run_ground(const GroundArgs& a) {
  const json j = parse_object(config_text(a.common), "ground");
  std::string kind_name = j.value("kind", std::string("box2d"));
  if (a.kind) kind_name = *a.kind;
  const grounding::Kind kind = grounding::parse_kind(kind_name);
  std::string text;
  if (a.input == "-") {
    text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  } else {
    text = read_text_file(a.input);
  }
  const auto records = grounding::parse_grounding_json(text, kind);
  std::cout << grounding::serialize_grounding_json(records) << "\n";
  std::cerr << records.size() << " valid " << grounding::to_string(kind) << " record(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlmech: toy vision-language mechanism harness"};
  app.require_subcommand(1);

  NiahArgs niah;
  auto* niah_cmd = app.add_subcommand("niah", "Needle-in-a-haystack retrieval probe over a duration x depth grid");
  add_common(niah_cmd, niah.common);
  niah_cmd->add_option("--out-json", niah.out_json, "JSON report path");
  niah_cmd->add_option("--out-csv", niah.out_csv, "CSV report path");
  niah_cmd->add_option("--threads", niah.threads, "Worker threads (0 = all cores)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Toy training run under a stage's freeze schedule");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--stage", train.stage, "Stage name (S0..S3) or stage JSON path");

  SpectrumArgs spectrum;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "Per-axis rotary frequency allocation report");
  add_common(spectrum_cmd, spectrum.common);
  spectrum_cmd->add_option("--head-dim", spectrum.head_dim, "Rotary head dimension");
  spectrum_cmd->add_option("--scheme", spectrum.scheme, "interleaved or chunked");

  Common sparsity;
  auto* sparsity_cmd = app.add_subcommand("sparsity", "Temporal position-id sparsity: textual vs absolute time");
  add_common(sparsity_cmd, sparsity);

  GroundArgs ground;
  auto* ground_cmd = app.add_subcommand("ground", "Parse, validate and canonicalize grounding JSON");
  add_common(ground_cmd, ground.common);
  ground_cmd->add_option("--input", ground.input, "Grounding JSON file ('-' for stdin)");
  ground_cmd->add_option("--kind", ground.kind, "box2d, point, box3d or count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*niah_cmd) return run_niah(niah);
    if (*train_cmd) return run_train(train);
    if (*spectrum_cmd) return run_spectrum(spectrum);
    if (*sparsity_cmd) return run_sparsity(sparsity);
    if (*ground_cmd) return run_ground(ground);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
