#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "vlmech/errors.hpp"
#include "vlmech/niah.hpp"
#include "vlmech/report.hpp"
#include "vlmech/stage.hpp"
#include "vlmech/train.hpp"

using namespace vlmech;
using vision::ParamGroup;

namespace {

constexpr ParamGroup kGroups[] = {ParamGroup::encoder, ParamGroup::merger, ParamGroup::decoder};

/// True when every tensor of `group` is bit-identical between a and b.
bool group_identical(const vision::ModelParams& a, const vision::ModelParams& b, ParamGroup group) {
  std::vector<const Tensor*> before;
  a.visit([&](const std::string&, ParamGroup g, const Tensor& t) {
    if (g == group) before.push_back(&t);
  });
  bool same = true;
  std::size_t k = 0;
  b.visit([&](const std::string&, ParamGroup g, const Tensor& t) {
    if (g == group) same = same && bit_identical(*before[k++], t);
  });
  return same;
}

struct ToySetup {
  vision::ModelConfig cfg;
  vision::ModelParams init;
  std::vector<TrainExample> batch;
};

ToySetup toy_setup(std::uint64_t seed = 0) {
  ToySetup s;
  s.init = vision::init_params(s.cfg, seed);
  s.batch = synthetic_batch(s.cfg, 8, 16, seed + 1);
  return s;
}

FrequencyAllocation probe_allocation(const NiahConfig& c) {
  return build_frequency_allocation(c.head_dim, c.rope_base, c.scheme);
}

NiahConfig small_grid_config() {
  NiahConfig c;
  c.durations_min = {1.0, 2.0, 4.0};
  c.depths = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  c.trials = 2;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vlmech_test_" + name);
}

}  // namespace

// ---- stages -----------------------------------------------------------------------

TEST(StagePreset, SequenceLengthsAndTrainableGroups) {
  const std::pair<const char*, std::size_t> rows[] = {{"S0", 8192}, {"S1", 8192}, {"S2", 32768}, {"S3", 262144}};
  for (const auto& [name, len] : rows) {
    const auto s = stage_preset(name);
    EXPECT_EQ(s.sequence_length, len) << name;
    EXPECT_EQ(s.toy_sequence_length, len / 256) << name;
    EXPECT_NO_THROW(s.validate());
  }
  EXPECT_EQ(stage_preset("S0").trainable, std::set<ParamGroup>{ParamGroup::merger});
  for (const char* name : {"S1", "S2", "S3"})
    EXPECT_EQ(stage_preset(name).trainable, (std::set<ParamGroup>{kGroups[0], kGroups[1], kGroups[2]}));
}

TEST(StagePreset, UnknownNameListsValidOnes) {
  try {
    stage_preset("S9");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : stage_names()) EXPECT_NE(msg.find(n), std::string::npos) << msg;
  }
}

TEST(StagePreset, TokenBudgetsScale) {
  const auto s = stage_preset("S1", 1e-9);
  EXPECT_EQ(s.full_scale_token_budget, 1000000000000ull);
  EXPECT_EQ(s.token_budget, 1000u);
}

TEST(StageConfig, ParseOverrides) {
  const auto s = parse_stage_config(R"({"schema_version":1,"stage":"S2","toy_sequence_length":64,"trainable":["decoder"]})");
  EXPECT_EQ(s.name, "S2");
  EXPECT_EQ(s.toy_sequence_length, 64u);
  EXPECT_EQ(s.trainable, std::set<ParamGroup>{ParamGroup::decoder});
  EXPECT_THROW(parse_stage_config(R"({"stage":"S0","trainable":["decoder"]})"), ConfigError);
  EXPECT_THROW(parse_stage_config(R"({"stage":"S1","trainable":["vision"]})"), ConfigError);
  EXPECT_THROW(parse_stage_config("{"), ConfigError);
}

TEST(StageSchedule, LengthsNeverShrink) {
  std::vector<StageConfig> all;
  for (const auto& n : stage_names()) all.push_back(stage_preset(n));
  EXPECT_NO_THROW(validate_schedule(all));
  std::swap(all[2], all[3]);
  EXPECT_THROW(validate_schedule(all), ConfigError);
}

// ---- toy training -----------------------------------------------------------------

TEST(TrainToy, StageZeroFreezesEncoderAndDecoder) {
  auto s = toy_setup();
  TrainOptions opts;
  opts.steps = 50;
  const auto r = train_toy(s.init, s.cfg, stage_preset("S0"), s.batch, opts);
  EXPECT_TRUE(group_identical(s.init, r.params, ParamGroup::encoder));
  EXPECT_TRUE(group_identical(s.init, r.params, ParamGroup::decoder));
  EXPECT_FALSE(group_identical(s.init, r.params, ParamGroup::merger));
}

TEST(TrainToy, EveryStageWritesExactlyItsTrainableGroups) {
  auto s = toy_setup(3);
  TrainOptions opts;
  opts.steps = 3;
  for (const auto& name : stage_names()) {
    const auto stage = stage_preset(name);
    const auto r = train_toy(s.init, s.cfg, stage, s.batch, opts);
    for (ParamGroup g : kGroups)
      EXPECT_EQ(group_identical(s.init, r.params, g), !stage.is_trainable(g)) << name << " " << vision::to_string(g);
  }
}

TEST(TrainToy, ZeroLearningRateChangesNothing) {
  auto s = toy_setup();
  TrainOptions opts;
  opts.steps = 5;
  opts.lr = 0.0;
  const auto r = train_toy(s.init, s.cfg, stage_preset("S1"), s.batch, opts);
  for (ParamGroup g : kGroups) EXPECT_TRUE(group_identical(s.init, r.params, g));
  for (double l : r.losses) EXPECT_EQ(l, r.losses.front());
}

TEST(TrainToy, BadLearningRateIsConfigError) {
  auto s = toy_setup();
  TrainOptions opts;
  opts.steps = 1;
  for (double lr : {-0.1, std::nan(""), static_cast<double>(INFINITY)}) {
    opts.lr = lr;
    EXPECT_THROW(train_toy(s.init, s.cfg, stage_preset("S1"), s.batch, opts), ConfigError);
  }
}

TEST(TrainToy, LossDecreasesOverTwoHundredSteps) {
  auto s = toy_setup();
  const auto r = train_toy(s.init, s.cfg, stage_preset("S0"), s.batch, TrainOptions{});
  ASSERT_EQ(r.losses.size(), 201u);
  EXPECT_LT(r.losses.back(), r.losses.front());
  for (double l : r.losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(TrainToy, FullStageLearnsMuchFaster) {
  auto s = toy_setup();
  TrainOptions opts;
  opts.steps = 100;
  const auto r = train_toy(s.init, s.cfg, stage_preset("S1"), s.batch, opts);
  EXPECT_LT(r.losses.back(), 0.5 * r.losses.front());
}

TEST(TrainToy, Deterministic) {
  auto s = toy_setup(5);
  TrainOptions opts;
  opts.steps = 10;
  const auto a = train_toy(s.init, s.cfg, stage_preset("S1"), s.batch, opts);
  const auto b = train_toy(s.init, s.cfg, stage_preset("S1"), s.batch, opts);
  EXPECT_EQ(a.losses, b.losses);
  for (ParamGroup g : kGroups) EXPECT_TRUE(group_identical(a.params, b.params, g));
}

TEST(TrainToy, OverLengthExampleIsValidationError) {
  vision::ModelConfig cfg;
  const auto init = vision::init_params(cfg, 0);
  const auto batch = synthetic_batch(cfg, 4, 48, 1);
  auto stage = stage_preset("S1");
  stage.toy_sequence_length = 8;
  std::size_t longest = 0;
  for (const auto& ex : batch) longest = std::max(longest, ex.targets.size());
  ASSERT_GT(longest, 8u);
  EXPECT_THROW(train_toy(init, cfg, stage, batch, TrainOptions{}), ValidationError);
}

TEST(SyntheticBatch, RespectsMaxTokensAndSupervises) {
  vision::ModelConfig cfg;
  const auto batch = synthetic_batch(cfg, 32, 12, 9);
  for (const auto& ex : batch) {
    EXPECT_LE(ex.targets.size(), 12u);
    EXPECT_EQ(ex.targets.size(), ex.seq.token_count());
    EXPECT_TRUE(std::any_of(ex.targets.begin(), ex.targets.end(), [](std::size_t t) { return t != TrainExample::kNoTarget; }));
  }
  EXPECT_THROW(synthetic_batch(cfg, 1, 3, 0), ConfigError);
}

// ---- probe ------------------------------------------------------------------------

TEST(NeedleIndex, Examples) {
  EXPECT_EQ(needle_index(64, 0.5), 32u);
  EXPECT_EQ(needle_index(1, 0.5), 0u);
  EXPECT_EQ(needle_index(10, 0.999), 9u);
  EXPECT_EQ(needle_index(10, 0.001), 0u);
}

TEST(NiahBuild, RejectsDepthsOutsideOpenInterval) {
  NiahConfig c;
  for (double d : {0.0, 1.0, -0.1, 1.5}) EXPECT_THROW(build_niah_sequence_groups(c, 8, d, 0), ValidationError);
}

TEST(NiahBuild, StructureMatchesGroups) {
  NiahConfig c;
  const auto s = build_niah_sequence(c, 2.0, 0.5, 7);  // 120 frames at 1 fps -> 60 groups
  EXPECT_EQ(s.groups, 60u);
  EXPECT_EQ(s.needle_group, needle_index(60, 0.5));
  EXPECT_EQ(s.keys.dim(0), 60u);
  EXPECT_EQ(s.group_token.size(), 60u);
  EXPECT_EQ(s.query_token, s.seq.token_count() - 1);
  for (std::size_t g = 1; g < s.groups; ++g) EXPECT_GT(s.group_token[g], s.group_token[g - 1]);
}

TEST(NiahProbe, OrthogonalNeedleIsFoundUpToFourThousandGroups) {
  NiahConfig c;
  const auto alloc = probe_allocation(c);
  for (std::size_t groups : {2u, 16u, 256u, 4096u}) {
    for (double depth : {0.1, 0.5, 0.9}) {
      const auto s = build_niah_sequence_groups(c, groups, depth, groups);
      const auto p = run_niah_probe(s, s.query, alloc);
      EXPECT_EQ(p.predicted, s.needle_group) << groups << " groups, depth " << depth;
      EXPECT_GT(p.margin, 0.0);
    }
  }
}

TEST(NiahProbe, IdenticalGroupsGiveNoMargin) {
  NiahConfig c;
  c.noise = 0.0;
  c.overlap = 1.0;  // every key equals the hay signature
  const auto hay = build_niah_sequence_groups(c, 64, 0.5, 1);
  c.overlap = 0.0;  // query on the needle-private pairs, disjoint from the hay
  const auto own = build_niah_sequence_groups(c, 64, 0.5, 1);
  const auto p = run_niah_probe(hay, own.query, probe_allocation(c));
  EXPECT_LT(std::abs(p.margin), 1e-9);
  EXPECT_EQ(p.predicted, 0u);  // ties go to the lowest index
}

TEST(NiahProbe, SingleGroupPredictsIt) {
  NiahConfig c;
  const auto s = build_niah_sequence_groups(c, 1, 0.5, 2);
  const auto p = run_niah_probe(s, s.query, probe_allocation(c));
  EXPECT_EQ(p.predicted, 0u);
  EXPECT_EQ(p.margin, 0.0);
}

TEST(NiahProbe, AccuracyDegradesGracefullyWithOverlap) {
  NiahConfig c;
  c.durations_min = {8.0};
  c.depths = {0.1, 0.3, 0.5, 0.7, 0.9};
  c.trials = 8;
  double previous = 1.0;
  for (double overlap : {0.0, 0.5, 0.9, 0.97, 0.99}) {
    c.overlap = overlap;
    const auto g = run_niah_grid(c, 0);
    double acc = 0;
    for (const auto& cell : g.cells) acc += cell.accuracy;
    acc /= static_cast<double>(g.cells.size());
    EXPECT_LE(acc, previous + 1e-12) << "overlap " << overlap;
    EXPECT_GE(acc, 1.0 / static_cast<double>(g.cells[0].groups)) << "overlap " << overlap;
    if (overlap <= 0.5) {
      EXPECT_EQ(acc, 1.0);
    }
    previous = acc;
  }
}

TEST(NiahConfig, ValidationAndJson) {
  NiahConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(NiahConfig::from_json(c.to_json()).to_json(), c.to_json());
  c.depths = {0.5, 0.25};
  EXPECT_THROW(c.validate(), ConfigError);
  c = NiahConfig{};
  c.depths = {0.0, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = NiahConfig{};
  c.trials = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = NiahConfig{};
  c.overlap = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(NiahConfig::from_json("[1,2]"), ConfigError);
}

TEST(NiahGrid, DefaultGridIsPerfectAtOverlapZero) {
  NiahConfig c;
  c.trials = 1;
  const auto g = run_niah_grid(c, 0);
  ASSERT_EQ(g.cells.size(), 36u);
  for (const auto& cell : g.cells) EXPECT_EQ(cell.accuracy, 1.0) << cell.duration_min << " " << cell.depth;
}

TEST(NiahGrid, ThreadCountDoesNotChangeResults) {
  const auto c = small_grid_config();
  const auto a = run_niah_grid(c, 1), b = run_niah_grid(c, 4);
  EXPECT_EQ(a.cells, b.cells);
}

// ---- report -----------------------------------------------------------------------

TEST(Report, SingleCellCsv) {
  NiahConfig c;
  c.durations_min = {1.0};
  c.depths = {0.5};
  c.trials = 1;
  const auto csv = niah_csv(run_niah_grid(c));
  EXPECT_EQ(csv, "duration,depth,accuracy\n1,0.5,1\n");
}

TEST(Report, CsvHasOneRowPerCell) {
  const auto csv = niah_csv(run_niah_grid(small_grid_config()));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 28);
  EXPECT_EQ(csv.rfind("duration,depth,accuracy\n", 0), 0u);
}

TEST(Report, EmptyGridIsValidationError) {
  NiahGrid g;
  EXPECT_THROW(niah_csv(g), ValidationError);
  EXPECT_THROW(niah_json(g), ValidationError);
}

TEST(Report, JsonRoundTrip) {
  const auto g = run_niah_grid(small_grid_config());
  const auto text = niah_json(g);
  const auto back = parse_niah_json(text);
  EXPECT_EQ(back.cells, g.cells);
  EXPECT_EQ(niah_json(back), text);
  EXPECT_THROW(parse_niah_json("{}"), ParseError);
  EXPECT_THROW(parse_niah_json("not json"), ParseError);
}

TEST(Report, ByteDeterministicAcrossRunsAndThreads) {
  const auto c = small_grid_config();
  const auto a = run_niah_grid(c, 1), b = run_niah_grid(c, 4);
  EXPECT_EQ(niah_json(a), niah_json(b));
  EXPECT_EQ(niah_csv(a), niah_csv(b));
  const auto j1 = temp_path("a.json"), c1 = temp_path("a.csv");
  const auto j2 = temp_path("b.json"), c2 = temp_path("b.csv");
  emit_report(a, j1, c1);
  emit_report(run_niah_grid(c, 1), j2, c2);
  EXPECT_EQ(read_text_file(j1), read_text_file(j2));
  EXPECT_EQ(read_text_file(c1), read_text_file(c2));
  for (const auto& p : {j1, c1, j2, c2}) std::filesystem::remove(p);
}

TEST(Report, UnwritablePathIsIoError) {
  NiahConfig c;
  c.durations_min = {1.0};
  c.depths = {0.5};
  c.trials = 1;
  const auto g = run_niah_grid(c);
  EXPECT_THROW(emit_report(g, "/nonexistent_dir/x.json", temp_path("x.csv")), IoError);
  EXPECT_THROW(read_text_file("/nonexistent_dir/x.json"), IoError);
}
