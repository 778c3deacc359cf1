#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "vlmech/errors.hpp"
#include "vlmech/rng.hpp"
#include "vlmech/sequence.hpp"
#include "vlmech/timeline.hpp"
#include "vlmech/tokenizer.hpp"

using namespace vlmech;

namespace {

SamplingPolicy ample(double fps) {
  SamplingPolicy p;
  p.fps = fps;
  p.max_frames = 100000;
  p.tokens_per_frame = 1;
  p.token_budget = 100000;
  return p;
}

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s(rng.below(max_len + 1), '\0');
  for (char& c : s) c = static_cast<char>(rng.below(256));
  return s;
}

MultimodalSequence groups_every(double spacing, std::size_t count) {
  MultimodalSequence s;
  for (std::size_t g = 0; g < count; ++g) {
    const double t = spacing * static_cast<double>(g);
    s.push(TextSpan{tokenize(format_timestamp(t, TimestampStyle::seconds))});
    s.push(FrameGroup{t, t + spacing / 2, 1, 1, TimestampStyle::seconds, 2});
  }
  return s;
}

}  // namespace

// ---- sampling -------------------------------------------------------------------

TEST(SampleFrames, TenSecondsAtTwoFps) {
  const auto f = sample_frames(10.0, 30.0, ample(2.0));
  ASSERT_EQ(f.size(), 20u);
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(f[k], 0.5 * static_cast<double>(k));
}

TEST(SampleFrames, HourLongClipHitsTheFrameCap) {
  SamplingPolicy p;  // defaults: fps 2, max_frames 2048, budget allows 2048
  ASSERT_EQ(p.frame_cap(), 2048u);
  const auto f = sample_frames(3600.0, 30.0, p);
  ASSERT_EQ(f.size(), 2048u);
  for (std::size_t k = 0; k < f.size(); ++k) EXPECT_EQ(f[k], static_cast<double>(k) * 3600.0 / 2048.0);
  EXPECT_LT(f.back(), 3600.0);
}

TEST(SampleFrames, ZeroDuration) { EXPECT_EQ(sample_frames(0.0, 30.0, SamplingPolicy{}), std::vector<double>{0.0}); }

TEST(SampleFrames, ShortClipStillYieldsOneFrame) {
  EXPECT_EQ(sample_frames(0.1, 30.0, ample(2.0)), std::vector<double>{0.0});
}

TEST(SampleFrames, BadPolicyIsConfigError) {
  SamplingPolicy p;
  p.fps = 0;
  EXPECT_THROW(sample_frames(1.0, 30.0, p), ConfigError);
  p = SamplingPolicy{};
  p.max_frames = 0;
  EXPECT_THROW(sample_frames(1.0, 30.0, p), ConfigError);
  p = SamplingPolicy{};
  p.token_budget = p.tokens_per_frame - 1;
  EXPECT_THROW(sample_frames(1.0, 30.0, p), ConfigError);
}

TEST(SampleFrames, BadInputsAreValidationErrors) {
  EXPECT_THROW(sample_frames(-1.0, 30.0, SamplingPolicy{}), ValidationError);
  EXPECT_THROW(sample_frames(1.0, 0.0, SamplingPolicy{}), ValidationError);
}

TEST(SampleFrames, CapSweepAndOrdering) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    SamplingPolicy p;
    p.fps = rng.uniform(0.1, 8.0);
    p.max_frames = 1 + rng.below(3000);
    p.tokens_per_frame = 1 + rng.below(1000);
    p.token_budget = p.tokens_per_frame + rng.below(500000);
    const double duration = rng.uniform(0.0, 7200.0);
    const auto f = sample_frames(duration, rng.uniform(1.0, 60.0), p);
    ASSERT_LE(f.size(), std::min(p.max_frames, p.token_budget / p.tokens_per_frame));
    ASSERT_GE(f.size(), 1u);
    EXPECT_EQ(f.front(), 0.0);
    for (std::size_t k = 1; k < f.size(); ++k) ASSERT_GT(f[k], f[k - 1]);
    if (duration > 0) ASSERT_LT(f.back(), duration);
  }
}

// ---- timestamps -----------------------------------------------------------------

TEST(FormatTimestamp, Seconds) {
  EXPECT_EQ(format_timestamp(3.0, TimestampStyle::seconds), "<3.0 seconds>");
  EXPECT_EQ(format_timestamp(0.0, TimestampStyle::seconds), "<0.0 seconds>");
  EXPECT_EQ(format_timestamp(2.25, TimestampStyle::seconds), "<2.3 seconds>");
  EXPECT_EQ(format_timestamp(59.96, TimestampStyle::seconds), "<60.0 seconds>");
}

TEST(FormatTimestamp, Hms) {
  EXPECT_EQ(format_timestamp(3661.0, TimestampStyle::hms), "<01:01:01>");
  EXPECT_EQ(format_timestamp(59.999, TimestampStyle::hms), "<00:00:59>");
  EXPECT_EQ(format_timestamp(125.0 * 3600, TimestampStyle::hms), "<125:00:00>");
}

TEST(FormatTimestamp, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(format_timestamp(-1.0, TimestampStyle::seconds), ValidationError);
  EXPECT_THROW(format_timestamp(std::nan(""), TimestampStyle::hms), ValidationError);
}

TEST(FormatTimestamp, HmsRoundTripRecoversTruncatedSeconds) {
  Rng rng(22);
  for (int trial = 0; trial < 10000; ++trial) {
    const double t = rng.uniform(0.0, 400000.0);
    EXPECT_EQ(parse_hms(format_timestamp(t, TimestampStyle::hms)), std::floor(t));
  }
}

TEST(ParseHms, RejectsMalformed) {
  for (const char* bad : {"01:01:01", "<1:01:01>", "<01:60:00>", "<01:01:1>", "<aa:bb:cc>", "<>"})
    EXPECT_THROW(parse_hms(bad), ValidationError) << bad;
}

// ---- interleaving -----------------------------------------------------------------

TEST(InterleaveTimestamps, FourFramesTwoGroups) {
  const std::vector<double> frames{0.0, 0.5, 1.0, 1.5};
  const auto s = interleave_timestamps(frames, 2, TimestampStyle::seconds);
  MultimodalSequence want;
  want.push(TextSpan{tokenize("<0.0 seconds>")});
  want.push(FrameGroup{0.0, 0.5, 1, 1, TimestampStyle::seconds, 2});
  want.push(TextSpan{tokenize("<1.0 seconds>")});
  want.push(FrameGroup{1.0, 1.5, 1, 1, TimestampStyle::seconds, 2});
  EXPECT_EQ(s, want);
}

TEST(InterleaveTimestamps, SingleFrame) {
  const std::vector<double> frames{0.0};
  const auto s = interleave_timestamps(frames, 2, TimestampStyle::seconds);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(std::get<FrameGroup>(s.elements()[1]).frames, 1u);
}

TEST(InterleaveTimestamps, RemainderGroupIsShort) {
  const std::vector<double> frames{0.0, 1.0, 2.0};
  const auto s = interleave_timestamps(frames, 2, TimestampStyle::hms);
  ASSERT_EQ(s.size(), 4u);
  const auto& last = std::get<FrameGroup>(s.elements()[3]);
  EXPECT_EQ(last.frames, 1u);
  EXPECT_EQ(last.start, 2.0);
  EXPECT_EQ(detokenize(std::get<TextSpan>(s.elements()[2]).tokens), "<00:00:02>");
}

TEST(InterleaveTimestamps, EmptyIsError) {
  EXPECT_THROW(interleave_timestamps(std::vector<double>{}, 2, TimestampStyle::seconds), ValidationError);
}

// ---- tokenizer --------------------------------------------------------------------

TEST(Tokenizer, EmptyString) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(detokenize(std::vector<std::size_t>{}), "");
}

TEST(Tokenizer, TimestampRoundTrip) { EXPECT_EQ(detokenize(tokenize("<3.0 seconds>")), "<3.0 seconds>"); }

TEST(Tokenizer, SpecialIdsDoNotDetokenize) {
  for (std::size_t id : {tokens::kVisionStart, tokens::kVideoPad, std::size_t{100000}})
    EXPECT_THROW(detokenize(std::vector<std::size_t>{id}), ValidationError);
}

TEST(Tokenizer, RoundTripAndInjectivityOnRandomCorpus) {
  Rng rng(23);
  std::map<std::vector<std::size_t>, std::string> seen;
  for (int i = 0; i < 10000; ++i) {
    const std::string s = random_bytes(rng, 40);
    const auto ids = tokenize(s);
    ASSERT_EQ(detokenize(ids), s);
    const auto [it, inserted] = seen.emplace(ids, s);
    if (!inserted) ASSERT_EQ(it->second, s);  // equal ids only for equal strings
  }
}

// ---- manifest ---------------------------------------------------------------------

TEST(SequenceManifest, RoundTrip) {
  MultimodalSequence s;
  s.push(TextSpan{{1, 2, 3}});
  s.push(ImageBlock{2, 3});
  s.push(FrameGroup{1.5, 2.0, 1, 2, TimestampStyle::hms, 2});
  EXPECT_EQ(MultimodalSequence::from_json(s.to_json()), s);
}

TEST(SequenceManifest, RejectsInvalidElements) {
  EXPECT_THROW(MultimodalSequence().push(FrameGroup{2.0, 1.0, 1, 1}), ValidationError);
  EXPECT_THROW(MultimodalSequence().push(ImageBlock{0, 1}), ValidationError);
  EXPECT_THROW(MultimodalSequence::from_json(R"({"schema_version":1,"elements":[{"kind":"blob"}]})"), ParseError);
}

// ---- sparsity ---------------------------------------------------------------------

TEST(PositionRange, HundredGroupsTextualAreConsecutive) {
  const auto r = position_id_range_report(groups_every(2.0, 100), TemporalIdScheme::textual_timestamp);
  EXPECT_EQ(r.distinct_t, 100u);
  EXPECT_EQ(r.max_t - r.min_t + 1, 100u);
  EXPECT_EQ(r.sparsity, 1.0);
}

TEST(PositionRange, TwoHoursAbsoluteTimeIsSparse) {
  const auto r = position_id_range_report(groups_every(2.0, 3600), TemporalIdScheme::absolute_time, 0.1);
  EXPECT_EQ(r.max_t, 71980u);
  EXPECT_EQ(r.distinct_t, 3600u);
  EXPECT_NEAR(r.sparsity, 20.0, 0.01);
  EXPECT_NEAR(static_cast<double>(r.max_t) / static_cast<double>(r.distinct_t), 20.0, 0.01);
}

TEST(PositionRange, SingleGroup) {
  const auto r = position_id_range_report(groups_every(2.0, 1), TemporalIdScheme::textual_timestamp);
  EXPECT_EQ(r.max_t, r.min_t);
  EXPECT_EQ(r.sparsity, 1.0);
}

TEST(PositionRange, TextualStaysDenseForAnyDuration) {
  for (double spacing : {0.5, 2.0, 30.0, 600.0}) {
    const auto r = position_id_range_report(groups_every(spacing, 250), TemporalIdScheme::textual_timestamp);
    EXPECT_EQ(r.sparsity, 1.0);
    const auto a = position_id_range_report(groups_every(spacing, 250), TemporalIdScheme::absolute_time, 0.1);
    EXPECT_GT(a.sparsity, 1.0);
  }
}

TEST(PositionRange, Errors) {
  EXPECT_THROW(position_id_range_report(groups_every(1.0, 3), TemporalIdScheme::absolute_time, 0.0), ConfigError);
  EXPECT_THROW(position_id_range_report(MultimodalSequence{}, TemporalIdScheme::textual_timestamp), ValidationError);
}
