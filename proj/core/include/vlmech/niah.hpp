#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vlmech/mrope.hpp"
#include "vlmech/sequence.hpp"
#include "vlmech/tensor.hpp"

namespace vlmech {

/// Needle-in-a-haystack probe settings.
///
/// The probe is a desk-scale stand-in for a full model: every frame group is
/// one key vector, the question is one query vector, and retrieval is the
/// argmax of the MRoPE-rotated attention score. It isolates the positional
/// encoding and nothing else.
///
/// Signatures live on the `signature_band` slowest rotary pairs. The hay
/// signature occupies the odd pairs of that band and the needle's private
/// direction the even pairs, so at overlap 0 the two are orthogonal under
/// every rotation. needle = overlap * hay + sqrt(1 - overlap^2) * private.
/// Every key also gets isotropic noise of total scale `noise`.
struct NiahConfig {
  std::vector<double> durations_min{2.0, 8.0, 32.0, 136.0};
  std::vector<double> depths{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t trials = 4;
  std::uint64_t seed = 0;
  double fps = 1.0;
  std::size_t num_frames = 8192;  // frame cap per video
  std::size_t group_size = 2;
  TimestampStyle style = TimestampStyle::seconds;
  std::size_t question_tokens = 16;
  std::size_t head_dim = 128;
  double rope_base = 5e6;
  RopeScheme scheme = RopeScheme::interleaved;
  double signature_band = 0.125;
  double overlap = 0.0;
  double noise = 0.1;

  /// Throws ConfigError: depths must be strictly increasing inside (0, 1),
  /// durations positive, trials >= 1, overlap in [0, 1], and the band must
  /// hold at least two rotary pairs.
  void validate() const;
  std::string to_json() const;
  static NiahConfig from_json(std::string_view text);
};

/// A built haystack: the interleaved video, a trailing question span, the
/// ground truth, and one key vector per frame group.
struct NiahSequence {
  MultimodalSequence seq;
  std::size_t groups = 0;
  std::size_t needle_group = 0;
  double needle_time = 0.0;
  std::vector<std::size_t> group_token;  // decoder index of each group's token
  std::size_t query_token = 0;           // last question token
  Tensor keys;                           // [groups x head_dim]
  Tensor query;                          // [head_dim]
};

/// round(depth * (groups - 1)), half away from zero.
std::size_t needle_index(std::size_t groups, double depth);

/// Samples `duration_min` minutes at cfg.fps (capped at num_frames),
/// interleaves timestamps, appends the question and plants the needle.
/// Throws ValidationError unless 0 < depth < 1.
NiahSequence build_niah_sequence(const NiahConfig& cfg, double duration_min, double depth, std::uint64_t seed);
/// Same, with exactly `groups` full frame groups.
NiahSequence build_niah_sequence_groups(const NiahConfig& cfg, std::size_t groups, double depth, std::uint64_t seed);

struct NiahPrediction {
  std::size_t predicted = 0;
  double margin = 0.0;  // top1 - top2; 0 for a single group
  std::vector<double> scores;
};

/// Scores every group key against `query` after rotating both by their
/// MRoPE position ids, and returns the argmax (lowest index on ties).
NiahPrediction run_niah_probe(const NiahSequence& s, const Tensor& query, const FrequencyAllocation& alloc);

struct NiahTrial {
  std::size_t needle = 0;
  std::size_t predicted = 0;
  double margin = 0.0;
  bool correct = false;

  friend bool operator==(const NiahTrial&, const NiahTrial&) = default;
};

struct NiahCell {
  double duration_min = 0.0;
  double depth = 0.0;
  std::size_t groups = 0;
  double accuracy = 0.0;
  std::vector<NiahTrial> trials;

  friend bool operator==(const NiahCell&, const NiahCell&) = default;
};

/// Cells duration-major: cells[i * depths + j] is (durations[i], depths[j]).
struct NiahGrid {
  NiahConfig config;
  std::vector<NiahCell> cells;
};

/// Seed for trial k of cell (i, j); every cell is independent of the others.
std::uint64_t niah_trial_seed(std::uint64_t seed, std::size_t duration_index, std::size_t depth_index,
                              std::size_t trial);

/// Runs every (duration, depth, trial). Cells run on up to `threads`
/// workers (0 = hardware concurrency); the result does not depend on it.
NiahGrid run_niah_grid(const NiahConfig& cfg, unsigned threads = 1);

}  // namespace vlmech
