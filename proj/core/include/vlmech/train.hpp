#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vlmech/objective.hpp"
#include "vlmech/sequence.hpp"
#include "vlmech/stage.hpp"
#include "vlmech/vision_stack.hpp"

namespace vlmech {

/// One supervised example: a multimodal sequence, one patch grid per visual
/// element, and a next-token target per position (kNoTarget where the
/// position is not supervised).
struct TrainExample {
  static constexpr std::size_t kNoTarget = static_cast<std::size_t>(-1);

  MultimodalSequence seq;
  std::vector<vision::PatchGrid> visuals;
  std::vector<std::size_t> targets;
};

/// `count` examples of the form [text prefix][1x1 image][text suffix] with
/// random byte tokens and random patch features. Text positions whose next
/// token is text are supervised. Each example has at most `max_tokens`
/// tokens (at least 4 needed); lengths vary so the loss schemes differ.
std::vector<TrainExample> synthetic_batch(const vision::ModelConfig& cfg, std::size_t count, std::size_t max_tokens,
                                          std::uint64_t seed);

struct TrainOptions {
  std::size_t steps = 200;
  double lr = 0.05;
  objective::Scheme scheme = objective::Scheme::sqrt;
};

struct TrainResult {
  /// Batch loss before each step, then once more after the last step
  /// (steps + 1 entries).
  std::vector<double> losses;
  vision::ModelParams params;
};

/// Batch loss under `scheme` and per-token gradient weights, computed on a
/// caller-owned tape. Exposed for gradient checks.
Var batch_loss(vision::ParamBinder& bind, const vision::ModelParams& params, const vision::ModelConfig& cfg,
               std::span<const TrainExample> batch, objective::Scheme scheme);

/// Plain gradient descent on the parameter groups the stage trains. Frozen
/// groups are never written, so they stay bit-identical. lr == 0 leaves every
/// parameter unchanged; a negative or non-finite lr is a ConfigError.
/// Examples longer than stage.toy_sequence_length are a ValidationError.
TrainResult train_toy(vision::ModelParams params, const vision::ModelConfig& cfg, const StageConfig& stage,
                      std::span<const TrainExample> batch, const TrainOptions& opts);

}  // namespace vlmech
