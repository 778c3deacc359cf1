#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace vlmech::objective {

enum class Modality { text, multimodal };

/// Per-token negative log-likelihoods of one training sample.
struct SampleLossRecord {
  std::vector<double> token_losses;
  Modality modality = Modality::text;
};

/// Each sample s with n_s tokens and mean token loss m_s gets weight
/// w_s = n_s^p, and the batch loss is sum_s w_s m_s / sum_s w_s:
///   per_sample  p = 0   (every sample counts equally)
///   per_token   p = 1   (every token counts equally)
///   sqrt        p = 1/2 (square-root length normalization)
enum class Scheme { per_sample, per_token, sqrt };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);
double exponent(Scheme scheme);

/// Throws ValidationError on an empty batch, an empty sample, or a
/// negative / non-finite token loss.
void validate(std::span<const SampleLossRecord> batch);

double aggregate(std::span<const SampleLossRecord> batch, Scheme scheme);

/// d(aggregate)/d(token loss), flattened sample-major. Token t of sample s
/// weighs n_s^(p-1) / sum_s n_s^p, so sum(weights * losses) == aggregate.
std::vector<double> gradient_weights(std::span<const SampleLossRecord> batch, Scheme scheme);

}  // namespace vlmech::objective
