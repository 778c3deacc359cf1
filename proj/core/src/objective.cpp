#include "vlmech/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vlmech/errors.hpp"

namespace vlmech::objective {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::per_sample:
      return "per_sample";
    case Scheme::per_token:
      return "per_token";
    case Scheme::sqrt:
      return "sqrt";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "per_sample") return Scheme::per_sample;
  if (name == "per_token") return Scheme::per_token;
  if (name == "sqrt") return Scheme::sqrt;
  throw ConfigError("unknown loss scheme '" + std::string(name) + "' (expected per_sample, per_token or sqrt)");
}

double exponent(Scheme scheme) {
  switch (scheme) {
    case Scheme::per_sample:
      return 0.0;
    case Scheme::per_token:
      return 1.0;
    case Scheme::sqrt:
      return 0.5;
  }
  return 0.0;
}

namespace {

// (n / n_max)^p. Relative weights are exactly 1 whenever all samples share a
// length, which makes the three schemes agree bit for bit in that case.
double relative_weight(std::size_t n, std::size_t n_max, Scheme scheme) {
  const double r = static_cast<double>(n) / static_cast<double>(n_max);
  switch (scheme) {
    case Scheme::per_sample:
      return 1.0;
    case Scheme::per_token:
      return r;
    case Scheme::sqrt:
      return std::sqrt(r);
  }
  return 1.0;
}

std::size_t longest(std::span<const SampleLossRecord> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n = std::max(n, s.token_losses.size());
  return n;
}

}  // namespace

void validate(std::span<const SampleLossRecord> batch) {
  if (batch.empty()) throw ValidationError("loss batch is empty");
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (batch[s].token_losses.empty()) throw ValidationError("sample " + std::to_string(s) + " has no tokens");
    for (double l : batch[s].token_losses) {
      if (!std::isfinite(l) || l < 0.0) {
        throw ValidationError("sample " + std::to_string(s) + " has a negative or non-finite token loss");
      }
    }
  }
}

double aggregate(std::span<const SampleLossRecord> batch, Scheme scheme) {
  validate(batch);
  const std::size_t n_max = longest(batch);
  // Sample means are taken around the first token loss, so a batch of equal
  // losses returns that loss exactly.
  const double anchor = batch.front().token_losses.front();
  double num = 0.0, den = 0.0;
  for (const auto& sample : batch) {
    double dev = 0.0;
    for (double l : sample.token_losses) dev += l - anchor;
    dev /= static_cast<double>(sample.token_losses.size());
    const double w = relative_weight(sample.token_losses.size(), n_max, scheme);
    num += w * dev;
    den += w;
  }
  return anchor + num / den;
}

std::vector<double> gradient_weights(std::span<const SampleLossRecord> batch, Scheme scheme) {
  validate(batch);
  const std::size_t n_max = longest(batch);
  double den = 0.0;
  for (const auto& sample : batch) den += relative_weight(sample.token_losses.size(), n_max, scheme);
  std::vector<double> weights;
  for (const auto& sample : batch) {
    const std::size_t n = sample.token_losses.size();
    const double w = relative_weight(n, n_max, scheme) / (static_cast<double>(n) * den);
    weights.insert(weights.end(), n, w);
  }
  return weights;
}

}  // namespace vlmech::objective
