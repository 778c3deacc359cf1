#include "vlmech/niah.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <thread>

#include "vlmech/errors.hpp"
#include "vlmech/rng.hpp"
#include "vlmech/timeline.hpp"
#include "vlmech/tokenizer.hpp"

namespace vlmech {

// ---- config -----------------------------------------------------------------

namespace {

std::size_t band_pairs(const NiahConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.signature_band * static_cast<double>(cfg.head_dim / 2)));
}

}  // namespace

void NiahConfig::validate() const {
  if (durations_min.empty()) throw ConfigError("NIAH needs at least one duration");
  for (double d : durations_min)
    if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("NIAH durations must be positive minutes");
  if (depths.empty()) throw ConfigError("NIAH needs at least one depth");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!(depths[i] > 0.0 && depths[i] < 1.0)) throw ConfigError("NIAH depths must lie in (0, 1)");
    if (i > 0 && !(depths[i] > depths[i - 1])) throw ConfigError("NIAH depths must be strictly increasing");
  }
  if (trials == 0) throw ConfigError("NIAH trials must be >= 1");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("NIAH fps must be positive");
  if (num_frames == 0 || group_size == 0) throw ConfigError("NIAH num_frames and group_size must be positive");
  if (question_tokens == 0) throw ConfigError("NIAH question needs at least one token");
  if (head_dim < 2 || head_dim % 2 != 0) throw ConfigError("NIAH head_dim must be even and >= 2");
  if (!(rope_base > 1.0)) throw ConfigError("NIAH rope_base must exceed 1");
  if (!(signature_band > 0.0 && signature_band <= 1.0)) throw ConfigError("signature_band must lie in (0, 1]");
  if (band_pairs(*this) < 2) throw ConfigError("signature band must cover at least two rotary pairs");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("overlap must lie in [0, 1]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be finite and >= 0");
}

std::string NiahConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["durations_min"] = durations_min;
  j["depths"] = depths;
  j["trials"] = trials;
  j["seed"] = seed;
  j["fps"] = fps;
  j["num_frames"] = num_frames;
  j["group_size"] = group_size;
  j["timestamp_style"] = std::string(to_string(style));
  j["question_tokens"] = question_tokens;
  j["head_dim"] = head_dim;
  j["rope_base"] = rope_base;
  j["scheme"] = std::string(to_string(scheme));
  j["signature_band"] = signature_band;
  j["overlap"] = overlap;
  j["noise"] = noise;
  return j.dump(2);
}

NiahConfig NiahConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed NIAH config: ") + e.what());
  }
  NiahConfig c;
  try {
    if (!j.is_object()) throw ConfigError("NIAH config must be a JSON object");
    if (j.value("schema_version", 1) != 1) throw ConfigError("unsupported NIAH config schema_version");
    c.durations_min = j.value("durations_min", c.durations_min);
    c.depths = j.value("depths", c.depths);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.fps = j.value("fps", c.fps);
    c.num_frames = j.value("num_frames", c.num_frames);
    c.group_size = j.value("group_size", c.group_size);
    if (j.contains("timestamp_style")) {
      c.style = parse_timestamp_style(j["timestamp_style"].get<std::string>());
    }
    c.question_tokens = j.value("question_tokens", c.question_tokens);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.rope_base = j.value("rope_base", c.rope_base);
    if (j.contains("scheme")) c.scheme = parse_rope_scheme(j["scheme"].get<std::string>());
    c.signature_band = j.value("signature_band", c.signature_band);
    c.overlap = j.value("overlap", c.overlap);
    c.noise = j.value("noise", c.noise);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid NIAH config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- haystack -----------------------------------------------------------------

std::size_t needle_index(std::size_t groups, double depth) {
  if (groups == 0) throw ValidationError("haystack has no groups");
  return static_cast<std::size_t>(std::lround(depth * static_cast<double>(groups - 1)));
}

namespace {

/// Unit vector on the given pairs of a head_dim vector.
std::vector<double> random_on_pairs(std::size_t head_dim, const std::vector<std::size_t>& pairs, Rng& rng) {
  std::vector<double> v(head_dim, 0.0);
  double norm = 0.0;
  for (std::size_t p : pairs) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double x = rng.normal();
      v[2 * p + k] = x;
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

NiahSequence plant(const NiahConfig& cfg, const std::vector<double>& frames, double depth, std::uint64_t seed) {
  if (!(depth > 0.0 && depth < 1.0)) throw ValidationError("needle depth must lie in (0, 1)");
  NiahSequence s;
  s.seq = interleave_timestamps(frames, cfg.group_size, cfg.style);
  s.groups = (frames.size() + cfg.group_size - 1) / cfg.group_size;
  s.needle_group = needle_index(s.groups, depth);
  s.needle_time = frames[s.needle_group * cfg.group_size];

  std::string question = "Which moment shows the needle?";
  question.resize(cfg.question_tokens, ' ');
  s.seq.push(TextSpan{tokenize(question)});

  std::size_t offset = 0;
  for (const auto& e : s.seq.elements()) {
    if (std::holds_alternative<FrameGroup>(e)) s.group_token.push_back(offset);
    offset += token_count(e);
  }
  s.query_token = offset - 1;

  // Signatures on the slowest pairs: hay on odd band slots, needle's private
  // direction on even ones.
  const std::size_t pairs = cfg.head_dim / 2;
  const std::size_t band = band_pairs(cfg);
  std::vector<std::size_t> hay_pairs, own_pairs;
  for (std::size_t k = 0; k < band; ++k) (k % 2 ? hay_pairs : own_pairs).push_back(pairs - band + k);

  Rng rng(seed);
  Rng sig_rng = rng.split(0);
  Rng noise_rng = rng.split(1);
  const auto hay = random_on_pairs(cfg.head_dim, hay_pairs, sig_rng);
  const auto own = random_on_pairs(cfg.head_dim, own_pairs, sig_rng);
  const double a = cfg.overlap;
  const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
  std::vector<double> needle(cfg.head_dim);
  for (std::size_t i = 0; i < cfg.head_dim; ++i) needle[i] = a * hay[i] + b * own[i];

  const double sd = cfg.noise / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<double> keys(s.groups * cfg.head_dim);
  for (std::size_t g = 0; g < s.groups; ++g) {
    const auto& base = g == s.needle_group ? needle : hay;
    for (std::size_t i = 0; i < cfg.head_dim; ++i) keys[g * cfg.head_dim + i] = base[i] + sd * noise_rng.normal();
  }
  s.keys = Tensor({s.groups, cfg.head_dim}, std::move(keys));
  s.query = Tensor({cfg.head_dim}, std::move(needle));
  return s;
}

}  // namespace

NiahSequence build_niah_sequence(const NiahConfig& cfg, double duration_min, double depth, std::uint64_t seed) {
  cfg.validate();
  if (!(duration_min >= 0.0) || !std::isfinite(duration_min)) throw ValidationError("duration must be >= 0");
  SamplingPolicy policy;
  policy.fps = cfg.fps;
  policy.max_frames = cfg.num_frames;
  policy.tokens_per_frame = 1;
  policy.token_budget = cfg.num_frames;
  policy.group_size = cfg.group_size;
  return plant(cfg, sample_frames(duration_min * 60.0, cfg.fps, policy), depth, seed);
}

NiahSequence build_niah_sequence_groups(const NiahConfig& cfg, std::size_t groups, double depth, std::uint64_t seed) {
  cfg.validate();
  if (groups == 0) throw ValidationError("haystack needs at least one group");
  std::vector<double> frames(groups * cfg.group_size);
  for (std::size_t k = 0; k < frames.size(); ++k) frames[k] = static_cast<double>(k) / cfg.fps;
  return plant(cfg, frames, depth, seed);
}

// ---- probe ------------------------------------------------------------------

NiahPrediction run_niah_probe(const NiahSequence& s, const Tensor& query, const FrequencyAllocation& alloc) {
  if (s.keys.rank() != 2 || s.keys.dim(0) != s.group_token.size() || s.group_token.empty()) {
    throw ShapeError("probe needs one key row per frame group");
  }
  if (s.keys.dim(1) != alloc.head_dim || query.numel() != alloc.head_dim) {
    throw ShapeError("probe vectors must match the rotary head_dim " + std::to_string(alloc.head_dim));
  }
  const auto ids = assign_position_ids(s.seq);
  std::vector<PositionId> key_ids;
  key_ids.reserve(s.group_token.size());
  for (std::size_t t : s.group_token) key_ids.push_back(ids.at(t));
  const Tensor keys = apply_mrope(s.keys, key_ids, alloc);
  const Tensor q = apply_mrope(query.reshaped({1, alloc.head_dim}), {ids.at(s.query_token)}, alloc);

  NiahPrediction p;
  p.scores.resize(keys.dim(0));
  for (std::size_t g = 0; g < keys.dim(0); ++g) {
    double dot = 0.0;
    for (std::size_t i = 0; i < alloc.head_dim; ++i) dot += q[i] * keys(g, i);
    p.scores[g] = dot;
  }
  double top1 = p.scores[0], top2 = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 1; g < p.scores.size(); ++g) {
    if (p.scores[g] > top1) {
      top2 = top1;
      top1 = p.scores[g];
      p.predicted = g;
    } else if (p.scores[g] > top2) {
      top2 = p.scores[g];
    }
  }
  p.margin = p.scores.size() > 1 ? top1 - top2 : 0.0;
  return p;
}

// ---- grid -------------------------------------------------------------------

std::uint64_t niah_trial_seed(std::uint64_t seed, std::size_t duration_index, std::size_t depth_index,
                              std::size_t trial) {
  return Rng(seed).split(duration_index).split(depth_index).split(trial).seed();
}

NiahGrid run_niah_grid(const NiahConfig& cfg, unsigned threads) {
  cfg.validate();
  const FrequencyAllocation alloc = cfg.scheme == RopeScheme::chunked
                                        ? chunked_allocation(cfg.head_dim, cfg.rope_base)
                                        : interleaved_allocation(cfg.head_dim, cfg.rope_base);
  NiahGrid grid;
  grid.config = cfg;
  const std::size_t nd = cfg.depths.size();
  grid.cells.resize(cfg.durations_min.size() * nd);

  auto run_cell = [&](std::size_t c) {
    const std::size_t i = c / nd, j = c % nd;
    NiahCell& cell = grid.cells[c];
    cell.duration_min = cfg.durations_min[i];
    cell.depth = cfg.depths[j];
    std::size_t hits = 0;
    for (std::size_t k = 0; k < cfg.trials; ++k) {
      const NiahSequence s = build_niah_sequence(cfg, cell.duration_min, cell.depth, niah_trial_seed(cfg.seed, i, j, k));
      const NiahPrediction p = run_niah_probe(s, s.query, alloc);
      cell.groups = s.groups;
      const bool ok = p.predicted == s.needle_group;
      hits += ok ? 1 : 0;
      cell.trials.push_back({s.needle_group, p.predicted, p.margin, ok});
    }
    cell.accuracy = static_cast<double>(hits) / static_cast<double>(cfg.trials);
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, grid.cells.size()));
  if (threads <= 1) {
    for (std::size_t c = 0; c < grid.cells.size(); ++c) run_cell(c);
    return grid;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < grid.cells.size() && !failed; c = next++) {
        try {
          run_cell(c);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return grid;
}

}  // namespace vlmech
