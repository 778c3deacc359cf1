#include "vlmech/train.hpp"

#include <algorithm>
#include <cmath>

#include "vlmech/errors.hpp"
#include "vlmech/mrope.hpp"
#include "vlmech/ops.hpp"
#include "vlmech/rng.hpp"

namespace vlmech {

std::vector<TrainExample> synthetic_batch(const vision::ModelConfig& cfg, std::size_t count, std::size_t max_tokens,
                                          std::uint64_t seed) {
  cfg.validate();
  if (max_tokens < 4) throw ConfigError("synthetic examples need room for at least 4 tokens");
  const std::size_t vocab = std::min<std::size_t>(cfg.vocab, 256);
  const Rng root(seed);
  std::vector<TrainExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split(i);
    // text in [3, max_tokens - 1] plus one image token; prefix >= 2 keeps at
    // least one supervised position.
    const std::size_t text = 3 + static_cast<std::size_t>(rng.below(max_tokens - 3));
    const std::size_t prefix = 2 + static_cast<std::size_t>(rng.below(text - 2));
    const std::size_t suffix = text - prefix;
    auto draw = [&](std::size_t n) {
      std::vector<std::size_t> ids(n);
      for (auto& id : ids) id = static_cast<std::size_t>(rng.below(vocab));
      return ids;
    };
    TrainExample ex;
    const auto pre = draw(prefix);
    const auto post = draw(suffix);
    ex.seq.push(TextSpan{pre});
    ex.seq.push(ImageBlock{1, 1});
    ex.seq.push(TextSpan{post});
    ex.visuals.push_back({2, 2, Tensor::randn({4, cfg.dim}, rng)});
    std::vector<std::size_t> flat = pre;
    flat.push_back(TrainExample::kNoTarget);  // the image token
    flat.insert(flat.end(), post.begin(), post.end());
    ex.targets.assign(flat.size(), TrainExample::kNoTarget);
    for (std::size_t p = 0; p + 1 < flat.size(); ++p)
      if (flat[p] != TrainExample::kNoTarget && flat[p + 1] != TrainExample::kNoTarget) ex.targets[p] = flat[p + 1];
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

struct Supervised {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
};

Supervised supervised_rows(const TrainExample& ex) {
  if (ex.targets.size() != ex.seq.token_count()) {
    throw ValidationError("example has " + std::to_string(ex.targets.size()) + " targets for " +
                          std::to_string(ex.seq.token_count()) + " tokens");
  }
  Supervised s;
  for (std::size_t p = 0; p < ex.targets.size(); ++p) {
    if (ex.targets[p] == TrainExample::kNoTarget) continue;
    s.rows.push_back(p);
    s.targets.push_back(ex.targets[p]);
  }
  if (s.rows.empty()) throw ValidationError("example has no supervised positions");
  return s;
}

}  // namespace

Var batch_loss(vision::ParamBinder& bind, const vision::ModelParams& params, const vision::ModelConfig& cfg,
               std::span<const TrainExample> batch, objective::Scheme scheme) {
  if (batch.empty()) throw ValidationError("training batch is empty");
  Tape& t = bind.tape();
  const FrequencyAllocation alloc = interleaved_allocation(cfg.head_dim, cfg.rope_base);

  std::vector<Var> token_losses;
  std::vector<objective::SampleLossRecord> records;
  for (const auto& ex : batch) {
    const Supervised s = supervised_rows(ex);
    const auto out = vision::model_forward(bind, params, cfg, ex.seq, ex.visuals, alloc);
    const Var rows = gather_rows(t, out.logits, s.rows);
    const Var ce = cross_entropy_rows(t, rows, s.targets);
    const auto values = t.value(ce).values();
    records.push_back({std::vector<double>(values.begin(), values.end()), objective::Modality::multimodal});
    token_losses.push_back(reshape(t, ce, {s.rows.size(), 1}));
  }
  // The scheme's token weights turn the concatenated token losses into the
  // batch objective: sum(w * l) == objective::aggregate(records, scheme).
  const auto weights = objective::gradient_weights(records, scheme);
  const Var all = token_losses.size() == 1 ? token_losses.front() : concat_rows(t, token_losses);
  return weighted_sum(t, all, weights);
}

TrainResult train_toy(vision::ModelParams params, const vision::ModelConfig& cfg, const StageConfig& stage,
                      std::span<const TrainExample> batch, const TrainOptions& opts) {
  if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr)) throw ConfigError("learning rate must be finite and >= 0");
  stage.validate();
  cfg.validate();
  for (const auto& ex : batch) {
    if (ex.seq.token_count() > stage.toy_sequence_length) {
      throw ValidationError("example of " + std::to_string(ex.seq.token_count()) + " tokens exceeds stage " +
                            stage.name + "'s toy sequence length " + std::to_string(stage.toy_sequence_length));
    }
  }

  TrainResult result;
  result.losses.reserve(opts.steps + 1);
  for (std::size_t step = 0; step <= opts.steps; ++step) {
    Tape tape;
    vision::ParamBinder bind(tape);
    const Var loss = batch_loss(bind, params, cfg, batch, opts.scheme);
    result.losses.push_back(tape.value(loss).item());
    if (step == opts.steps || opts.lr == 0.0) continue;
    tape.backward(loss);
    params.visit([&](const std::string&, vision::ParamGroup group, Tensor& p) {
      if (!stage.is_trainable(group)) return;
      const auto bound = bind.find(p);
      if (!bound) return;  // not used by this batch
      const Tensor& g = tape.grad(*bound);
      std::vector<double> next(p.values().begin(), p.values().end());
      const auto gv = g.values();
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= opts.lr * gv[i];
      p = Tensor(p.shape(), std::move(next));
    });
  }
  result.params = std::move(params);
  return result;
}

}  // namespace vlmech
