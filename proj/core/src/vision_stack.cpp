#include "vlmech/vision_stack.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "vlmech/errors.hpp"
#include "vlmech/ops.hpp"
#include "vlmech/rng.hpp"

namespace vlmech::vision {

// ---- configuration ------------------------------------------------------------

TapSet TapSet::make(std::array<std::size_t, 3> levels, std::size_t depth) {
  if (!(levels[0] < levels[1] && levels[1] < levels[2])) {
    throw ConfigError("tap levels must be strictly increasing");
  }
  if (levels[2] >= depth) {
    throw ConfigError("tap level " + std::to_string(levels[2]) + " out of range for encoder depth " +
                      std::to_string(depth));
  }
  return TapSet{levels};
}

TapSet TapSet::evenly_spaced(std::size_t depth) {
  if (depth < 3) throw ConfigError("DeepStack needs an encoder depth of at least 3");
  return make({depth / 4, depth / 2, 3 * depth / 4}, depth);
}

std::string_view to_string(InjectionMode mode) {
  return mode == InjectionMode::post_layer ? "post_layer" : "pre_layer";
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::encoder:
      return "encoder";
    case ParamGroup::merger:
      return "merger";
    case ParamGroup::decoder:
      return "decoder";
  }
  return "?";
}

ParamGroup parse_param_group(std::string_view name) {
  if (name == "encoder") return ParamGroup::encoder;
  if (name == "merger") return ParamGroup::merger;
  if (name == "decoder") return ParamGroup::decoder;
  throw ConfigError("unknown parameter group '" + std::string(name) + "' (expected encoder, merger or decoder)");
}

void ModelConfig::validate() const {
  if (dim == 0 || llm_dim == 0 || vocab == 0) throw ConfigError("model widths and vocab must be positive");
  if (head_dim < 2 || head_dim % 2 != 0) throw ConfigError("head_dim must be even and >= 2");
  if (dim % head_dim != 0 || llm_dim % head_dim != 0) {
    throw ConfigError("dim and llm_dim must be multiples of head_dim");
  }
  if (decoder_depth == 0) throw ConfigError("decoder_depth must be positive");
  TapSet::make(taps, encoder_depth);
  std::set<std::size_t> layers(inject_layers.begin(), inject_layers.end());
  if (layers.size() != 3) throw ConfigError("inject_layers must name three distinct decoder layers");
  if (*layers.rbegin() >= decoder_depth) {
    throw ConfigError("inject layer " + std::to_string(*layers.rbegin()) + " out of range for decoder depth " +
                      std::to_string(decoder_depth));
  }
  if (!(rope_base > 1.0)) throw ConfigError("rope_base must exceed 1");
  if (mlp_ratio == 0 || pos_table == 0) throw ConfigError("mlp_ratio and pos_table must be positive");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["encoder_depth"] = encoder_depth;
  j["decoder_depth"] = decoder_depth;
  j["dim"] = dim;
  j["llm_dim"] = llm_dim;
  j["head_dim"] = head_dim;
  j["taps"] = taps;
  j["inject_layers"] = inject_layers;
  j["vocab"] = vocab;
  j["rope_base"] = rope_base;
  j["mlp_ratio"] = mlp_ratio;
  j["pos_table"] = pos_table;
  j["ln_eps"] = ln_eps;
  j["injection"] = std::string(to_string(injection));
  j["normalize_taps"] = normalize_taps;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  ModelConfig c;
  try {
    if (j.value("schema_version", 1) != 1) throw ConfigError("unsupported model config schema_version");
    c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
    c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
    c.dim = j.value("dim", c.dim);
    c.llm_dim = j.value("llm_dim", c.llm_dim);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.taps = j.contains("taps") ? j["taps"].get<std::array<std::size_t, 3>>()
                                : TapSet::evenly_spaced(c.encoder_depth).levels;
    c.inject_layers = j.value("inject_layers", c.inject_layers);
    c.vocab = j.value("vocab", c.vocab);
    c.rope_base = j.value("rope_base", c.rope_base);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.pos_table = j.value("pos_table", c.pos_table);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    const std::string mode = j.value("injection", std::string("pre_layer"));
    if (mode == "pre_layer") {
      c.injection = InjectionMode::pre_layer;
    } else if (mode == "post_layer") {
      c.injection = InjectionMode::post_layer;
    } else {
      throw ConfigError("injection must be pre_layer or post_layer");
    }
    c.normalize_taps = j.value("normalize_taps", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- parameters -------------------------------------------------------------

namespace {

Linear make_linear(std::size_t in, std::size_t out) { return {Tensor::zeros({in, out}), Tensor::zeros({out})}; }

Block make_block(std::size_t width, std::size_t ratio) {
  Block b;
  b.ln1_gain = Tensor::full({width}, 1.0);
  b.ln1_bias = Tensor::zeros({width});
  b.q = make_linear(width, width);
  b.k = make_linear(width, width);
  b.v = make_linear(width, width);
  b.o = make_linear(width, width);
  b.ln2_gain = Tensor::full({width}, 1.0);
  b.ln2_bias = Tensor::zeros({width});
  b.mlp = {make_linear(width, ratio * width), make_linear(ratio * width, width)};
  return b;
}

Merger make_merger(std::size_t dim, std::size_t llm_dim) {
  return {Tensor::full({dim}, 1.0), Tensor::zeros({dim}), {make_linear(4 * dim, llm_dim), make_linear(llm_dim, llm_dim)}};
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, Init init) {
  cfg.validate();
  ModelParams p;
  p.encoder.pos_table = Tensor::zeros({cfg.pos_table, cfg.pos_table, cfg.dim});
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i) p.encoder.blocks.push_back(make_block(cfg.dim, cfg.mlp_ratio));
  p.main_merger = make_merger(cfg.dim, cfg.llm_dim);
  for (auto& m : p.deepstack_mergers) m = make_merger(cfg.dim, cfg.llm_dim);
  p.decoder.embedding = Tensor::zeros({cfg.vocab, cfg.llm_dim});
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    p.decoder.blocks.push_back(make_block(cfg.llm_dim, cfg.mlp_ratio));
  p.decoder.final_gain = Tensor::full({cfg.llm_dim}, 1.0);
  p.decoder.final_bias = Tensor::zeros({cfg.llm_dim});
  p.decoder.lm_head = make_linear(cfg.llm_dim, cfg.vocab);

  if (init == Init::zeros) return p;

  // Parameter k draws from Rng(seed).split(k), k counting in visit order.
  const Rng root(seed);
  std::uint64_t index = 0;
  p.visit([&](const std::string& name, ParamGroup, Tensor& t) {
    Rng rng = root.split(index++);
    if (ends_with(name, ".gain") || ends_with(name, ".bias")) return;
    double sd = 1.0;
    if (ends_with(name, "pos_table")) {
      sd = 0.1;
    } else if (ends_with(name, ".weight")) {
      sd = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
    }
    t = Tensor::randn(t.shape(), rng, sd);
  });
  return p;
}

Var ParamBinder::operator()(const Tensor& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return it->second;
  const Var v = tape_.leaf(param, true);
  bound_.emplace(&param, v);
  return v;
}

std::optional<Var> ParamBinder::find(const Tensor& param) const {
  if (auto it = bound_.find(&param); it != bound_.end()) return it->second;
  return std::nullopt;
}

void PatchGrid::validate(std::size_t dim) const {
  if (gh == 0 || gw == 0) throw ValidationError("patch grid must be at least 1x1");
  if (features.rank() != 2 || features.dim(0) != gh * gw || features.dim(1) != dim) {
    throw ShapeError("patch features must be [" + std::to_string(gh * gw) + " x " + std::to_string(dim) + "], got " +
                     shape_string(features.shape()));
  }
}

// ---- position embedding -----------------------------------------------------

Tensor bilinear_weights(std::size_t th, std::size_t tw, std::size_t gh, std::size_t gw) {
  if (th == 0 || tw == 0 || gh == 0 || gw == 0) throw ShapeError("bilinear_weights: sizes must be positive");
  auto source = [](std::size_t i, std::size_t from, std::size_t to) {
    if (to == 1 || from == 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
  };
  std::vector<double> w(gh * gw * th * tw, 0.0);
  for (std::size_t r = 0; r < gh; ++r) {
    const double sy = source(r, th, gh);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, th - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t c = 0; c < gw; ++c) {
      const double sx = source(c, tw, gw);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, tw - 1);
      const double fx = sx - static_cast<double>(x0);
      double* row = &w[(r * gw + c) * th * tw];
      row[y0 * tw + x0] += (1.0 - fy) * (1.0 - fx);
      row[y0 * tw + x1] += (1.0 - fy) * fx;
      row[y1 * tw + x0] += fy * (1.0 - fx);
      row[y1 * tw + x1] += fy * fx;
    }
  }
  return Tensor({gh * gw, th * tw}, std::move(w));
}

Tensor interpolate_pos_embed(const Tensor& table, std::size_t gh, std::size_t gw) {
  if (table.rank() != 3) throw ShapeError("position table must be [th x tw x dim]");
  const std::size_t th = table.dim(0), tw = table.dim(1), d = table.dim(2);
  const Tensor flat = matmul(bilinear_weights(th, tw, gh, gw), table.reshaped({th * tw, d}));
  return flat.reshaped({gh, gw, d});
}

Var interpolate_pos_embed(Tape& tape, Var table, std::size_t gh, std::size_t gw) {
  const Tensor& tv = tape.value(table);
  if (tv.rank() != 3) throw ShapeError("position table must be [th x tw x dim]");
  const std::size_t th = tv.dim(0), tw = tv.dim(1), d = tv.dim(2);
  const Var weights = tape.constant(bilinear_weights(th, tw, gh, gw));
  return matmul(tape, weights, reshape(tape, table, {th * tw, d}));
}

// ---- shared blocks ----------------------------------------------------------

namespace {

Var linear(ParamBinder& bind, Var x, const Linear& l) {
  Tape& t = bind.tape();
  return add_bias(t, matmul(t, x, bind(l.weight)), bind(l.bias));
}

Var mlp(ParamBinder& bind, Var x, const Mlp& m) {
  return linear(bind, gelu(bind.tape(), linear(bind, x, m.fc1)), m.fc2);
}

Var attention(ParamBinder& bind, const Block& blk, Var x, const RotaryTable& rope, std::size_t head_dim,
              bool causal) {
  Tape& t = bind.tape();
  const Var q = linear(bind, x, blk.q);
  const Var k = linear(bind, x, blk.k);
  const Var v = linear(bind, x, blk.v);
  const std::size_t heads = t.value(q).dim(1) / head_dim;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = rotate_pairs(t, slice_cols(t, q, h * head_dim, head_dim), rope.cos, rope.sin);
    const Var kh = rotate_pairs(t, slice_cols(t, k, h * head_dim, head_dim), rope.cos, rope.sin);
    const Var vh = slice_cols(t, v, h * head_dim, head_dim);
    const Var scores = scale(t, matmul(t, qh, transpose(t, kh)), inv_sqrt);
    const Var probs = causal ? causal_softmax(t, scores) : softmax(t, scores, 1);
    outs.push_back(matmul(t, probs, vh));
  }
  return linear(bind, heads == 1 ? outs.front() : concat_cols(t, outs), blk.o);
}

Var block_forward(ParamBinder& bind, const Block& blk, Var x, const RotaryTable& rope, std::size_t head_dim,
                  double eps, bool causal) {
  Tape& t = bind.tape();
  const Var a = attention(bind, blk, layer_norm(t, x, bind(blk.ln1_gain), bind(blk.ln1_bias), eps), rope, head_dim,
                          causal);
  const Var h = add(t, x, a);
  const Var m = mlp(bind, layer_norm(t, h, bind(blk.ln2_gain), bind(blk.ln2_bias), eps), blk.mlp);
  return add(t, h, m);
}

std::vector<PositionId> grid_ids(std::size_t gh, std::size_t gw) {
  std::vector<PositionId> ids;
  ids.reserve(gh * gw);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) ids.push_back({0, r, c});
  return ids;
}

}  // namespace

// ---- encoder ----------------------------------------------------------------

EncoderOutput encoder_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg,
                              const PatchGrid& grid, std::size_t depth, const TapSet& taps) {
  grid.validate(cfg.dim);
  if (depth > params.encoder.blocks.size()) {
    throw ConfigError("encoder depth " + std::to_string(depth) + " exceeds the " +
                      std::to_string(params.encoder.blocks.size()) + " available blocks");
  }
  TapSet::make(taps.levels, depth);
  Tape& t = bind.tape();
  const RotaryTable rope = rotary_table(grid_ids(grid.gh, grid.gw), interleaved_allocation(cfg.head_dim, cfg.rope_base));
  Var x = add(t, t.constant(grid.features), interpolate_pos_embed(t, bind(params.encoder.pos_table), grid.gh, grid.gw));
  EncoderOutput out{};
  std::size_t next_tap = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    x = block_forward(bind, params.encoder.blocks[l], x, rope, cfg.head_dim, cfg.ln_eps, false);
    if (next_tap < 3 && taps.levels[next_tap] == l) out.taps[next_tap++] = x;
  }
  out.final = x;
  return out;
}

std::array<Tensor, 3> encoder_forward(const ModelParams& params, const ModelConfig& cfg, const PatchGrid& grid,
                                      std::size_t depth, const TapSet& taps) {
  Tape tape;
  ParamBinder bind(tape);
  const EncoderOutput out = encoder_forward(bind, params, cfg, grid, depth, taps);
  return {tape.value(out.taps[0]), tape.value(out.taps[1]), tape.value(out.taps[2])};
}

// ---- merger -----------------------------------------------------------------

std::vector<std::size_t> merge_order(std::size_t gh, std::size_t gw) {
  if (gh == 0 || gw == 0 || gh % 2 != 0 || gw % 2 != 0) {
    throw ValidationError("2x2 merge needs even patch grid dimensions, got " + std::to_string(gh) + "x" +
                          std::to_string(gw));
  }
  std::vector<std::size_t> order;
  order.reserve(gh * gw);
  for (std::size_t r = 0; r < gh; r += 2)
    for (std::size_t c = 0; c < gw; c += 2) {
      order.push_back(r * gw + c);
      order.push_back(r * gw + c + 1);
      order.push_back((r + 1) * gw + c);
      order.push_back((r + 1) * gw + c + 1);
    }
  return order;
}

Var merge_2x2(ParamBinder& bind, Var features, std::size_t gh, std::size_t gw, const Merger& merger,
              const ModelConfig& cfg) {
  Tape& t = bind.tape();
  const Tensor& fv = t.value(features);
  if (fv.rank() != 2 || fv.dim(0) != gh * gw) {
    throw ShapeError("merge_2x2: features " + shape_string(fv.shape()) + " do not cover a " + std::to_string(gh) +
                     "x" + std::to_string(gw) + " grid");
  }
  const std::size_t d = fv.dim(1);
  std::vector<std::size_t> order = merge_order(gh, gw);
  Var x = features;
  if (cfg.normalize_taps) x = layer_norm(t, x, bind(merger.ln_gain), bind(merger.ln_bias), cfg.ln_eps);
  x = reshape(t, gather_rows(t, x, std::move(order)), {gh * gw / 4, 4 * d});
  return mlp(bind, x, merger.mlp);
}

Tensor merge_2x2(const Tensor& features, std::size_t gh, std::size_t gw, const Merger& merger,
                 const ModelConfig& cfg) {
  Tape tape;
  ParamBinder bind(tape);
  return tape.value(merge_2x2(bind, tape.constant(features), gh, gw, merger, cfg));
}

// ---- DeepStack --------------------------------------------------------------

Tensor deepstack_inject(const Tensor& hidden, const Tensor& injected, std::span<const std::size_t> positions) {
  return scatter_add_rows(hidden, injected, positions);
}

Var deepstack_inject(Tape& tape, Var hidden, Var injected, std::vector<std::size_t> positions) {
  return scatter_add_rows(tape, hidden, injected, std::move(positions));
}

// ---- decoder ----------------------------------------------------------------

Var decoder_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg, Var embeddings,
                    const std::vector<PositionId>& ids, const FrequencyAllocation& alloc,
                    const std::vector<Injection>& injections) {
  Tape& t = bind.tape();
  const Tensor& ev = t.value(embeddings);
  if (ev.rank() != 2 || ev.dim(1) != cfg.llm_dim) {
    throw ShapeError("decoder embeddings must be [seq x " + std::to_string(cfg.llm_dim) + "]");
  }
  if (ev.dim(0) == 0) throw ShapeError("decoder needs at least one token");
  if (alloc.head_dim != cfg.head_dim) throw ConfigError("rotary allocation head_dim differs from the model's");
  if (ids.size() != ev.dim(0)) throw ShapeError("one position id per token required");

  const std::size_t depth = params.decoder.blocks.size();
  std::vector<const Injection*> at_layer(depth, nullptr);
  for (const Injection& inj : injections) {
    if (inj.layer >= depth) {
      throw ConfigError("injection layer " + std::to_string(inj.layer) + " out of range for decoder depth " +
                        std::to_string(depth));
    }
    if (at_layer[inj.layer]) throw ConfigError("more than one injection for layer " + std::to_string(inj.layer));
    at_layer[inj.layer] = &inj;
  }

  const RotaryTable rope = rotary_table(ids, alloc);
  Var h = embeddings;
  for (std::size_t l = 0; l < depth; ++l) {
    const Injection* inj = at_layer[l];
    if (inj && cfg.injection == InjectionMode::pre_layer) h = deepstack_inject(t, h, inj->values, inj->positions);
    h = block_forward(bind, params.decoder.blocks[l], h, rope, cfg.head_dim, cfg.ln_eps, true);
    if (inj && cfg.injection == InjectionMode::post_layer) h = deepstack_inject(t, h, inj->values, inj->positions);
  }
  h = layer_norm(t, h, bind(params.decoder.final_gain), bind(params.decoder.final_bias), cfg.ln_eps);
  return linear(bind, h, params.decoder.lm_head);
}

Tensor decoder_forward(const ModelParams& params, const ModelConfig& cfg, const Tensor& embeddings,
                       const std::vector<PositionId>& ids, const FrequencyAllocation& alloc,
                       const std::vector<TensorInjection>& injections) {
  Tape tape;
  ParamBinder bind(tape);
  std::vector<Injection> bound;
  bound.reserve(injections.size());
  for (const auto& inj : injections) bound.push_back({inj.layer, tape.constant(inj.values), inj.positions});
  return tape.value(decoder_forward(bind, params, cfg, tape.constant(embeddings), ids, alloc, bound));
}

// ---- full model -------------------------------------------------------------

ModelOutput model_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg,
                          const MultimodalSequence& seq, std::span<const PatchGrid> visuals,
                          const FrequencyAllocation& alloc, bool deepstack) {
  if (seq.empty() || seq.token_count() == 0) throw ValidationError("model input sequence is empty");
  Tape& t = bind.tape();
  ModelOutput out;
  out.ids = assign_position_ids(seq);

  const TapSet taps = TapSet::make(cfg.taps, cfg.encoder_depth);
  std::vector<Var> pieces;
  std::array<std::vector<Var>, 3> tap_tokens;
  std::size_t position = 0;
  std::size_t visual_index = 0;
  const Var embedding = bind(params.decoder.embedding);

  for (const auto& element : seq.elements()) {
    if (const auto* text = std::get_if<TextSpan>(&element)) {
      for (std::size_t id : text->tokens)
        if (id >= cfg.vocab) throw ValidationError("token id " + std::to_string(id) + " outside the vocabulary");
      if (!text->tokens.empty()) pieces.push_back(gather_rows(t, embedding, text->tokens));
      position += text->tokens.size();
      continue;
    }
    const std::size_t gh = std::visit(
        [](const auto& e) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(e)>, TextSpan>) {
            return 0;
          } else {
            return e.gh;
          }
        },
        element);
    const std::size_t gw = token_count(element) / gh;
    if (visual_index >= visuals.size()) throw ValidationError("fewer patch grids than visual elements");
    const PatchGrid& grid = visuals[visual_index++];
    if (grid.gh != 2 * gh || grid.gw != 2 * gw) {
      throw ValidationError("patch grid " + std::to_string(grid.gh) + "x" + std::to_string(grid.gw) +
                            " does not merge to the " + std::to_string(gh) + "x" + std::to_string(gw) + " token block");
    }
    const EncoderOutput enc = encoder_forward(bind, params, cfg, grid, cfg.encoder_depth, taps);
    pieces.push_back(merge_2x2(bind, enc.final, grid.gh, grid.gw, params.main_merger, cfg));
    if (deepstack) {
      for (std::size_t i = 0; i < 3; ++i)
        tap_tokens[i].push_back(merge_2x2(bind, enc.taps[i], grid.gh, grid.gw, params.deepstack_mergers[i], cfg));
    }
    for (std::size_t k = 0; k < gh * gw; ++k) out.visual_positions.push_back(position + k);
    position += gh * gw;
  }
  if (visual_index != visuals.size()) throw ValidationError("more patch grids than visual elements");

  const Var embeddings = pieces.size() == 1 ? pieces.front() : concat_rows(t, pieces);
  std::vector<Injection> injections;
  if (deepstack && !out.visual_positions.empty()) {
    for (std::size_t i = 0; i < 3; ++i) {
      const Var values = tap_tokens[i].size() == 1 ? tap_tokens[i].front() : concat_rows(t, tap_tokens[i]);
      injections.push_back({cfg.inject_layers[i], values, out.visual_positions});
    }
  }
  out.logits = decoder_forward(bind, params, cfg, embeddings, out.ids, alloc, injections);
  return out;
}

}  // namespace vlmech::vision
