#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlmech/autograd.hpp"
#include "vlmech/mrope.hpp"
#include "vlmech/sequence.hpp"
#include "vlmech/tensor.hpp"

namespace vlmech::vision {

/// Vision-encoder layers whose outputs feed the DeepStack mergers.
struct TapSet {
  std::array<std::size_t, 3> levels{};

  /// Throws ConfigError unless 0 <= l0 < l1 < l2 < depth.
  static TapSet make(std::array<std::size_t, 3> levels, std::size_t depth);
  /// depth/4, depth/2, 3*depth/4 (rounded down). Needs depth >= 3.
  static TapSet evenly_spaced(std::size_t depth);
};

/// Where DeepStack additions land relative to the mapped decoder layer.
enum class InjectionMode { pre_layer, post_layer };

std::string_view to_string(InjectionMode mode);

struct ModelConfig {
  std::size_t encoder_depth = 4;
  std::size_t decoder_depth = 4;
  std::size_t dim = 16;      // vision feature width
  std::size_t llm_dim = 16;  // decoder hidden width
  std::size_t head_dim = 8;  // shared by encoder and decoder heads
  std::array<std::size_t, 3> taps{1, 2, 3};
  std::array<std::size_t, 3> inject_layers{0, 1, 2};
  std::size_t vocab = 260;
  double rope_base = 10000.0;
  std::size_t mlp_ratio = 2;
  std::size_t pos_table = 4;  // learned absolute table is pos_table x pos_table
  double ln_eps = 1e-6;
  InjectionMode injection = InjectionMode::pre_layer;
  bool normalize_taps = false;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  std::size_t encoder_heads() const { return dim / head_dim; }
  std::size_t decoder_heads() const { return llm_dim / head_dim; }

  std::string to_json() const;
  /// Accepts the keys written by to_json; missing optional keys keep their
  /// defaults. `taps` defaults to TapSet::evenly_spaced(encoder_depth).
  static ModelConfig from_json(std::string_view text);
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct Mlp {
  Linear fc1;
  Linear fc2;
};

struct Block {
  Tensor ln1_gain, ln1_bias;
  Linear q, k, v, o;
  Tensor ln2_gain, ln2_bias;
  Mlp mlp;
};

/// Two-layer projection from a 2x2 patch block (4 * dim) to llm_dim. The
/// layer norm is only used when ModelConfig::normalize_taps is set.
struct Merger {
  Tensor ln_gain, ln_bias;
  Mlp mlp;
};

struct EncoderParams {
  Tensor pos_table;  // [pos_table x pos_table x dim]
  std::vector<Block> blocks;
};

struct DecoderParams {
  Tensor embedding;  // [vocab x llm_dim]
  std::vector<Block> blocks;
  Tensor final_gain, final_bias;
  Linear lm_head;
};

enum class ParamGroup { encoder, merger, decoder };

std::string_view to_string(ParamGroup group);
ParamGroup parse_param_group(std::string_view name);

struct ModelParams {
  EncoderParams encoder;
  Merger main_merger;
  std::array<Merger, 3> deepstack_mergers;
  DecoderParams decoder;

  /// Calls f(name, group, tensor) for every parameter in a fixed order.
  template <class F>
  void visit(F&& f);
  template <class F>
  void visit(F&& f) const;
};

enum class Init { random, zeros };

/// Seeded initialization. `Init::zeros` zeroes every weight and bias while
/// keeping layer-norm gains at 1, making every residual branch vanish.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, Init init = Init::random);

/// Binds parameter tensors to tape leaves, creating each leaf once.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape) : tape_(tape) {}

  Var operator()(const Tensor& param);
  std::optional<Var> find(const Tensor& param) const;
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  std::unordered_map<const Tensor*, Var> bound_;
};

/// Patch features on a gh x gw grid, row-major.
struct PatchGrid {
  std::size_t gh = 0;
  std::size_t gw = 0;
  Tensor features;  // [gh*gw x dim]

  void validate(std::size_t dim) const;
};

// ---- position embedding -----------------------------------------------------

/// [gh*gw x th*tw] bilinear resampling weights (corner-aligned: the first
/// and last rows/cols of source and target coincide).
Tensor bilinear_weights(std::size_t th, std::size_t tw, std::size_t gh, std::size_t gw);

/// Resamples a [th x tw x dim] table to [gh x gw x dim], per channel.
Tensor interpolate_pos_embed(const Tensor& table, std::size_t gh, std::size_t gw);
/// Tape version; returns the resampled table flattened to [gh*gw x dim].
Var interpolate_pos_embed(Tape& tape, Var table, std::size_t gh, std::size_t gw);

// ---- encoder ----------------------------------------------------------------

struct EncoderOutput {
  std::array<Var, 3> taps;
  Var final;
};

/// Runs the first `depth` encoder blocks (bidirectional attention with 2D
/// rotary ids (0, row, col)) and returns the post-block hidden states at
/// the tap levels plus the last block's output.
EncoderOutput encoder_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg,
                              const PatchGrid& grid, std::size_t depth, const TapSet& taps);
std::array<Tensor, 3> encoder_forward(const ModelParams& params, const ModelConfig& cfg, const PatchGrid& grid,
                                      std::size_t depth, const TapSet& taps);

// ---- merger -----------------------------------------------------------------

/// Row order that lists each 2x2 block's four patches consecutively
/// (top-left, top-right, bottom-left, bottom-right), blocks row-major.
/// Throws ValidationError for odd gh or gw.
std::vector<std::size_t> merge_order(std::size_t gh, std::size_t gw);

/// Concatenates each 2x2 block's four feature vectors and applies
/// linear -> GELU -> linear. Output has gh*gw/4 rows of width llm_dim.
Var merge_2x2(ParamBinder& bind, Var features, std::size_t gh, std::size_t gw, const Merger& merger,
              const ModelConfig& cfg);
Tensor merge_2x2(const Tensor& features, std::size_t gh, std::size_t gw, const Merger& merger,
                 const ModelConfig& cfg);

// ---- DeepStack --------------------------------------------------------------

/// hidden with hidden[positions[j]] += injected[j]. Positions must be
/// distinct and inside the sequence.
Tensor deepstack_inject(const Tensor& hidden, const Tensor& injected, std::span<const std::size_t> positions);
Var deepstack_inject(Tape& tape, Var hidden, Var injected, std::vector<std::size_t> positions);

struct Injection {
  std::size_t layer = 0;
  Var values;
  std::vector<std::size_t> positions;
};

struct TensorInjection {
  std::size_t layer = 0;
  Tensor values;
  std::vector<std::size_t> positions;
};

// ---- decoder ----------------------------------------------------------------

/// Pre-norm causal transformer over `embeddings` [seq x llm_dim] with MRoPE
/// on queries and keys. Each injection is added at its layer's input
/// (or output, in post_layer mode). Returns logits [seq x vocab].
Var decoder_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg, Var embeddings,
                    const std::vector<PositionId>& ids, const FrequencyAllocation& alloc,
                    const std::vector<Injection>& injections);
Tensor decoder_forward(const ModelParams& params, const ModelConfig& cfg, const Tensor& embeddings,
                       const std::vector<PositionId>& ids, const FrequencyAllocation& alloc,
                       const std::vector<TensorInjection>& injections);

// ---- full model -------------------------------------------------------------

struct ModelOutput {
  Var logits;
  std::vector<PositionId> ids;
  std::vector<std::size_t> visual_positions;
};

/// Embeds text tokens, encodes one patch grid per visual element (image or
/// frame group, each a 2gh x 2gw patch grid for a gh x gw token block),
/// merges the final encoder layer into visual tokens, and when `deepstack`
/// is set injects the three tap mergers' outputs at the visual positions.
ModelOutput model_forward(ParamBinder& bind, const ModelParams& params, const ModelConfig& cfg,
                          const MultimodalSequence& seq, std::span<const PatchGrid> visuals,
                          const FrequencyAllocation& alloc, bool deepstack = true);

// ---- visit implementation ---------------------------------------------------

namespace detail {

template <class F, class Self>
void visit_params(Self& self, F&& f) {
  auto linear = [&](const std::string& name, ParamGroup g, auto& l) {
    f(name + ".weight", g, l.weight);
    f(name + ".bias", g, l.bias);
  };
  auto mlp = [&](const std::string& name, ParamGroup g, auto& m) {
    linear(name + ".fc1", g, m.fc1);
    linear(name + ".fc2", g, m.fc2);
  };
  auto block = [&](const std::string& name, ParamGroup g, auto& b) {
    f(name + ".ln1.gain", g, b.ln1_gain);
    f(name + ".ln1.bias", g, b.ln1_bias);
    linear(name + ".attn.q", g, b.q);
    linear(name + ".attn.k", g, b.k);
    linear(name + ".attn.v", g, b.v);
    linear(name + ".attn.o", g, b.o);
    f(name + ".ln2.gain", g, b.ln2_gain);
    f(name + ".ln2.bias", g, b.ln2_bias);
    mlp(name + ".mlp", g, b.mlp);
  };
  auto merger = [&](const std::string& name, auto& m) {
    f(name + ".ln.gain", ParamGroup::merger, m.ln_gain);
    f(name + ".ln.bias", ParamGroup::merger, m.ln_bias);
    mlp(name, ParamGroup::merger, m.mlp);
  };

  f(std::string("encoder.pos_table"), ParamGroup::encoder, self.encoder.pos_table);
  for (std::size_t i = 0; i < self.encoder.blocks.size(); ++i)
    block("encoder.blocks." + std::to_string(i), ParamGroup::encoder, self.encoder.blocks[i]);
  merger("merger.main", self.main_merger);
  for (std::size_t i = 0; i < self.deepstack_mergers.size(); ++i)
    merger("merger.deepstack." + std::to_string(i), self.deepstack_mergers[i]);
  f(std::string("decoder.embedding"), ParamGroup::decoder, self.decoder.embedding);
  for (std::size_t i = 0; i < self.decoder.blocks.size(); ++i)
    block("decoder.blocks." + std::to_string(i), ParamGroup::decoder, self.decoder.blocks[i]);
  f(std::string("decoder.final_ln.gain"), ParamGroup::decoder, self.decoder.final_gain);
  f(std::string("decoder.final_ln.bias"), ParamGroup::decoder, self.decoder.final_bias);
  linear("decoder.lm_head", ParamGroup::decoder, self.decoder.lm_head);
}

}  // namespace detail

template <class F>
void ModelParams::visit(F&& f) {
  detail::visit_params(*this, std::forward<F>(f));
}

template <class F>
void ModelParams::visit(F&& f) const {
  detail::visit_params(*this, std::forward<F>(f));
}

}  // namespace vlmech::vision
