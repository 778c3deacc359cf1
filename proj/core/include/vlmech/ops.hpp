#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vlmech/autograd.hpp"
#include "vlmech/tensor.hpp"

// Dense kernels. Each op has a pure Tensor overload and a Tape overload that
// records the same computation for reverse-mode differentiation. Broadcasting
// is limited to adding a length-`cols` row (bias, layer_norm affine).

namespace vlmech {

// ---- pure kernels -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor gelu(const Tensor& x);

/// Numerically stabilized softmax along `axis` (max subtracted first).
Tensor softmax(const Tensor& x, std::size_t axis);
/// Row softmax of a square score matrix where row i may only attend to
/// columns j <= i. Masked entries are exactly 0.
Tensor causal_softmax(const Tensor& x);
/// Normalizes each row (last axis) to zero mean and unit variance, then
/// applies `gain * xhat + bias`.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Rotates adjacent pairs (x[2i], x[2i+1]) of every row r by the angle whose
/// cosine/sine are cos(r, i), sin(r, i).
Tensor rotate_pairs(const Tensor& x, const Tensor& cos, const Tensor& sin);

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
/// out = base; out[positions[j]] += add[j]. Positions must be distinct.
Tensor scatter_add_rows(const Tensor& base, const Tensor& add, std::span<const std::size_t> positions);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);

/// Per-row softmax cross-entropy: logsumexp(row) - row[target].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets);

// ---- tape ops ---------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
Var add_bias(Tape& t, Var x, Var bias);
Var gelu(Tape& t, Var x);
Var softmax(Tape& t, Var x, std::size_t axis);
Var causal_softmax(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps);
Var rotate_pairs(Tape& t, Var x, const Tensor& cos, const Tensor& sin);
Var gather_rows(Tape& t, Var table, std::vector<std::size_t> index);
Var scatter_add_rows(Tape& t, Var base, Var add, std::vector<std::size_t> positions);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t len);
Var reshape(Tape& t, Var x, Shape shape);
Var cross_entropy_rows(Tape& t, Var logits, std::vector<std::size_t> targets);
/// sum_i weights[i] * x[i]; weights are constants.
Var weighted_sum(Tape& t, Var x, std::vector<double> weights);
Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);

}  // namespace vlmech
