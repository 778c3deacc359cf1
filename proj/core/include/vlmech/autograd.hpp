#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "vlmech/tensor.hpp"

namespace vlmech {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode gradient tape.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// topological order of the graph; `backward` walks it once, visiting every
/// node exactly once. Gradient buffers are allocated lazily on first
/// accumulation.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::span<const double> out_grad)>;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op result. `backward` is dropped when no parent requires a
  /// gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Accumulated gradient; zeros when backward never reached `v`.
  Tensor grad(Var v) const;

  /// Mutable gradient buffer for use inside backward closures. Returns an
  /// empty span when `v` does not require a gradient.
  std::span<double> grad_buffer(Var v);

  /// Seeds d(out)/d(out) = 1 and propagates. `out` must hold one element.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace vlmech
