#include "vlmech/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vlmech/errors.hpp"

namespace vlmech {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  const Var out = f(tape, tape.leaf(x, false));
  const double v = tape.value(out).item();
  if (!std::isfinite(v)) throw ValidationError("grad_check: non-finite function value");
  return v;
}

}  // namespace

Tensor tape_gradient(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  const Var leaf = tape.leaf(x, true);
  const Var out = f(tape, leaf);
  if (!tape.value(out).all_finite()) throw ValidationError("grad_check: non-finite function value");
  tape.backward(out);
  Tensor g = tape.grad(leaf);
  if (!g.all_finite()) throw ValidationError("grad_check: non-finite analytic gradient");
  return g;
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ConfigError("grad_check: step must lie in [1e-7, 1e-3]");
  const Tensor analytic = tape_gradient(f, x);
  std::vector<double> probe(x.values());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = evaluate(f, Tensor(x.shape(), probe));
    probe[i] = orig - h;
    const double fm = evaluate(f, Tensor(x.shape(), probe));
    probe[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12));
  }
  return worst;
}

}  // namespace vlmech
