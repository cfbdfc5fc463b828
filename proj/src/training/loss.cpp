#include "viapt/training/loss.hpp"

#include <string>

#include "viapt/numerics/ops.hpp"
#include "viapt/prompt/generator.hpp"

namespace viapt {

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  const std::size_t classes = logits.value().size();
  if (label >= classes) {
    throw InputError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
  return ops::scale(ops::pick(ops::log_softmax(logits), label), T(-1));
}

template <typename T>
SampleObjective<T> sample_objective(const Var<T>& logits, std::size_t label, const Var<T>& mu,
                                    const Var<T>& logvar, double beta, std::size_t batch) {
  if (!logits.value().all_finite()) throw NumericError("non-finite logits");
  SampleObjective<T> out;
  auto xent = cross_entropy(logits, label);
  out.xent = static_cast<double>(xent.value().item());
  Var<T> total = xent;
  if (mu.valid()) {
    auto kl = kl_to_standard_normal(mu, logvar);
    out.kl = static_cast<double>(kl.value().item());
    if (beta != 0.0) total = ops::add(xent, ops::scale(kl, static_cast<T>(beta)));
  }
  out.objective = ops::scale(total, T(1) / static_cast<T>(batch));
  const auto& v = logits.value();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[arg]) arg = i;
  out.correct = arg == label;
  return out;
}

LossValue LossAccumulator::finish(double beta) const {
  LossValue v;
  if (n_ == 0) return v;
  v.xent = xent_ / static_cast<double>(n_);
  v.kl = kl_ / static_cast<double>(n_);
  v.total = v.xent + beta * v.kl;
  return v;
}

template Var<float> cross_entropy(const Var<float>&, std::size_t);
template Var<double> cross_entropy(const Var<double>&, std::size_t);
template SampleObjective<float> sample_objective(const Var<float>&, std::size_t, const Var<float>&,
                                                 const Var<float>&, double, std::size_t);
template SampleObjective<double> sample_objective(const Var<double>&, std::size_t,
                                                  const Var<double>&, const Var<double>&, double,
                                                  std::size_t);

}  // namespace viapt
