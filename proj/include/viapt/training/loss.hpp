#pragma once

#include <cstddef>

#include "viapt/numerics/autodiff.hpp"

namespace viapt {

struct LossValue {
  double total = 0;
  double xent = 0;
  double kl = 0;
};

/// -log softmax(logits)[label]. Throws InputError if label is out of range.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label);

/// One instance's share of the batch objective, (xent + beta * kl) / batch,
/// ready for backward on its own tape. `mu`/`logvar` may be invalid Vars
/// (no instance prompts), in which case kl is exactly 0.
template <typename T>
struct SampleObjective {
  Var<T> objective;
  double xent = 0;
  double kl = 0;
  bool correct = false;
};

template <typename T>
SampleObjective<T> sample_objective(const Var<T>& logits, std::size_t label, const Var<T>& mu,
                                    const Var<T>& logvar, double beta, std::size_t batch);

/// Batch means accumulated in insertion order.
class LossAccumulator {
 public:
  void add(double xent, double kl) {
    xent_ += xent;
    kl_ += kl;
    ++n_;
  }
  std::size_t count() const { return n_; }
  LossValue finish(double beta) const;

 private:
  double xent_ = 0, kl_ = 0;
  std::size_t n_ = 0;
};

}  // namespace viapt
