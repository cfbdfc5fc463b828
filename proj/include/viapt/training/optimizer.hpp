#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "viapt/numerics/autodiff.hpp"

namespace viapt {

struct AdamWConfig {
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  struct Moments {
    std::string name;
    Tensor<T> m, v;
  };
  std::uint64_t step = 0;
  std::vector<Moments> moments;  // one per trainable tensor, creation order

  Moments* find(const std::string& name);
};

/// Decoupled AdamW on every trainable parameter: w <- w * (1 - lr * wd),
/// then the bias-corrected adaptive step. Frozen tensors are skipped.
/// Throws NumericError naming the first tensor with a non-finite gradient,
/// before anything is modified.
template <typename T>
void optimizer_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr,
                    const AdamWConfig& cfg = {});

/// Scales all trainable grads so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(const std::vector<Parameter<T>*>& params, double max_norm);

}  // namespace viapt
