#pragma once

#include <functional>
#include <string>
#include <vector>

#include "viapt/numerics/autodiff.hpp"

namespace viapt {

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_abs_error = 0;
  /// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf), i.e. the
  /// error relative to the tensor's gradient scale.
  double max_rel_error = 0;
};

/// Builds a scalar loss on the given tape, reading parameters through
/// tape.param(). Must be a deterministic function of the parameter values.
template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>&)>;

/// Compares reverse-mode gradients against central differences with step h
/// for every trainable parameter in `params`. Parameter grads are zeroed
/// before and left holding the analytic gradient afterwards.
template <typename T>
std::vector<GradCheckEntry> check_gradients(const LossBuilder<T>& loss,
                                            const std::vector<Parameter<T>*>& params,
                                            double h = 1e-5);

}  // namespace viapt
