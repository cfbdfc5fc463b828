#include "viapt/training/optimizer.hpp"

#include <cmath>

namespace viapt {

template <typename T>
typename AdamState<T>::Moments* AdamState<T>::find(const std::string& name) {
  for (auto& m : moments)
    if (m.name == name) return &m;
  return nullptr;
}

template <typename T>
void optimizer_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr,
                    const AdamWConfig& cfg) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape())
      throw ContractError("gradient shape mismatch for " + p->name);
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in tensor '" + p->name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (auto* p : params) {
    if (!p->trainable) continue;
    auto* mom = state.find(p->name);
    if (!mom) {
      state.moments.push_back({p->name, Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
      mom = &state.moments.back();
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double m = cfg.beta1 * mom->m[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * mom->v[i] + (1.0 - cfg.beta2) * g * g;
      mom->m[i] = static_cast<T>(m);
      mom->v[i] = static_cast<T>(v);
      const double w = static_cast<double>(p->value[i]) * decay;
      p->value[i] = static_cast<T>(w - lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  }
}

template <typename T>
double clip_global_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  double sq = 0;
  for (auto* p : params)
    if (p->trainable)
      for (T g : p->grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      if (p->trainable)
        for (T& g : p->grad.data()) g *= s;
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void optimizer_step(const std::vector<Parameter<float>*>&, AdamState<float>&, double,
                             const AdamWConfig&);
template void optimizer_step(const std::vector<Parameter<double>*>&, AdamState<double>&, double,
                             const AdamWConfig&);
template double clip_global_norm(const std::vector<Parameter<float>*>&, double);
template double clip_global_norm(const std::vector<Parameter<double>*>&, double);

}  // namespace viapt
