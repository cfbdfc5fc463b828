#include "viapt/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace viapt {

template <typename T>
std::vector<GradCheckEntry> check_gradients(const LossBuilder<T>& loss,
                                            const std::vector<Parameter<T>*>& params, double h) {
  for (auto* p : params)
    if (p->trainable) p->zero_grad();
  {
    Tape<T> tape;
    tape.backward(loss(tape));
  }

  auto evaluate = [&]() {
    Tape<T> tape;
    return static_cast<double>(loss(tape).value().item());
  };

  std::vector<GradCheckEntry> report;
  for (auto* p : params) {
    if (!p->trainable) continue;
    GradCheckEntry e;
    e.name = p->name;
    e.elements = p->value.size();
    std::vector<double> numeric(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T saved = p->value[i];
      p->value[i] = static_cast<T>(saved + h);
      const double up = evaluate();
      p->value[i] = static_cast<T>(saved - h);
      const double down = evaluate();
      p->value[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double scale = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(p->grad[i]))});
      e.max_abs_error =
          std::max(e.max_abs_error, std::abs(numeric[i] - static_cast<double>(p->grad[i])));
    }
    e.max_rel_error = scale > 0 ? e.max_abs_error / scale : 0.0;
    report.push_back(std::move(e));
  }
  return report;
}

template std::vector<GradCheckEntry> check_gradients(const LossBuilder<float>&,
                                                     const std::vector<Parameter<float>*>&, double);
template std::vector<GradCheckEntry> check_gradients(const LossBuilder<double>&,
                                                     const std::vector<Parameter<double>*>&,
                                                     double);

}  // namespace viapt
