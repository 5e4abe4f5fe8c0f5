#include "fino/time_integrator.hpp"

#include <cmath>

namespace fino {

template <typename T>
LearnableDt<T> init_dt(double initial) {
  if (!(initial > 0.0) || !std::isfinite(initial)) {
    throw ConfigError("initial step size must be positive and finite, got " + std::to_string(initial));
  }
  return LearnableDt<T>(Var<T>(Tensor<T>::scalar(static_cast<T>(std::log(initial))), true));
}

template <typename T>
Var<T> euler_step(Tape<T>* tape, const Var<T>& u, const Var<T>& dudt, const LearnableDt<T>& dt) {
  if (u.shape() != dudt.shape()) {
    throw ShapeError("euler_step: state shape " + shape_str(u.shape()) + " differs from derivative shape " +
                     shape_str(dudt.shape()));
  }
  return add(tape, u, scale(tape, dudt, dt.value(tape)));
}

template LearnableDt<float> init_dt<float>(double);
template LearnableDt<double> init_dt<double>(double);
template Var<float> euler_step<float>(Tape<float>*, const Var<float>&, const Var<float>&, const LearnableDt<float>&);
template Var<double> euler_step<double>(Tape<double>*, const Var<double>&, const Var<double>&,
                                        const LearnableDt<double>&);

}  // namespace fino
