#pragma once

#include <cmath>

#include "fino/ops.hpp"

namespace fino {

/// Learnable positive step size, stored as raw = ln(dt) so that
/// dt = exp(raw) stays strictly positive under any optimizer update.
template <typename T>
class LearnableDt {
 public:
  LearnableDt() = default;
  explicit LearnableDt(Var<T> raw) : raw_(std::move(raw)) {}

  /// Current step size as a plain number.
  T value() const { return std::exp(raw_.value()[0]); }

  /// exp(raw) recorded on the tape so the step size receives gradients.
  Var<T> value(Tape<T>* tape) const { return fino::exp(tape, raw_); }

  const Var<T>& raw() const { return raw_; }
  Var<T>& raw() { return raw_; }

 private:
  Var<T> raw_;
};

/// raw = ln(initial); rejects non-positive or non-finite values.
template <typename T>
LearnableDt<T> init_dt(double initial);

/// U + dt * dUdt.
template <typename T>
Var<T> euler_step(Tape<T>* tape, const Var<T>& u, const Var<T>& dudt, const LearnableDt<T>& dt);

}  // namespace fino
