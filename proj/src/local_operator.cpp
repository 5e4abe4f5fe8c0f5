#include "fino/local_operator.hpp"

#include <cmath>

namespace fino {

namespace {

Shape kernel_shape(std::size_t out, std::size_t in, std::size_t radius, std::size_t spatial_dims) {
  if (spatial_dims != 1 && spatial_dims != 2) throw ConfigError("spatial_dims must be 1 or 2");
  if (radius < 1) throw ConfigError("stencil radius must be >= 1");
  const std::size_t k = 2 * radius + 1;
  return {out, in, spatial_dims == 2 ? k : 1, k};
}

template <typename T>
Var<T> param(Tensor<T> t) {
  return Var<T>(std::move(t), true);
}

}  // namespace

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (T& e : t.data()) e = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
LobParams<T> LobParams<T>::zeros(std::size_t in, std::size_t m, std::size_t out, std::size_t radius,
                                 std::size_t spatial_dims) {
  if (m < 1) throw ConfigError("stencil channel count m must be >= 1");
  LobParams p;
  p.radius = radius;
  p.stencil_weights = param(Tensor<T>(kernel_shape(m, in, radius, spatial_dims)));
  p.stencil_bias = param(Tensor<T>({m}));
  p.gate_weights = param(Tensor<T>(kernel_shape(m, m, radius, spatial_dims)));
  p.gate_bias = param(Tensor<T>({m}));
  p.fuse_weights = param(Tensor<T>({out, m, 1, 1}));
  p.fuse_bias = param(Tensor<T>({out}));
  return p;
}

template <typename T>
LobParams<T> LobParams<T>::init(std::size_t in, std::size_t m, std::size_t out, std::size_t radius,
                                std::size_t spatial_dims, Rng& rng) {
  LobParams p = zeros(in, m, out, radius, spatial_dims);
  const Shape& ks = p.stencil_weights.shape();
  const double stencil_fan = static_cast<double>(in * ks[2] * ks[3]);
  const double gate_fan = static_cast<double>(m * ks[2] * ks[3]);
  p.stencil_weights.mutable_value() = uniform_tensor<T>(ks, std::sqrt(3.0 / stencil_fan), rng);
  p.gate_weights.mutable_value() = uniform_tensor<T>(p.gate_weights.shape(), std::sqrt(3.0 / gate_fan), rng);
  p.gate_bias.mutable_value().fill(T(2));
  p.fuse_weights.mutable_value() = uniform_tensor<T>(p.fuse_weights.shape(), std::sqrt(3.0 / static_cast<double>(m)), rng);
  return p;
}

template <typename T>
void LobParams<T>::append_params(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + "stencil.weight", stencil_weights);
  out.emplace_back(prefix + "stencil.bias", stencil_bias);
  out.emplace_back(prefix + "gate.weight", gate_weights);
  out.emplace_back(prefix + "gate.bias", gate_bias);
  out.emplace_back(prefix + "fuse.weight", fuse_weights);
  out.emplace_back(prefix + "fuse.bias", fuse_bias);
}

template <typename T>
Var<T> stencil_apply(Tape<T>* tape, const Var<T>& u, const LobParams<T>& p, Padding pad) {
  if (u.shape().size() == 4 && u.shape()[1] != p.in_channels()) {
    throw ShapeError("stencil_apply: input has " + std::to_string(u.shape()[1]) + " channels, block expects " +
                     std::to_string(p.in_channels()));
  }
  return conv2d(tape, u, p.stencil_weights, p.stencil_bias, pad);
}

template <typename T>
Var<T> gate_apply(Tape<T>* tape, const Var<T>& s, const LobParams<T>& p, Padding pad) {
  Var<T> mask = sigmoid(tape, conv2d(tape, s, p.gate_weights, p.gate_bias, pad));
  return mul(tape, mask, s);
}

template <typename T>
Tensor<T> gate_mask(const Var<T>& s, const LobParams<T>& p, Padding pad) {
  return sigmoid<T>(nullptr, conv2d<T>(nullptr, s, p.gate_weights, p.gate_bias, pad)).value();
}

template <typename T>
Var<T> fuse(Tape<T>* tape, const Var<T>& g, const LobParams<T>& p) {
  return conv2d(tape, g, p.fuse_weights, p.fuse_bias, Padding::Zero);
}

template <typename T>
Var<T> lob_forward(Tape<T>* tape, const Var<T>& u, const LobParams<T>& p, Padding pad) {
  return fuse(tape, gate_apply(tape, stencil_apply(tape, u, p, pad), p, pad), p);
}

#define FINO_INSTANTIATE_LOB(T)                                                               \
  template struct LobParams<T>;                                                               \
  template Tensor<T> uniform_tensor<T>(Shape, double, Rng&);                                  \
  template Var<T> stencil_apply<T>(Tape<T>*, const Var<T>&, const LobParams<T>&, Padding);    \
  template Var<T> gate_apply<T>(Tape<T>*, const Var<T>&, const LobParams<T>&, Padding);       \
  template Tensor<T> gate_mask<T>(const Var<T>&, const LobParams<T>&, Padding);               \
  template Var<T> fuse<T>(Tape<T>*, const Var<T>&, const LobParams<T>&);                      \
  template Var<T> lob_forward<T>(Tape<T>*, const Var<T>&, const LobParams<T>&, Padding);

FINO_INSTANTIATE_LOB(float)
FINO_INSTANTIATE_LOB(double)

}  // namespace fino
