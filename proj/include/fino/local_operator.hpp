#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fino/ops.hpp"
#include "fino/rng.hpp"

namespace fino {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

/// Parameters of one Local Operator Block: learned stencil, sigmoid gate,
/// and 1x1 fuse.
///
/// Kernel extents are (2r+1) x (2r+1) in 2-D and 1 x (2r+1) in the 1-D
/// layout (H == 1).
template <typename T>
struct LobParams {
  Var<T> stencil_weights;  // (m, in, kh, kw)
  Var<T> stencil_bias;     // (m)
  Var<T> gate_weights;     // (m, m, kh, kw)
  Var<T> gate_bias;        // (m)
  Var<T> fuse_weights;     // (out, m, 1, 1)
  Var<T> fuse_bias;        // (out)
  std::size_t radius = 1;

  std::size_t in_channels() const { return stencil_weights.shape()[1]; }
  std::size_t stencil_channels() const { return stencil_weights.shape()[0]; }
  std::size_t out_channels() const { return fuse_weights.shape()[0]; }

  /// All-zero parameters with the given geometry (requires_grad set).
  static LobParams zeros(std::size_t in, std::size_t m, std::size_t out, std::size_t radius, std::size_t spatial_dims);

  /// Stencil and gate weights uniform in +-sqrt(3 / fan_in), gate bias +2
  /// so the gate starts mostly open, fuse weights uniform with fan-in scaling.
  static LobParams init(std::size_t in, std::size_t m, std::size_t out, std::size_t radius, std::size_t spatial_dims,
                        Rng& rng);

  void append_params(const std::string& prefix, NamedParams<T>& out) const;
};

/// S(u): radius-r convolution with bias, one response per stencil channel.
template <typename T>
Var<T> stencil_apply(Tape<T>* tape, const Var<T>& u, const LobParams<T>& p, Padding pad = Padding::Periodic);

/// G = sigmoid(W_g * s + gate_bias) (.) s.
template <typename T>
Var<T> gate_apply(Tape<T>* tape, const Var<T>& s, const LobParams<T>& p, Padding pad = Padding::Periodic);

/// Per-site linear combination of gated responses: W_c * g + fuse_bias.
template <typename T>
Var<T> fuse(Tape<T>* tape, const Var<T>& g, const LobParams<T>& p);

/// fuse(gate_apply(stencil_apply(u))): the block's derivative estimate.
template <typename T>
Var<T> lob_forward(Tape<T>* tape, const Var<T>& u, const LobParams<T>& p, Padding pad = Padding::Periodic);

/// Sigmoid gate mask alone, for inspection.
template <typename T>
Tensor<T> gate_mask(const Var<T>& s, const LobParams<T>& p, Padding pad = Padding::Periodic);

/// Receptive radius of one LOB (stencil then gate, both radius r).
inline std::size_t lob_receptive_radius(std::size_t radius) { return 2 * radius; }

/// Uniform fill in [-bound, bound].
template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng);

}  // namespace fino
