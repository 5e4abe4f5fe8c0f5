#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fino/local_operator.hpp"
#include "fino/time_integrator.hpp"

namespace fino {

/// Architectural hyperparameters of a FINO network.
struct ModelConfig {
  std::size_t spatial_dims = 1;  // 1: fields stored as (.., 1, W); 2: (.., H, W)
  std::size_t in_channels = 12;  // K_hist * V + 2
  std::size_t out_channels = 1;  // V
  std::size_t levels = 2;        // pooling levels N
  // Widths of encoder stages 0..N-1 followed by the bottleneck width.
  std::vector<std::size_t> channels_per_level = {16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t radius = 1;  // stencil radius r
  std::size_t stencil_channels = 16;  // m
  std::size_t proj_radius = 1;  // W_p is (2 * proj_radius + 1) wide
  Padding padding = Padding::Periodic;
  double dt_init = 0.01;
  bool dt_shared = false;  // one step size for every block instead of one per block

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// One FINO block: ReLU(W_p * [U + dt * LOB(U)]).
template <typename T>
struct FinoBlock {
  LobParams<T> lob;
  LearnableDt<T> dt;
  Var<T> proj;  // W_p, (c, c, kh, kw), no bias

  Var<T> forward(Tape<T>* tape, const Var<T>& u, Padding pad) const;
  std::size_t receptive_radius() const;
};

/// Depth-fold composition of FINO blocks.
template <typename T>
struct BlockStack {
  std::vector<FinoBlock<T>> blocks;

  Var<T> forward(Tape<T>* tape, const Var<T>& u, Padding pad) const;
  std::size_t receptive_radius() const;
};

/// Channel lift (1x1 conv with bias) followed by a block stack.
template <typename T>
struct Stage {
  Var<T> lift_weight;
  Var<T> lift_bias;
  BlockStack<T> stack;
};

/// Output of one encoder level: the pre-pooling skip tensor and the pooled tensor.
template <typename T>
struct EncodedLevel {
  Var<T> skip;
  Var<T> pooled;
};

/// U-Net style FINO network: encoder stages with average pooling, a
/// bottleneck block stack, nearest-neighbour decoder with additive skips,
/// and a 1x1 output projection.
template <typename T>
class FinoModel {
 public:
  FinoModel(const ModelConfig& config, std::uint64_t seed);

  /// Model whose parameters are all zero (including gate biases); the
  /// step sizes still equal config.dt_init.
  static FinoModel zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// (B, in_channels, H, W) -> (B, out_channels, H, W).
  Var<T> forward(Tape<T>* tape, const Var<T>& x) const;

  /// x_{i+1} = avg_pool2(D_i(x_i)).
  EncodedLevel<T> encode(Tape<T>* tape, std::size_t level, const Var<T>& x) const;

  /// z = bottleneck stack applied to the lifted coarsest features.
  Var<T> bottleneck(Tape<T>* tape, const Var<T>& x) const;

  /// Level by level from the coarsest: d = match(upsample(d)) + skip_i.
  Var<T> decode(Tape<T>* tape, const Var<T>& z, const std::vector<Var<T>>& skips) const;

  /// Stable, ordered (name, parameter) list; names are checkpoint keys.
  NamedParams<T> parameters() const;
  std::size_t parameter_count() const;

  std::vector<Stage<T>>& encoder() { return encoder_; }
  const std::vector<Stage<T>>& encoder() const { return encoder_; }
  Stage<T>& bottleneck_stage() { return bottleneck_; }
  const Stage<T>& bottleneck_stage() const { return bottleneck_; }
  std::vector<Var<T>>& match_weights() { return match_; }
  Var<T>& proj_weight() { return proj_weight_; }
  Var<T>& proj_bias() { return proj_bias_; }

  /// Copies parameter values from another model with the same config.
  void copy_parameters_from(const FinoModel& other);
  /// Deep copy with independent parameter storage.
  FinoModel clone() const;

 private:
  explicit FinoModel(const ModelConfig& config);
  void build(Rng* rng);

  ModelConfig config_;
  std::vector<Stage<T>> encoder_;
  Stage<T> bottleneck_;
  std::vector<Var<T>> match_;  // per level; undefined when widths agree
  Var<T> proj_weight_;
  Var<T> proj_bias_;
  LearnableDt<T> shared_dt_;
};

/// Inclusive range of input indices along one spatial axis that can
/// influence output index `site` (unwrapped; reduce modulo the extent for
/// periodic padding).
struct DependencyInterval {
  long lo;
  long hi;
};

/// Exact per-axis dependency interval derived from the configuration,
/// accounting for stencil radii, block depth, pooling alignment and
/// nearest-neighbour upsampling.
DependencyInterval dependency_interval(const ModelConfig& config, long site);

/// Largest one-sided reach of dependency_interval over all sites.
std::size_t effective_radius(const ModelConfig& config);

}  // namespace fino
