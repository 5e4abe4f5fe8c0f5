#include "fino/model.hpp"

#include <algorithm>
#include <cmath>

namespace fino {

void ModelConfig::validate() const {
  if (spatial_dims != 1 && spatial_dims != 2) throw ConfigError("model.spatial_dims must be 1 or 2");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("model channel counts must be >= 1");
  if (levels < 1) throw ConfigError("model.levels must be >= 1");
  if (channels_per_level.size() != levels + 1) {
    throw ConfigError("model.channels_per_level needs levels + 1 = " + std::to_string(levels + 1) +
                      " entries (encoder widths then bottleneck width), got " +
                      std::to_string(channels_per_level.size()));
  }
  for (std::size_t c : channels_per_level) {
    if (c < 1) throw ConfigError("model.channels_per_level entries must be >= 1");
  }
  if (blocks_per_stage < 1 || blocks_per_stage > 4) throw ConfigError("model.blocks_per_stage must be in 1..4");
  if (radius < 1 || radius > 3) throw ConfigError("model.radius must be in 1..3");
  if (stencil_channels < 1) throw ConfigError("model.stencil_channels must be >= 1");
  if (!(dt_init > 0.0) || !std::isfinite(dt_init)) throw ConfigError("model.dt_init must be positive");
}

template <typename T>
Var<T> FinoBlock<T>::forward(Tape<T>* tape, const Var<T>& u, Padding pad) const {
  Var<T> dudt = lob_forward(tape, u, lob, pad);
  Var<T> advanced = euler_step(tape, u, dudt, dt);
  return relu(tape, conv2d(tape, advanced, proj, Var<T>(), pad));
}

template <typename T>
std::size_t FinoBlock<T>::receptive_radius() const {
  return lob_receptive_radius(lob.radius) + proj.shape()[3] / 2;
}

template <typename T>
Var<T> BlockStack<T>::forward(Tape<T>* tape, const Var<T>& u, Padding pad) const {
  if (blocks.empty()) throw ConfigError("block stack depth must be >= 1");
  Var<T> x = u;
  for (const auto& b : blocks) x = b.forward(tape, x, pad);
  return x;
}

template <typename T>
std::size_t BlockStack<T>::receptive_radius() const {
  std::size_t r = 0;
  for (const auto& b : blocks) r += b.receptive_radius();
  return r;
}

template <typename T>
FinoModel<T>::FinoModel(const ModelConfig& config) : config_(config) {
  config_.validate();
}

template <typename T>
FinoModel<T>::FinoModel(const ModelConfig& config, std::uint64_t seed) : FinoModel(config) {
  Rng rng(seed);
  build(&rng);
}

template <typename T>
FinoModel<T> FinoModel<T>::zeros(const ModelConfig& config) {
  FinoModel m(config);
  m.build(nullptr);
  return m;
}

template <typename T>
void FinoModel<T>::build(Rng* rng) {
  const ModelConfig& c = config_;
  const std::size_t sd = c.spatial_dims;
  auto kernel = [&](std::size_t out, std::size_t in, std::size_t radius, double gain) {
    const std::size_t k = 2 * radius + 1;
    Shape shape{out, in, sd == 2 ? k : 1, k};
    if (!rng) return Var<T>(Tensor<T>(shape), true);
    const double fan_in = static_cast<double>(in * shape[2] * shape[3]);
    return Var<T>(uniform_tensor<T>(shape, std::sqrt(gain / fan_in), *rng), true);
  };
  auto bias = [](std::size_t n) { return Var<T>(Tensor<T>({n}), true); };

  shared_dt_ = init_dt<T>(c.dt_init);
  auto make_stage = [&](std::size_t in, std::size_t width) {
    Stage<T> s;
    s.lift_weight = kernel(width, in, 0, 3.0);
    s.lift_bias = bias(width);
    for (std::size_t i = 0; i < c.blocks_per_stage; ++i) {
      FinoBlock<T> b;
      b.lob = rng ? LobParams<T>::init(width, c.stencil_channels, width, c.radius, sd, *rng)
                  : LobParams<T>::zeros(width, c.stencil_channels, width, c.radius, sd);
      b.dt = c.dt_shared ? shared_dt_ : init_dt<T>(c.dt_init);
      b.proj = kernel(width, width, c.proj_radius, 6.0);
      s.stack.blocks.push_back(std::move(b));
    }
    return s;
  };

  encoder_.clear();
  match_.clear();
  std::size_t in = c.in_channels;
  for (std::size_t l = 0; l < c.levels; ++l) {
    encoder_.push_back(make_stage(in, c.channels_per_level[l]));
    in = c.channels_per_level[l];
  }
  bottleneck_ = make_stage(in, c.channels_per_level[c.levels]);
  for (std::size_t l = 0; l < c.levels; ++l) {
    const std::size_t coarse = c.channels_per_level[l + 1], fine = c.channels_per_level[l];
    match_.push_back(coarse == fine ? Var<T>() : kernel(fine, coarse, 0, 3.0));
  }
  proj_weight_ = kernel(c.out_channels, c.channels_per_level[0], 0, 3.0);
  proj_bias_ = bias(c.out_channels);
}

template <typename T>
EncodedLevel<T> FinoModel<T>::encode(Tape<T>* tape, std::size_t level, const Var<T>& x) const {
  const Stage<T>& s = encoder_.at(level);
  Var<T> lifted = conv2d(tape, x, s.lift_weight, s.lift_bias, config_.padding);
  Var<T> skip = s.stack.forward(tape, lifted, config_.padding);
  Var<T> pooled = avg_pool2(tape, skip, config_.spatial_dims);
  return {skip, pooled};
}

template <typename T>
Var<T> FinoModel<T>::bottleneck(Tape<T>* tape, const Var<T>& x) const {
  Var<T> lifted = conv2d(tape, x, bottleneck_.lift_weight, bottleneck_.lift_bias, config_.padding);
  return bottleneck_.stack.forward(tape, lifted, config_.padding);
}

template <typename T>
Var<T> FinoModel<T>::decode(Tape<T>* tape, const Var<T>& z, const std::vector<Var<T>>& skips) const {
  if (skips.size() != config_.levels) {
    throw ShapeError("decode: expected " + std::to_string(config_.levels) + " skip tensors, got " +
                     std::to_string(skips.size()));
  }
  Var<T> d = z;
  for (std::size_t l = config_.levels; l-- > 0;) {
    d = upsample_nearest2(tape, d, config_.spatial_dims);
    if (match_[l].defined()) d = conv2d(tape, d, match_[l], Var<T>(), config_.padding);
    if (d.shape() != skips[l].shape()) {
      throw ShapeError("decode: skip at level " + std::to_string(l) + " has shape " + shape_str(skips[l].shape()) +
                       " but the upsampled decoder tensor has shape " + shape_str(d.shape()));
    }
    d = add(tape, d, skips[l]);
  }
  return d;
}

template <typename T>
Var<T> FinoModel<T>::forward(Tape<T>* tape, const Var<T>& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("forward: input must be 4-D (b, c, h, w), got " + shape_str(s));
  if (s[1] != config_.in_channels) {
    throw ShapeError("forward: channel axis has " + std::to_string(s[1]) + " entries, model expects " +
                     std::to_string(config_.in_channels));
  }
  const std::size_t factor = std::size_t{1} << config_.levels;
  if (config_.spatial_dims == 1 && s[2] != 1) {
    throw ShapeError("forward: 1-D model requires H == 1, got H = " + std::to_string(s[2]));
  }
  if (config_.spatial_dims == 2 && s[2] % factor != 0) {
    throw ShapeError("forward: extent along H (" + std::to_string(s[2]) + ") is not divisible by 2^levels = " +
                     std::to_string(factor));
  }
  if (s[3] % factor != 0) {
    throw ShapeError("forward: extent along W (" + std::to_string(s[3]) + ") is not divisible by 2^levels = " +
                     std::to_string(factor));
  }
  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (std::size_t l = 0; l < config_.levels; ++l) {
    EncodedLevel<T> e = encode(tape, l, h);
    skips.push_back(e.skip);
    h = e.pooled;
  }
  Var<T> z = bottleneck(tape, h);
  Var<T> d = decode(tape, z, skips);
  return conv2d(tape, d, proj_weight_, proj_bias_, config_.padding);
}

template <typename T>
NamedParams<T> FinoModel<T>::parameters() const {
  NamedParams<T> out;
  auto add_stage = [&](const std::string& prefix, const Stage<T>& s) {
    out.emplace_back(prefix + "lift.weight", s.lift_weight);
    out.emplace_back(prefix + "lift.bias", s.lift_bias);
    for (std::size_t i = 0; i < s.stack.blocks.size(); ++i) {
      const FinoBlock<T>& b = s.stack.blocks[i];
      const std::string bp = prefix + "block" + std::to_string(i) + ".";
      b.lob.append_params(bp + "lob.", out);
      if (!config_.dt_shared) out.emplace_back(bp + "dt.raw", b.dt.raw());
      out.emplace_back(bp + "proj.weight", b.proj);
    }
  };
  for (std::size_t l = 0; l < encoder_.size(); ++l) add_stage("enc" + std::to_string(l) + ".", encoder_[l]);
  add_stage("bottleneck.", bottleneck_);
  for (std::size_t l = 0; l < match_.size(); ++l) {
    if (match_[l].defined()) out.emplace_back("dec" + std::to_string(l) + ".match.weight", match_[l]);
  }
  out.emplace_back("head.weight", proj_weight_);
  out.emplace_back("head.bias", proj_bias_);
  if (config_.dt_shared) out.emplace_back("dt.raw", shared_dt_.raw());
  return out;
}

template <typename T>
std::size_t FinoModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : parameters()) n += v.value().size();
  return n;
}

template <typename T>
void FinoModel<T>::copy_parameters_from(const FinoModel& other) {
  if (!(other.config_ == config_)) throw ConfigError("copy_parameters_from: model configurations differ");
  NamedParams<T> dst = parameters();
  NamedParams<T> src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].second.mutable_value() = src[i].second.value();
}

template <typename T>
FinoModel<T> FinoModel<T>::clone() const {
  FinoModel m = zeros(config_);
  m.copy_parameters_from(*this);
  return m;
}

namespace {

long floor_div2(long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

long stage_radius(const ModelConfig& c) {
  return static_cast<long>(c.blocks_per_stage * (2 * c.radius + c.proj_radius));
}

// Input interval feeding stage `level`'s output interval [lo, hi] (indices at that level's resolution).
DependencyInterval through_stage(const ModelConfig& c, std::size_t level, DependencyInterval iv) {
  iv.lo -= stage_radius(c);
  iv.hi += stage_radius(c);
  if (level == 0) return iv;
  // Stage input is the 2x average pool of the previous level's skip.
  return through_stage(c, level - 1, {2 * iv.lo, 2 * iv.hi + 1});
}

// Input interval feeding the decoder tensor at `level` over [lo, hi].
DependencyInterval through_decoder(const ModelConfig& c, std::size_t level, DependencyInterval iv) {
  if (level == c.levels) return through_stage(c, level, iv);
  const DependencyInterval skip = through_stage(c, level, iv);
  const DependencyInterval up = through_decoder(c, level + 1, {floor_div2(iv.lo), floor_div2(iv.hi)});
  return {std::min(skip.lo, up.lo), std::max(skip.hi, up.hi)};
}

}  // namespace

DependencyInterval dependency_interval(const ModelConfig& config, long site) {
  config.validate();
  return through_decoder(config, 0, {site, site});
}

std::size_t effective_radius(const ModelConfig& config) {
  const long period = 1L << config.levels;
  long r = 0;
  for (long site = 0; site < period; ++site) {
    const DependencyInterval iv = dependency_interval(config, site);
    r = std::max({r, site - iv.lo, iv.hi - site});
  }
  return static_cast<std::size_t>(r);
}

template struct FinoBlock<float>;
template struct FinoBlock<double>;
template struct BlockStack<float>;
template struct BlockStack<double>;
template class FinoModel<float>;
template class FinoModel<double>;

}  // namespace fino
