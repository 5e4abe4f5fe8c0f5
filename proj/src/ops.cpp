#include "fino/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace fino {

const char* padding_name(Padding p) { return p == Padding::Periodic ? "periodic" : "zero"; }

Padding parse_padding(const std::string& s) {
  if (s == "periodic") return Padding::Periodic;
  if (s == "zero") return Padding::Zero;
  throw ConfigError("unknown padding mode '" + s + "' (expected 'periodic' or 'zero')");
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
bool tracks(Tape<T>* tape, std::initializer_list<const Var<T>*> inputs) {
  if (!tape) return false;
  for (const Var<T>* v : inputs) {
    if (v->defined() && v->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank4(const char* op, const char* what, const Shape& s) {
  if (s.size() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be 4-D (b, c, h, w), got " + shape_str(s));
  }
}

template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(std::size_t n, const T* __restrict x, const T* __restrict y) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

inline std::size_t wrap(long i, long n) { return static_cast<std::size_t>(((i % n) + n) % n); }

// Copies x into a (H + 2rh) x (W + 2rw) buffer per (b, c) plane, filling the
// halo according to the padding rule.
template <typename T>
std::vector<T> pad_planes(const Tensor<T>& x, std::size_t rh, std::size_t rw, Padding pad) {
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Hp = H + 2 * rh, Wp = W + 2 * rw;
  std::vector<T> out(planes * Hp * Wp, T(0));
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.ptr() + pl * H * W;
    T* dst = out.data() + pl * Hp * Wp;
    for (std::size_t hp = 0; hp < Hp; ++hp) {
      const long h = static_cast<long>(hp) - static_cast<long>(rh);
      if (pad == Padding::Zero && (h < 0 || h >= static_cast<long>(H))) continue;
      const std::size_t hs = wrap(h, static_cast<long>(H));
      for (std::size_t wp = 0; wp < Wp; ++wp) {
        const long w = static_cast<long>(wp) - static_cast<long>(rw);
        if (pad == Padding::Zero && (w < 0 || w >= static_cast<long>(W))) continue;
        dst[hp * Wp + wp] = src[hs * W + wrap(w, static_cast<long>(W))];
      }
    }
  }
  return out;
}

// Adjoint of pad_planes: folds halo gradients back onto the interior.
template <typename T>
Tensor<T> fold_planes(const std::vector<T>& gpad, const Shape& shape, std::size_t rh, std::size_t rw, Padding pad) {
  Tensor<T> gx(shape);
  const std::size_t planes = shape[0] * shape[1], H = shape[2], W = shape[3];
  const std::size_t Hp = H + 2 * rh, Wp = W + 2 * rw;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = gpad.data() + pl * Hp * Wp;
    T* dst = gx.ptr() + pl * H * W;
    for (std::size_t hp = 0; hp < Hp; ++hp) {
      const long h = static_cast<long>(hp) - static_cast<long>(rh);
      if (pad == Padding::Zero && (h < 0 || h >= static_cast<long>(H))) continue;
      const std::size_t hs = wrap(h, static_cast<long>(H));
      for (std::size_t wp = 0; wp < Wp; ++wp) {
        const long w = static_cast<long>(wp) - static_cast<long>(rw);
        if (pad == Padding::Zero && (w < 0 || w >= static_cast<long>(W))) continue;
        dst[hs * W + wrap(w, static_cast<long>(W))] += src[hp * Wp + wp];
      }
    }
  }
  return gx;
}

template <typename T>
Var<T> unary(Tape<T>* tape, const char* name, const Var<T>& x, Tensor<T> value,
             std::function<void(const Tensor<T>& g, const Tensor<T>& out, Tensor<T>& gx)> grad_fn) {
  const bool track = tracks(tape, {&x});
  Var<T> out(std::move(value), track);
  if (track) {
    NodePtr<T> xn = x.node(), on = out.node();
    tape->record(name, {xn}, on, [xn, on, grad_fn]() {
      Tensor<T> gx(xn->value.shape());
      grad_fn(on->grad, on->value, gx);
      xn->accumulate(gx);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding pad) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  require_rank4<T>("conv2d", "input", xs);
  require_rank4<T>("conv2d", "kernel", ks);
  if (ks[1] != xs[1]) {
    throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(xs[1]) +
                     " channels but kernel expects " + std::to_string(ks[1]));
  }
  if (ks[2] % 2 == 0) throw ShapeError("conv2d: kernel extent along H is even (" + std::to_string(ks[2]) + ")");
  if (ks[3] % 2 == 0) throw ShapeError("conv2d: kernel extent along W is even (" + std::to_string(ks[3]) + ")");
  if (bias.defined() && bias.shape() != Shape{ks[0]}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match output channels " +
                     std::to_string(ks[0]));
  }
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ks[0], KH = ks[2], KW = ks[3];
  const std::size_t rh = KH / 2, rw = KW / 2, Hp = H + 2 * rh, Wp = W + 2 * rw;

  auto padded = std::make_shared<std::vector<T>>(pad_planes(x.value(), rh, rw, pad));
  Tensor<T> out({B, O, H, W});
  const T* kp = kernel.value().ptr();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      T* dst = out.ptr() + (b * O + o) * H * W;
      if (bias.defined()) std::fill(dst, dst + H * W, bias.value()[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const T* src = padded->data() + (b * C + c) * Hp * Wp;
        const T* kk = kp + (o * C + c) * KH * KW;
        for (std::size_t p = 0; p < KH; ++p) {
          for (std::size_t q = 0; q < KW; ++q) {
            const T kv = kk[p * KW + q];
            for (std::size_t h = 0; h < H; ++h) axpy(W, kv, src + (h + p) * Wp + q, dst + h * W);
          }
        }
      }
    }
  }

  const bool track = tracks(tape, {&x, &kernel, &bias});
  Var<T> result(std::move(out), track);
  if (track) {
    NodePtr<T> xn = x.node(), kn = kernel.node(), bn = bias.node(), on = result.node();
    tape->record("conv2d", {xn, kn, bn}, on, [=]() {
      const T* g = on->grad.ptr();
      if (xn->requires_grad) {
        std::vector<T> gpad(B * C * Hp * Wp, T(0));
        const T* kp2 = kn->value.ptr();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            T* gdst = gpad.data() + (b * C + c) * Hp * Wp;
            for (std::size_t o = 0; o < O; ++o) {
              const T* gsrc = g + (b * O + o) * H * W;
              const T* kk = kp2 + (o * C + c) * KH * KW;
              for (std::size_t p = 0; p < KH; ++p) {
                for (std::size_t q = 0; q < KW; ++q) {
                  const T kv = kk[p * KW + q];
                  for (std::size_t h = 0; h < H; ++h) axpy(W, kv, gsrc + h * W, gdst + (h + p) * Wp + q);
                }
              }
            }
          }
        }
        xn->accumulate(fold_planes(gpad, xn->value.shape(), rh, rw, pad));
      }
      if (kn->requires_grad) {
        Tensor<T> gk(kn->value.shape());
        for (std::size_t o = 0; o < O; ++o) {
          for (std::size_t c = 0; c < C; ++c) {
            T* gkk = gk.ptr() + (o * C + c) * KH * KW;
            for (std::size_t b = 0; b < B; ++b) {
              const T* gsrc = g + (b * O + o) * H * W;
              const T* src = padded->data() + (b * C + c) * Hp * Wp;
              for (std::size_t p = 0; p < KH; ++p) {
                for (std::size_t q = 0; q < KW; ++q) {
                  T acc = T(0);
                  for (std::size_t h = 0; h < H; ++h) acc += dot(W, gsrc + h * W, src + (h + p) * Wp + q);
                  gkk[p * KW + q] += acc;
                }
              }
            }
          }
        }
        kn->accumulate(gk);
      }
      if (bn && bn->requires_grad) {
        Tensor<T> gb(bn->value.shape());
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < O; ++o) {
            const T* gsrc = g + (b * O + o) * H * W;
            T acc = T(0);
            for (std::size_t i = 0; i < H * W; ++i) acc += gsrc[i];
            gb[o] += acc;
          }
        }
        bn->accumulate(gb);
      }
    });
  }
  return result;
}

template <typename T>
Var<T> relu(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> v = x.value();
  for (T& e : v.data()) e = e > T(0) ? e : T(0);
  return unary<T>(tape, "relu", x, std::move(v), [](const Tensor<T>& g, const Tensor<T>& out, Tensor<T>& gx) {
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = out[i] > T(0) ? g[i] : T(0);
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> v = x.value();
  for (T& e : v.data()) {
    if (e >= T(0)) {
      e = T(1) / (T(1) + std::exp(-e));
    } else {
      const T z = std::exp(e);
      e = z / (T(1) + z);
    }
  }
  return unary<T>(tape, "sigmoid", x, std::move(v), [](const Tensor<T>& g, const Tensor<T>& out, Tensor<T>& gx) {
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * out[i] * (T(1) - out[i]);
  });
}

template <typename T>
Var<T> exp(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> v = x.value();
  for (T& e : v.data()) e = std::exp(e);
  return unary<T>(tape, "exp", x, std::move(v), [](const Tensor<T>& g, const Tensor<T>& out, Tensor<T>& gx) {
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * out[i];
  });
}

template <typename T>
Var<T> scale(Tape<T>* tape, const Var<T>& x, T c) {
  Tensor<T> v = x.value();
  for (T& e : v.data()) e *= c;
  return unary<T>(tape, "scale_const", x, std::move(v), [c](const Tensor<T>& g, const Tensor<T>&, Tensor<T>& gx) {
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = c * g[i];
  });
}

template <typename T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> v = a.value();
  const T* bp = b.value().ptr();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bp[i];
  const bool track = tracks(tape, {&a, &b});
  Var<T> out(std::move(v), track);
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    tape->record("add", {an, bn}, on, [an, bn, on]() {
      if (an->requires_grad) an->accumulate(on->grad);
      if (bn->requires_grad) bn->accumulate(on->grad);
    });
  }
  return out;
}

template <typename T>
Var<T> sub(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> v = a.value();
  const T* bp = b.value().ptr();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bp[i];
  const bool track = tracks(tape, {&a, &b});
  Var<T> out(std::move(v), track);
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    tape->record("sub", {an, bn}, on, [an, bn, on]() {
      if (an->requires_grad) an->accumulate(on->grad);
      if (bn->requires_grad) {
        Tensor<T> gb = on->grad;
        for (T& e : gb.data()) e = -e;
        bn->accumulate(gb);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mul(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> v = a.value();
  const T* bp = b.value().ptr();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bp[i];
  const bool track = tracks(tape, {&a, &b});
  Var<T> out(std::move(v), track);
  if (track) {
    NodePtr<T> an = a.node(), bn = b.node(), on = out.node();
    tape->record("mul", {an, bn}, on, [an, bn, on]() {
      const Tensor<T>& g = on->grad;
      if (an->requires_grad) {
        Tensor<T> ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bn->value[i];
        an->accumulate(ga);
      }
      if (bn->requires_grad) {
        Tensor<T> gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * an->value[i];
        bn->accumulate(gb);
      }
    });
  }
  return out;
}

template <typename T>
Var<T> scale(Tape<T>* tape, const Var<T>& x, const Var<T>& s) {
  if (s.value().size() != 1) throw ShapeError("scale: factor must have one element, got " + shape_str(s.shape()));
  const T sv = s.value()[0];
  Tensor<T> v = x.value();
  for (T& e : v.data()) e *= sv;
  const bool track = tracks(tape, {&x, &s});
  Var<T> out(std::move(v), track);
  if (track) {
    NodePtr<T> xn = x.node(), sn = s.node(), on = out.node();
    tape->record("scale", {xn, sn}, on, [xn, sn, on]() {
      const Tensor<T>& g = on->grad;
      if (xn->requires_grad) {
        Tensor<T> gx(g.shape());
        const T f = sn->value[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = f * g[i];
        xn->accumulate(gx);
      }
      if (sn->requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xn->value[i];
        sn->accumulate(Tensor<T>(sn->value.shape(), acc));
      }
    });
  }
  return out;
}

namespace {

struct PoolGeometry {
  std::size_t fh, fw;  // pooling factors along H and W
};

PoolGeometry pool_geometry(const char* op, std::size_t spatial_dims, std::size_t H) {
  if (spatial_dims == 2) return {2, 2};
  if (spatial_dims == 1) {
    if (H != 1) throw ShapeError(std::string(op) + ": 1-D layout requires H == 1, got H = " + std::to_string(H));
    return {1, 2};
  }
  throw ShapeError(std::string(op) + ": spatial_dims must be 1 or 2");
}

}  // namespace

template <typename T>
Var<T> avg_pool2(Tape<T>* tape, const Var<T>& x, std::size_t spatial_dims) {
  require_rank4<T>("avg_pool2", "input", x.shape());
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const auto [fh, fw] = pool_geometry("avg_pool2", spatial_dims, H);
  if (fh == 2 && H % 2 != 0) throw ShapeError("avg_pool2: odd extent along H (" + std::to_string(H) + ")");
  if (W % 2 != 0) throw ShapeError("avg_pool2: odd extent along W (" + std::to_string(W) + ")");
  const std::size_t Ho = H / fh, Wo = W / fw;
  const T inv = T(1) / static_cast<T>(fh * fw);
  Tensor<T> v({B, C, Ho, Wo});
  const T* src = x.value().ptr();
  for (std::size_t pl = 0; pl < B * C; ++pl) {
    for (std::size_t ho = 0; ho < Ho; ++ho) {
      for (std::size_t wo = 0; wo < Wo; ++wo) {
        T acc = T(0);
        for (std::size_t a = 0; a < fh; ++a)
          for (std::size_t c = 0; c < fw; ++c) acc += src[(pl * H + ho * fh + a) * W + wo * fw + c];
        v[(pl * Ho + ho) * Wo + wo] = acc * inv;
      }
    }
  }
  return unary<T>(tape, "avg_pool2", x, std::move(v),
                  [=](const Tensor<T>& g, const Tensor<T>&, Tensor<T>& gx) {
                    for (std::size_t pl = 0; pl < B * C; ++pl)
                      for (std::size_t h = 0; h < H; ++h)
                        for (std::size_t w = 0; w < W; ++w)
                          gx[(pl * H + h) * W + w] = g[(pl * Ho + h / fh) * Wo + w / fw] * inv;
                  });
}

template <typename T>
Var<T> upsample_nearest2(Tape<T>* tape, const Var<T>& x, std::size_t spatial_dims) {
  require_rank4<T>("upsample_nearest2", "input", x.shape());
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const auto [fh, fw] = pool_geometry("upsample_nearest2", spatial_dims, H);
  const std::size_t Ho = H * fh, Wo = W * fw;
  Tensor<T> v({B, C, Ho, Wo});
  const T* src = x.value().ptr();
  for (std::size_t pl = 0; pl < B * C; ++pl)
    for (std::size_t h = 0; h < Ho; ++h)
      for (std::size_t w = 0; w < Wo; ++w) v[(pl * Ho + h) * Wo + w] = src[(pl * H + h / fh) * W + w / fw];
  return unary<T>(tape, "upsample_nearest2", x, std::move(v),
                  [=](const Tensor<T>& g, const Tensor<T>&, Tensor<T>& gx) {
                    for (std::size_t pl = 0; pl < B * C; ++pl)
                      for (std::size_t h = 0; h < Ho; ++h)
                        for (std::size_t w = 0; w < Wo; ++w)
                          gx[(pl * H + h / fh) * W + w / fw] += g[(pl * Ho + h) * Wo + w];
                  });
}

template <typename T>
Var<T> concat_channels(Tape<T>* tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  require_rank4<T>("concat_channels", "input", s0);
  std::size_t C = 0;
  bool track = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    require_rank4<T>("concat_channels", "input", s);
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " + shape_str(s) +
                       ", incompatible with " + shape_str(s0) + " outside the channel axis");
    }
    C += s[1];
    track = track || (tape && parts[i].requires_grad());
  }
  const std::size_t B = s0[0], plane = s0[2] * s0[3];
  Tensor<T> v({B, C, s0[2], s0[3]});
  std::size_t offset = 0;
  for (const auto& part : parts) {
    const std::size_t ci = part.shape()[1];
    for (std::size_t b = 0; b < B; ++b) {
      const T* src = part.value().ptr() + b * ci * plane;
      std::copy(src, src + ci * plane, v.ptr() + (b * C + offset) * plane);
    }
    offset += ci;
  }
  Var<T> out(std::move(v), track);
  if (track) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr<T> on = out.node();
    tape->record("concat_channels", nodes, on, [nodes, on, B, C, plane]() {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t ci = n->value.dim(1);
        if (n->requires_grad) {
          Tensor<T> gi(n->value.shape());
          for (std::size_t b = 0; b < B; ++b) {
            const T* src = on->grad.ptr() + (b * C + off) * plane;
            std::copy(src, src + ci * plane, gi.ptr() + b * ci * plane);
          }
          n->accumulate(gi);
        }
        off += ci;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> sum(Tape<T>* tape, const Var<T>& x) {
  T acc = T(0);
  for (T e : x.value().data()) acc += e;
  return unary<T>(tape, "sum", x, Tensor<T>::scalar(acc), [](const Tensor<T>& g, const Tensor<T>&, Tensor<T>& gx) {
    gx.fill(g[0]);
  });
}

template <typename T>
Var<T> sum_squares(Tape<T>* tape, const Var<T>& x) {
  T acc = T(0);
  for (T e : x.value().data()) acc += e * e;
  NodePtr<T> xn = x.node();
  return unary<T>(tape, "sum_squares", x, Tensor<T>::scalar(acc),
                  [xn](const Tensor<T>& g, const Tensor<T>&, Tensor<T>& gx) {
                    const T f = T(2) * g[0];
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = f * xn->value[i];
                  });
}

#define FINO_INSTANTIATE_OPS(T)                                                                \
  template Var<T> conv2d<T>(Tape<T>*, const Var<T>&, const Var<T>&, const Var<T>&, Padding); \
  template Var<T> relu<T>(Tape<T>*, const Var<T>&);                                          \
  template Var<T> sigmoid<T>(Tape<T>*, const Var<T>&);                                       \
  template Var<T> exp<T>(Tape<T>*, const Var<T>&);                                           \
  template Var<T> add<T>(Tape<T>*, const Var<T>&, const Var<T>&);                            \
  template Var<T> sub<T>(Tape<T>*, const Var<T>&, const Var<T>&);                            \
  template Var<T> mul<T>(Tape<T>*, const Var<T>&, const Var<T>&);                            \
  template Var<T> scale<T>(Tape<T>*, const Var<T>&, const Var<T>&);                          \
  template Var<T> scale<T>(Tape<T>*, const Var<T>&, T);                                      \
  template Var<T> avg_pool2<T>(Tape<T>*, const Var<T>&, std::size_t);                        \
  template Var<T> upsample_nearest2<T>(Tape<T>*, const Var<T>&, std::size_t);                \
  template Var<T> concat_channels<T>(Tape<T>*, const std::vector<Var<T>>&);                  \
  template Var<T> sum<T>(Tape<T>*, const Var<T>&);                                           \
  template Var<T> sum_squares<T>(Tape<T>*, const Var<T>&);

FINO_INSTANTIATE_OPS(float)
FINO_INSTANTIATE_OPS(double)

}  // namespace fino
