#pragma once

#include <vector>

#include "fino/autodiff.hpp"

namespace fino {

enum class Padding { Periodic, Zero };

const char* padding_name(Padding p);
Padding parse_padding(const std::string& s);

// Differentiable operations. Each takes an optional tape: with nullptr the
// op runs forward only and nothing is recorded. The output requires grad
// iff a tape is given and at least one input requires grad.

/// "Same" cross-correlation: out[b,o,h,w] = sum_{c,p,q} k[o,c,p,q] x[b,c,h+p-kh/2,w+q-kw/2] + bias[o].
/// `bias` may be undefined (no bias). Kernel extents must be odd.
template <typename T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Padding pad);

template <typename T>
Var<T> relu(Tape<T>* tape, const Var<T>& x);

/// Numerically stable logistic function.
template <typename T>
Var<T> sigmoid(Tape<T>* tape, const Var<T>& x);

template <typename T>
Var<T> exp(Tape<T>* tape, const Var<T>& x);

template <typename T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(Tape<T>* tape, const Var<T>& a, const Var<T>& b);

/// Elementwise product of equally shaped tensors.
template <typename T>
Var<T> mul(Tape<T>* tape, const Var<T>& a, const Var<T>& b);

/// s * x where s is a one-element tensor broadcast over x.
template <typename T>
Var<T> scale(Tape<T>* tape, const Var<T>& x, const Var<T>& s);

/// c * x for a constant c.
template <typename T>
Var<T> scale(Tape<T>* tape, const Var<T>& x, T c);

/// Mean over non-overlapping 2x2 blocks (spatial_dims == 2) or 1x2 blocks
/// along W only (spatial_dims == 1, H must be 1). Odd pooled extents are rejected.
template <typename T>
Var<T> avg_pool2(Tape<T>* tape, const Var<T>& x, std::size_t spatial_dims = 2);

/// Nearest-neighbour x2 replication, the left inverse of avg_pool2.
template <typename T>
Var<T> upsample_nearest2(Tape<T>* tape, const Var<T>& x, std::size_t spatial_dims = 2);

/// Concatenates 4-D tensors along the channel axis.
template <typename T>
Var<T> concat_channels(Tape<T>* tape, const std::vector<Var<T>>& parts);

/// Sum of all entries, shape (1).
template <typename T>
Var<T> sum(Tape<T>* tape, const Var<T>& x);

/// Sum of squared entries, shape (1).
template <typename T>
Var<T> sum_squares(Tape<T>* tape, const Var<T>& x);

}  // namespace fino
