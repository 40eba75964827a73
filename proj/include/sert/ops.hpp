#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sert/tensor.hpp"

/// Differentiable tensor operations.
///
/// Every function here records a backward rule on the active tape (see
/// TapeGuard) when one of its inputs requires a gradient. All outputs are
/// freshly materialized row-major tensors; reductions run sequentially in
/// index order so results are bit-reproducible.
namespace sert::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// out[b, t, c] = x[b, t, c] * g[b, c]
Tensor mul_rows(const Tensor& x, const Tensor& g);

/// Matrix product over the last two axes.
///
/// `a` is [..., m, k]. `b` is either a shared 2-D matrix [k, n] or a batch
/// [..., k, n] with the same leading extents as `a`. With `transpose_b`
/// the roles of b's last two axes swap (b is [..., n, k]).
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, eps fixed at 1e-5.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
inline constexpr double kLayerNormEps = 1e-5;

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Mean over `axis`; the axis is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);

/// [..., h, w, c] -> [..., 1, 1, c]
Tensor average_pool_spatial(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);

Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);

/// out[..., j] = x[..., index[j]]
Tensor gather_last(const Tensor& x, std::span<const std::size_t> index);

/// Spatial remap of [N, H, W, C]: out[n, i, j, :] = x[n, rows[i], cols[j], :].
/// Covers padding, cropping and cyclic shifts; the backward is a scatter-add.
Tensor gather_hw(const Tensor& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols);

/// scores[b, h, i, j] + table[h, index[i * T + j]] for scores [B, heads, T, T].
Tensor add_position_bias(const Tensor& scores, const Tensor& table, std::span<const std::size_t> index);

/// 3x3 "same" convolution with zero padding. x [N, H, W, Cin], weight
/// [3, 3, Cin, Cout], bias [Cout] (may be undefined).
Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Multiply-accumulate counter fed by matmul and conv2d_3x3 on this thread.
std::uint64_t& mac_counter();

}  // namespace sert::ops
