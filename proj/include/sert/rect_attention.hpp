#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sert/tensor.hpp"

namespace sert {

enum class Orientation { horizontal, vertical };

/// Rectangle with long side `h` and short side `w`. Horizontal tiles span
/// h rows by w columns; vertical tiles are the transpose, w rows by h columns.
struct RectSpec {
  std::size_t h = 1;
  std::size_t w = 1;
  Orientation orientation = Orientation::horizontal;

  std::size_t tile_rows() const { return orientation == Orientation::horizontal ? h : w; }
  std::size_t tile_cols() const { return orientation == Orientation::horizontal ? w : h; }
  std::size_t tokens() const { return h * w; }
  RectSpec transposed() const {
    return {h, w, orientation == Orientation::horizontal ? Orientation::vertical : Orientation::horizontal};
  }
  /// Throws ConfigError unless h >= w >= 1.
  void validate() const;
};

/// Swin-style relative position lookup for a rows x cols tile: entry
/// i * T + j holds the table column for the ordered token pair (i, j).
std::vector<std::size_t> relative_position_index(std::size_t rows, std::size_t cols);
inline std::size_t relative_position_table_size(std::size_t rows, std::size_t cols) {
  return (2 * rows - 1) * (2 * cols - 1);
}

/// Learnable parameters of one rectangle attention branch over c channels.
struct AttentionWeights {
  Tensor w_q, w_k, w_v;  // [c, c]
  Tensor w_o, b_o;       // output projection [c, c], [c]
  Tensor position_bias;  // [heads, (2r-1)(2c-1)]
  std::size_t heads = 1;
  std::vector<std::size_t> bias_index;  // T*T entries

  /// Zero-filled weights for a tile of `rows` x `cols` tokens.
  static AttentionWeights zeros(std::size_t channels, std::size_t heads, std::size_t rows, std::size_t cols);
  std::size_t channels() const { return w_q.dim(0); }
  std::size_t head_dim() const { return channels() / heads; }
  std::vector<Tensor> parameters() const { return {w_q, w_k, w_v, w_o, b_o, position_bias}; }
};

/// Tensor of shape [N, H, W, C] plus the extents it had before padding.
struct FeatureMap {
  Tensor tensor;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Mirror index for position i of an axis of length n (no edge repeat).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

/// Reflect-pads the bottom/right of z [N,H,W,C] up to multiples of the
/// given extents.
FeatureMap pad_to_multiple(const Tensor& z, std::size_t row_multiple, std::size_t col_multiple);
Tensor unpad(const FeatureMap& map);

/// Contiguous channel halves of [N,H,W,C]; throws ConfigError for odd C.
std::pair<Tensor, Tensor> split_spectral(const Tensor& z);

/// [N,H,W,c] -> [N * (H/rows) * (W/cols), rows*cols, c], tiles in row-major
/// grid order. Extents must already be divisible (InternalError otherwise).
Tensor partition_rect(const Tensor& z, std::size_t rows, std::size_t cols);

/// Exact inverse of partition_rect.
Tensor merge_rect(const Tensor& tiles, std::size_t rows, std::size_t cols, std::size_t batch, std::size_t height,
                  std::size_t width);

/// Multi-head attention inside each tile: softmax(QK^T/sqrt(d) + P) V with
/// heads concatenated. No output projection. tiles is [B, T, c]. When
/// `attention` is non-null it receives the [B, heads, T, T] weights.
Tensor rmsa_tile(const Tensor& tiles, const AttentionWeights& weights, Tensor* attention = nullptr);

/// Pad, partition, attend, project, merge and crop for one branch.
Tensor rmsa_branch(const Tensor& z, const RectSpec& rect, const AttentionWeights& weights);

/// Two-group channel interleave: out[2i] = in[i], out[2i+1] = in[C/2 + i].
Tensor shuffle_spectral(const Tensor& z);
Tensor inverse_shuffle_spectral(const Tensor& z);

/// Full RA module: split, horizontal branch on the first half, vertical
/// branch on the second, concat, optional shuffle.
Tensor ra_forward(const Tensor& z, const RectSpec& rect, const AttentionWeights& horizontal,
                  const AttentionWeights& vertical, bool use_shuffle = true);

}  // namespace sert
