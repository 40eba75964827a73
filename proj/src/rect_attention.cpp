#include "sert/rect_attention.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "sert/errors.hpp"
#include "sert/ops.hpp"

namespace sert {

void RectSpec::validate() const {
  if (w < 1 || h < w) {
    throw ConfigError("rectangle [" + std::to_string(h) + ", " + std::to_string(w) + "] needs h >= w >= 1");
  }
}

std::vector<std::size_t> relative_position_index(std::size_t rows, std::size_t cols) {
  const std::size_t T = rows * cols;
  const std::size_t span = 2 * cols - 1;
  std::vector<std::size_t> index(T * T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t ri = i / cols, ci = i % cols;
    for (std::size_t j = 0; j < T; ++j) {
      const std::size_t rj = j / cols, cj = j % cols;
      index[i * T + j] = (ri + rows - 1 - rj) * span + (ci + cols - 1 - cj);
    }
  }
  return index;
}

AttentionWeights AttentionWeights::zeros(std::size_t channels, std::size_t heads, std::size_t rows, std::size_t cols) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide branch channels (" +
                      std::to_string(channels) + ")");
  }
  AttentionWeights w;
  w.w_q = Tensor::zeros({channels, channels});
  w.w_k = Tensor::zeros({channels, channels});
  w.w_v = Tensor::zeros({channels, channels});
  w.w_o = Tensor::zeros({channels, channels});
  w.b_o = Tensor::zeros({channels});
  w.position_bias = Tensor::zeros({heads, relative_position_table_size(rows, cols)});
  w.heads = heads;
  w.bias_index = relative_position_index(rows, cols);
  return w;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

namespace {

void require_nhwc(const Tensor& z, const char* op) {
  if (z.ndim() != 4) throw DimensionError(std::string(op) + ": expected [N, H, W, C], got " + shape_str(z.shape()));
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

FeatureMap pad_to_multiple(const Tensor& z, std::size_t row_multiple, std::size_t col_multiple) {
  require_nhwc(z, "pad_to_multiple");
  const std::size_t H = z.dim(1), W = z.dim(2);
  const std::size_t Hp = round_up(H, row_multiple), Wp = round_up(W, col_multiple);
  if (Hp == H && Wp == W) return {z, H, W};
  std::vector<std::size_t> rows(Hp), cols(Wp);
  for (std::size_t i = 0; i < Hp; ++i) rows[i] = reflect_index(static_cast<std::ptrdiff_t>(i), H);
  for (std::size_t j = 0; j < Wp; ++j) cols[j] = reflect_index(static_cast<std::ptrdiff_t>(j), W);
  return {ops::gather_hw(z, rows, cols), H, W};
}

Tensor unpad(const FeatureMap& map) {
  const Tensor& z = map.tensor;
  if (z.dim(1) == map.height && z.dim(2) == map.width) return z;
  std::vector<std::size_t> rows(map.height), cols(map.width);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return ops::gather_hw(z, rows, cols);
}

std::pair<Tensor, Tensor> split_spectral(const Tensor& z) {
  const std::size_t C = z.shape().empty() ? 0 : z.shape().back();
  if (C < 2 || C % 2 != 0) throw ConfigError("split_spectral: channel count must be even, got " + std::to_string(C));
  return {ops::slice_last(z, 0, C / 2), ops::slice_last(z, C / 2, C)};
}

Tensor partition_rect(const Tensor& z, std::size_t rows, std::size_t cols) {
  require_nhwc(z, "partition_rect");
  const std::size_t N = z.dim(0), H = z.dim(1), W = z.dim(2), C = z.dim(3);
  if (rows == 0 || cols == 0 || H % rows != 0 || W % cols != 0) {
    throw InternalError("partition_rect: map " + shape_str(z.shape()) + " not divisible by tile " +
                        std::to_string(rows) + "x" + std::to_string(cols) + " (pad first)");
  }
  const std::size_t gh = H / rows, gw = W / cols;
  Tensor t = ops::reshape(z, {N, gh, rows, gw, cols, C});
  t = ops::permute(t, {0, 1, 3, 2, 4, 5});
  return ops::reshape(t, {N * gh * gw, rows * cols, C});
}

Tensor merge_rect(const Tensor& tiles, std::size_t rows, std::size_t cols, std::size_t batch, std::size_t height,
                  std::size_t width) {
  if (tiles.ndim() != 3 || rows == 0 || cols == 0 || height % rows != 0 || width % cols != 0) {
    throw InternalError("merge_rect: tiles " + shape_str(tiles.shape()) + " incompatible with layout");
  }
  const std::size_t gh = height / rows, gw = width / cols;
  if (tiles.dim(0) != batch * gh * gw || tiles.dim(1) != rows * cols) {
    throw InternalError("merge_rect: expected " + std::to_string(batch * gh * gw) + " tiles of " +
                        std::to_string(rows * cols) + " tokens, got " + shape_str(tiles.shape()));
  }
  const std::size_t C = tiles.dim(2);
  Tensor t = ops::reshape(tiles, {batch, gh, gw, rows, cols, C});
  t = ops::permute(t, {0, 1, 3, 2, 4, 5});
  return ops::reshape(t, {batch, height, width, C});
}

Tensor rmsa_tile(const Tensor& tiles, const AttentionWeights& weights, Tensor* attention) {
  if (tiles.ndim() != 3) throw DimensionError("rmsa_tile: expected [B, T, c], got " + shape_str(tiles.shape()));
  const std::size_t B = tiles.dim(0), T = tiles.dim(1), c = tiles.dim(2);
  const std::size_t heads = weights.heads;
  if (heads == 0 || c % heads != 0 || weights.channels() != c) {
    throw ConfigError("rmsa_tile: " + std::to_string(heads) + " heads incompatible with " + std::to_string(c) +
                      " channels (weights built for " + std::to_string(weights.channels()) + ")");
  }
  if (weights.bias_index.size() != T * T) {
    throw ConfigError("rmsa_tile: position index built for a different tile size than " + std::to_string(T) +
                      " tokens");
  }
  const std::size_t d = c / heads;

  auto to_heads = [&](const Tensor& x) {
    Tensor r = ops::reshape(x, {B, T, heads, d});
    return heads == 1 ? ops::reshape(r, {B, 1, T, d}) : ops::permute(r, {0, 2, 1, 3});
  };
  Tensor q = to_heads(ops::matmul(tiles, weights.w_q));
  Tensor k = to_heads(ops::matmul(tiles, weights.w_k));
  Tensor v = to_heads(ops::matmul(tiles, weights.w_v));

  Tensor scores = ops::scale(ops::matmul(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(d)));
  scores = ops::add_position_bias(scores, weights.position_bias, weights.bias_index);
  Tensor attn = ops::softmax(scores, 3);
  if (attention) *attention = attn;

  Tensor out = ops::matmul(attn, v);  // [B, heads, T, d]
  if (heads != 1) out = ops::permute(out, {0, 2, 1, 3});
  return ops::reshape(out, {B, T, c});
}

Tensor rmsa_branch(const Tensor& z, const RectSpec& rect, const AttentionWeights& weights) {
  require_nhwc(z, "rmsa_branch");
  const std::size_t rows = rect.tile_rows(), cols = rect.tile_cols();
  FeatureMap padded = pad_to_multiple(z, rows, cols);
  const Tensor& zp = padded.tensor;
  Tensor tiles = partition_rect(zp, rows, cols);
  Tensor attended = rmsa_tile(tiles, weights);
  attended = ops::add_bias(ops::matmul(attended, weights.w_o), weights.b_o);
  padded.tensor = merge_rect(attended, rows, cols, zp.dim(0), zp.dim(1), zp.dim(2));
  return unpad(padded);
}

namespace {
std::vector<std::size_t> shuffle_index(std::size_t C, bool inverse) {
  if (C < 2 || C % 2 != 0) throw ConfigError("spectral shuffle: channel count must be even, got " + std::to_string(C));
  const std::size_t half = C / 2;
  std::vector<std::size_t> idx(C);
  for (std::size_t i = 0; i < half; ++i) {
    if (inverse) {
      idx[i] = 2 * i;
      idx[half + i] = 2 * i + 1;
    } else {
      idx[2 * i] = i;
      idx[2 * i + 1] = half + i;
    }
  }
  return idx;
}
}  // namespace

Tensor shuffle_spectral(const Tensor& z) {
  const auto idx = shuffle_index(z.shape().empty() ? 0 : z.shape().back(), false);
  return ops::gather_last(z, idx);
}

Tensor inverse_shuffle_spectral(const Tensor& z) {
  const auto idx = shuffle_index(z.shape().empty() ? 0 : z.shape().back(), true);
  return ops::gather_last(z, idx);
}

Tensor ra_forward(const Tensor& z, const RectSpec& rect, const AttentionWeights& horizontal,
                  const AttentionWeights& vertical, bool use_shuffle) {
  require_nhwc(z, "ra_forward");
  rect.validate();
  RectSpec hspec{rect.h, rect.w, Orientation::horizontal};
  auto [z1, z2] = split_spectral(z);
  Tensor y1 = rmsa_branch(z1, hspec, horizontal);
  Tensor y2 = rmsa_branch(z2, hspec.transposed(), vertical);
  Tensor cat = ops::concat_last(y1, y2);
  return use_shuffle ? shuffle_spectral(cat) : cat;
}

}  // namespace sert
