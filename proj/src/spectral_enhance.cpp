#include "sert/spectral_enhance.hpp"

#include <string>

#include "sert/errors.hpp"
#include "sert/ops.hpp"
#include "sert/rect_attention.hpp"

namespace sert {

SEWeights SEWeights::zeros(std::size_t channels, std::size_t rank) {
  if (rank == 0 || rank >= channels) {
    throw ConfigError("SE rank K=" + std::to_string(rank) + " must satisfy 1 <= K < C=" + std::to_string(channels));
  }
  return {Tensor::zeros({channels, rank}), Tensor::zeros({channels, rank})};
}

namespace {
Tensor roll(const Tensor& z, std::size_t dr, std::size_t dc, bool forward) {
  if (z.ndim() != 4) throw DimensionError("cyclic shift: expected [N, H, W, C], got " + shape_str(z.shape()));
  const std::size_t H = z.dim(1), W = z.dim(2);
  std::vector<std::size_t> rows(H), cols(W);
  for (std::size_t i = 0; i < H; ++i) rows[i] = forward ? (i + dr) % H : (i + H - dr % H) % H;
  for (std::size_t j = 0; j < W; ++j) cols[j] = forward ? (j + dc) % W : (j + W - dc % W) % W;
  return ops::gather_hw(z, rows, cols);
}
}  // namespace

Tensor cyclic_shift(const Tensor& z, std::size_t dr, std::size_t dc) {
  if (dr == 0 && dc == 0) return z;
  return roll(z, dr, dc, true);
}

Tensor cyclic_unshift(const Tensor& z, std::size_t dr, std::size_t dc) {
  if (dr == 0 && dc == 0) return z;
  return roll(z, dr, dc, false);
}

CubeGrid partition_cubes(const Tensor& z, std::size_t patch, bool shifted) {
  return partition_cubes(z, patch, patch, shifted);
}

CubeGrid partition_cubes(const Tensor& z, std::size_t patch_rows, std::size_t patch_cols, bool shifted) {
  if (z.ndim() != 4) throw DimensionError("partition_cubes: expected [N, H, W, C], got " + shape_str(z.shape()));
  const std::size_t H = z.dim(1), W = z.dim(2);
  if (patch_rows == 0 || patch_cols == 0 || patch_rows > H || patch_cols > W) {
    throw ConfigError("partition_cubes: patch " + std::to_string(patch_rows) + "x" + std::to_string(patch_cols) +
                      " does not fit map " + shape_str(z.shape()));
  }
  if (H % patch_rows != 0 || W % patch_cols != 0) {
    throw InternalError("partition_cubes: map " + shape_str(z.shape()) + " not divisible by patch (pad first)");
  }
  CubeGrid grid;
  grid.batch = z.dim(0);
  grid.height = H;
  grid.width = W;
  grid.patch_rows = patch_rows;
  grid.patch_cols = patch_cols;
  grid.shift_rows = shifted ? patch_rows / 2 : 0;
  grid.shift_cols = shifted ? patch_cols / 2 : 0;
  grid.patches = partition_rect(cyclic_shift(z, grid.shift_rows, grid.shift_cols), patch_rows, patch_cols);
  return grid;
}

Tensor merge_cubes(const Tensor& patches, const CubeGrid& layout) {
  Tensor merged = merge_rect(patches, layout.patch_rows, layout.patch_cols, layout.batch, layout.height, layout.width);
  return cyclic_unshift(merged, layout.shift_rows, layout.shift_cols);
}

Tensor squeeze(const Tensor& patches) {
  if (patches.ndim() != 3) throw DimensionError("squeeze: expected [B, T, C], got " + shape_str(patches.shape()));
  return ops::mean_axis(patches, 1);
}

Tensor project_rank(const Tensor& zc, const Tensor& w_k) {
  if (zc.ndim() != 2 || w_k.ndim() != 2 || zc.dim(1) != w_k.dim(0)) {
    throw DimensionError("project_rank: Zc " + shape_str(zc.shape()) + " incompatible with W_k " +
                         shape_str(w_k.shape()));
  }
  return ops::matmul(zc, w_k);
}

MemoryReadout memory_read(const Tensor& zk, const MemoryBank& bank) {
  if (zk.ndim() != 2 || bank.m.ndim() != 2 || zk.dim(1) != bank.m.dim(0)) {
    throw DimensionError("memory_read: Zk " + shape_str(zk.shape()) + " incompatible with M " +
                         shape_str(bank.m.shape()));
  }
  Tensor coeff = ops::softmax(ops::matmul(zk, bank.m), 1);
  Tensor zl = ops::matmul(coeff, bank.m, /*transpose_b=*/true);
  return {coeff, zl};
}

Tensor rescale(const Tensor& patches, const Tensor& zl, const Tensor& w_c, bool sigmoid_gate) {
  if (patches.ndim() != 3 || zl.ndim() != 2 || w_c.ndim() != 2 || zl.dim(1) != w_c.dim(1) ||
      patches.dim(2) != w_c.dim(0) || patches.dim(0) != zl.dim(0)) {
    throw DimensionError("rescale: patches " + shape_str(patches.shape()) + ", Zl " + shape_str(zl.shape()) +
                         ", W_c " + shape_str(w_c.shape()) + " disagree");
  }
  Tensor gate = ops::matmul(zl, w_c, /*transpose_b=*/true);  // [B, C]
  if (sigmoid_gate) gate = ops::sigmoid(gate);
  return ops::mul_rows(patches, gate);
}

Tensor se_forward(const Tensor& z, const SeOptions& options, const SEWeights& weights, const MemoryBank& bank,
                  SeTrace* trace) {
  if (z.ndim() != 4) throw DimensionError("se_forward: expected [N, H, W, C], got " + shape_str(z.shape()));
  if (z.dim(3) != weights.channels()) {
    throw DimensionError("se_forward: map has " + std::to_string(z.dim(3)) + " channels, weights expect " +
                         std::to_string(weights.channels()));
  }
  FeatureMap padded = options.whole_map ? FeatureMap{z, z.dim(1), z.dim(2)}
                                        : pad_to_multiple(z, options.patch_rows, options.patch_cols);
  const std::size_t pr = options.whole_map ? padded.tensor.dim(1) : options.patch_rows;
  const std::size_t pc = options.whole_map ? padded.tensor.dim(2) : options.patch_cols;
  CubeGrid grid = partition_cubes(padded.tensor, pr, pc, options.shifted && !options.whole_map);

  Tensor zk = project_rank(squeeze(grid.patches), weights.w_k);
  Tensor zl = zk;
  Tensor coeff;
  if (options.use_memory) {
    MemoryReadout r = memory_read(zk, bank);
    zl = r.low_rank;
    coeff = r.coefficients;
  }
  Tensor out = rescale(grid.patches, zl, weights.w_c, options.sigmoid_gate);
  padded.tensor = merge_cubes(out, grid);
  if (trace) {
    trace->low_rank = zl;
    trace->coefficients = coeff;
    trace->layout = grid;
    trace->layout.patches = Tensor();
  }
  return unpad(padded);
}

}  // namespace sert
