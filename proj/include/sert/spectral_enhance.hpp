#pragma once

#include <cstddef>
#include <vector>

#include "sert/tensor.hpp"

namespace sert {

/// Learnable dictionary of E low-rank spectral vectors (columns of a K x E matrix).
struct MemoryBank {
  Tensor m;  // [K, E]
  std::size_t rank() const { return m.dim(0); }
  std::size_t entries() const { return m.dim(1); }
};

struct SEWeights {
  Tensor w_k;  // [C, K] rank projection
  Tensor w_c;  // [C, K] gate expansion
  static SEWeights zeros(std::size_t channels, std::size_t rank);
  std::size_t channels() const { return w_k.dim(0); }
  std::size_t rank() const { return w_k.dim(1); }
};

/// Patches of one feature map together with the layout needed to undo the
/// partition. `patches` is [N * grid_rows * grid_cols, patch_rows * patch_cols, C].
struct CubeGrid {
  Tensor patches;
  std::size_t batch = 0;
  std::size_t height = 0;  // extents of the partitioned map
  std::size_t width = 0;
  std::size_t patch_rows = 0;
  std::size_t patch_cols = 0;
  std::size_t shift_rows = 0;  // cyclic shift applied before partitioning
  std::size_t shift_cols = 0;
  std::size_t grid_rows() const { return height / patch_rows; }
  std::size_t grid_cols() const { return width / patch_cols; }
};

/// Cyclic spatial roll: out[i, j] = z[(i + dr) mod H, (j + dc) mod W].
Tensor cyclic_shift(const Tensor& z, std::size_t dr, std::size_t dc);
Tensor cyclic_unshift(const Tensor& z, std::size_t dr, std::size_t dc);

/// Square P x P cube patches of z [N,H,W,C]; shifted partitions first roll
/// the map by floor(P/2) on both axes.
CubeGrid partition_cubes(const Tensor& z, std::size_t patch, bool shifted);
/// Rectangular variant (patch_rows x patch_cols, shift by half of each).
CubeGrid partition_cubes(const Tensor& z, std::size_t patch_rows, std::size_t patch_cols, bool shifted);
/// Reassembles patches laid out like `layout` and undoes its shift.
Tensor merge_cubes(const Tensor& patches, const CubeGrid& layout);

/// Spatial average of each patch: [B, T, C] -> [B, C].
Tensor squeeze(const Tensor& patches);
/// [B, C] x [C, K] -> [B, K]
Tensor project_rank(const Tensor& zc, const Tensor& w_k);

struct MemoryReadout {
  Tensor coefficients;  // I  [B, E], rows sum to one
  Tensor low_rank;      // Zl [B, K], convex combination of memory columns
};
/// I = softmax(Zk M), Zl = I M^T.
MemoryReadout memory_read(const Tensor& zk, const MemoryBank& bank);

/// Gate g = W_c Zl (optionally through a sigmoid), broadcast over the tokens
/// of each patch: out[b, t, c] = patches[b, t, c] * g[b, c].
Tensor rescale(const Tensor& patches, const Tensor& zl, const Tensor& w_c, bool sigmoid_gate = false);

enum class SePlacement { non_local, local, global };

struct SeOptions {
  std::size_t patch_rows = 1;
  std::size_t patch_cols = 1;
  bool shifted = false;
  bool use_memory = true;  // false: Zl = Zk
  bool sigmoid_gate = false;
  bool whole_map = false;  // one patch spanning the padded map
};

/// Low-rank vectors captured during se_forward, one row per patch.
struct SeTrace {
  Tensor low_rank;      // [patches, K]
  Tensor coefficients;  // [patches, E] (undefined without memory)
  CubeGrid layout;      // patches field left empty
};

/// Pad, shift, partition, squeeze, project, memory lookup, rescale, merge,
/// unshift, crop. Output shape equals the input shape.
Tensor se_forward(const Tensor& z, const SeOptions& options, const SEWeights& weights, const MemoryBank& bank,
                  SeTrace* trace = nullptr);

}  // namespace sert
