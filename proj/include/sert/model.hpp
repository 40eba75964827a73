#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sert/rect_attention.hpp"
#include "sert/spectral_enhance.hpp"
#include "sert/tensor.hpp"

namespace sert {

struct LayerSpec {
  std::size_t rect_h = 16;  // long side, also the SE patch side
  std::size_t rect_w = 1;
  std::size_t blocks = 6;
  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::size_t bands = 31;
  std::size_t channels = 96;
  std::size_t rank = 12;
  std::size_t heads = 2;  // per attention branch
  std::size_t memory_entries = 31;
  std::size_t mlp_ratio = 2;
  std::vector<LayerSpec> layers{{16, 1, 6}, {32, 2, 6}, {32, 4, 6}};

  // component switches
  bool use_ra = true;
  bool use_se = true;
  bool use_shuffle = true;
  bool use_mu = true;
  bool use_mlp = true;
  bool use_norm = true;
  bool layer_conv = true;  // 3x3 conv closing each residual layer
  bool body_conv = true;   // 3x3 conv after the last layer
  bool sigmoid_gate = false;
  SePlacement se_placement = SePlacement::non_local;

  /// Throws ConfigError for inconsistent settings.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// Flat key=value pairs covering every field (stable key order).
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  static ModelConfig from_pairs(const std::map<std::string, std::string>& kv);
  static ModelConfig toy();  // C=8, K=2, one 4x2 layer of 2 blocks, 4 bands
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Norm {
  Tensor gamma, beta;
};

struct Mlp {
  Tensor w1, b1, w2, b2;
};

struct Conv3x3 {
  Tensor weight, bias;  // [3, 3, Cin, Cout], [Cout]
};

struct TransformerBlock {
  Norm norm1, norm2;
  AttentionWeights attn_h, attn_v;
  SEWeights se;
  MemoryBank bank;
  Mlp mlp;
};

struct ResidualLayer {
  LayerSpec spec;
  std::vector<TransformerBlock> blocks;
  Conv3x3 conv;
};

/// Per-patch low-rank vectors collected from every SE module in a forward pass.
struct ZlRecord {
  std::size_t layer = 0;
  std::size_t block = 0;
  SeTrace trace;
};

class SertModel {
 public:
  /// Parameters allocated with zeros/ones; see init_weights for the real initialization.
  explicit SertModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Every learnable tensor with a stable dotted name, in registration order.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// Y [N, H, W, bands] or [H, W, bands] -> same shape, Y + f(Y).
  Tensor forward(const Tensor& y, std::vector<ZlRecord>* zl = nullptr) const;

  Conv3x3& head() { return head_; }
  Conv3x3& tail() { return tail_; }
  Conv3x3& body() { return body_; }
  std::vector<ResidualLayer>& layers() { return layers_; }
  const std::vector<ResidualLayer>& layers() const { return layers_; }

  void zero_grad();

 private:
  ModelConfig config_;
  Conv3x3 head_, body_, tail_;
  std::vector<ResidualLayer> layers_;
};

/// Z + RA(norm Z) + SE(norm Z), then the optional MLP sub-block with its own
/// residual. SE patches are shifted on odd block indices.
Tensor block_forward(const Tensor& z, const TransformerBlock& block, const LayerSpec& layer, std::size_t block_index,
                     const ModelConfig& config, SeTrace* trace = nullptr);

/// Z + conv(blocks(Z)) (or Z + blocks(Z) without the layer convolution).
Tensor rtl_forward(const Tensor& z, const ResidualLayer& layer, const ModelConfig& config,
                   std::vector<ZlRecord>* zl = nullptr, std::size_t layer_index = 0);

/// Deterministic initialization: truncated normal (std 0.02) projections,
/// PyTorch-default uniform head/body/layer convolutions, zero tail
/// convolution, uniform memory banks in [-1/sqrt(K), 1/sqrt(K)].
SertModel init_weights(const ModelConfig& config, std::uint64_t seed);

/// Order-dependent FNV-1a hash over all parameter bytes.
std::uint64_t parameter_checksum(const SertModel& model);

// --- accounting ---------------------------------------------------------------

struct CountItem {
  std::string name;
  std::uint64_t count = 0;
  bool assumed = false;  // component not described by the method itself
  std::string note;
};

struct CountBreakdown {
  std::vector<CountItem> items;
  std::uint64_t total() const;
  std::uint64_t assumed_total() const;
  std::uint64_t get(const std::string& name) const;
};

/// Exact learnable-scalar count, itemized by component.
CountBreakdown param_count(const ModelConfig& config);

/// Multiply-accumulate count of all matrix products and convolutions for
/// one H x W image (elementwise, normalization and softmax work excluded).
/// One MAC is two FLOPs.
CountBreakdown flops_estimate(const ModelConfig& config, std::size_t height, std::size_t width);

}  // namespace sert
