#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sert/adam.hpp"
#include "sert/model.hpp"
#include "sert/tensor.hpp"

namespace sert {

// --- HSI container ------------------------------------------------------------
//
//   HSR1\n
//   height=H\n width=W\n bands=B\n dtype=f64\n layout=band-major\n
//   [seed=S\n] [recipe.<key>=<value>\n ...] [<other lowercase keys>\n]
//   \n
//   B*H*W little-endian values, band by band, rows top to bottom

enum class Dtype { f32, f64 };

struct HsiImage {
  Tensor data;  // [H, W, B]
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> meta;  // extra header lines, in order
};

void save_hsi(const HsiImage& image, const std::string& path, Dtype dtype = Dtype::f64);
HsiImage load_hsi(const std::string& path);

/// Serialized bytes of an HSI file (what save_hsi writes).
std::string encode_hsi(const HsiImage& image, Dtype dtype = Dtype::f64);
HsiImage decode_hsi(const std::string& bytes);

// --- checkpoints ----------------------------------------------------------------
//
// Text header (magic SERTCK1, key=value lines, blank line) followed by
// little-endian binary records: one per named parameter (name, shape,
// f64 values), then the Adam moment buffers in parameter order.

struct CheckpointInfo {
  int format_version = 1;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  ModelConfig config;
  std::map<std::string, std::string> meta;  // free-form "meta.*" header keys
};

std::string encode_checkpoint(const SertModel& model, const AdamState& adam, const CheckpointInfo& info);
void save_checkpoint(const std::string& path, const SertModel& model, const AdamState& adam,
                     const CheckpointInfo& info);

/// Header only; the payload is not read.
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Restores parameters and optimizer state into an existing model. Throws
/// ConfigConflictError if the stored config differs from model.config() and
/// ShapeConflictError if a stored tensor shape disagrees with the model.
CheckpointInfo load_checkpoint(const std::string& path, SertModel& model, AdamState& adam);
CheckpointInfo decode_checkpoint(const std::string& bytes, SertModel& model, AdamState& adam);

/// Builds the model from the stored config, then restores it.
SertModel load_model(const std::string& path, AdamState* adam = nullptr, CheckpointInfo* info = nullptr);

// --- config files -----------------------------------------------------------------

/// Flat "key = value" text, '#' starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

std::string format_config(const ModelConfig& config);
ModelConfig parse_config(const std::string& text);
ModelConfig load_config(const std::string& path);

}  // namespace sert
