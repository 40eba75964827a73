#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sert/adam.hpp"
#include "sert/degradation.hpp"
#include "sert/model.hpp"

namespace sert {

struct TrainOptions {
  std::size_t batch = 4;
  NoiseSpec noise;  // applied to each clean patch to form the input
  AdamOptions adam;
  std::uint64_t seed = 0;
  /// Learning rate is divided by 10 from this step on (0 keeps it constant).
  std::uint64_t lr_drop_step = 0;
};

/// Clean/noisy pair for sample k of step `step`; depends only on
/// (seed, step, k) so interrupted and uninterrupted runs see the same data.
struct Batch {
  Tensor clean;  // [N, H, W, B]
  Tensor noisy;
  std::vector<std::size_t> indices;
};
Batch make_batch(const std::vector<Tensor>& dataset, const TrainOptions& options, std::uint64_t step);

/// One Adam update on the MSE between sert_forward(noisy) and clean.
/// `adam.step` is the global step counter. Returns the loss.
double train_step(SertModel& model, AdamState& adam, const std::vector<Tensor>& dataset, const TrainOptions& options);

struct ValidationResult {
  double noisy_psnr = 0.0;     // mean over images
  double denoised_psnr = 0.0;
};
/// Deterministic validation: image i is corrupted with seed derived from (seed, i).
ValidationResult validate(const SertModel& model, const std::vector<Tensor>& clean, const NoiseSpec& noise,
                          std::uint64_t seed);

/// Denoise one [H, W, B] cube.
Tensor denoise(const SertModel& model, const Tensor& noisy);

/// `count` synthetic texture patches of size h x w x bands.
std::vector<Tensor> texture_dataset(std::size_t count, std::size_t h, std::size_t w, std::size_t bands,
                                    std::uint64_t seed);

// --- gradient checking ------------------------------------------------------------

/// Elementwise |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);
inline constexpr double kGradCheckFloor = 1e-3;
inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

/// Central-difference check of d sum(forward(Y) * R) / d theta for every
/// parameter of `model` (at most `max_per_tensor` coordinates per tensor,
/// 0 = all). Y and R are seeded random tensors of shape [1, H, W, bands].
std::vector<GradCheckEntry> gradcheck_model(SertModel& model, std::size_t height, std::size_t width,
                                            std::uint64_t seed, std::size_t max_per_tensor = 0);

/// Fills the (normally zero) tail convolution with small random values so
/// gradients reach every upstream parameter.
void randomize_tail(SertModel& model, std::uint64_t seed);

}  // namespace sert
