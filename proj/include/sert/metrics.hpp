#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sert/tensor.hpp"

// Image quality metrics for [H, W, B] cubes with reflectance peak 1.

namespace sert {

inline constexpr double kPsnrCap = 100.0;

double psnr(const Tensor& estimate, const Tensor& reference, double peak = 1.0);
std::vector<double> psnr_per_band(const Tensor& estimate, const Tensor& reference, double peak = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(std::size_t size, double sigma);

/// Mean SSIM of one band over all valid window positions.
double ssim_band(const Tensor& estimate, const Tensor& reference, std::size_t band, const SsimOptions& o = {});
/// Per-band SSIM averaged over bands.
double ssim(const Tensor& estimate, const Tensor& reference, const SsimOptions& o = {});

struct SamResult {
  double degrees = 0.0;
  std::size_t skipped = 0;  // pixels with a zero-norm spectrum
};
SamResult sam_detail(const Tensor& estimate, const Tensor& reference);
double sam(const Tensor& estimate, const Tensor& reference);

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double sam_degrees = 0.0;
  std::size_t sam_skipped = 0;
  std::vector<double> band_psnr;
};

MetricReport evaluate(const Tensor& estimate, const Tensor& reference);
/// Elementwise mean of reports (band lists averaged when lengths agree).
MetricReport average(const std::vector<MetricReport>& reports);

/// Aligned table with one row per named report plus an "average" row.
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& reports);
/// metric=value lines, one block per report and a final averaged block.
std::string format_key_values(const std::vector<std::pair<std::string, MetricReport>>& reports);

}  // namespace sert
