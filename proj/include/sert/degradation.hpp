#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sert/tensor.hpp"

// Synthetic noise for hyperspectral cubes stored as [H, W, B] tensors.
// Sigmas are on the 0-255 scale and divided by 255 before addition; noisy
// values are never clipped. Every band draws from its own Philox stream so
// results do not depend on evaluation order.

namespace sert {

void require_cube(const Tensor& x, const char* op);

Tensor gaussian_iid(const Tensor& x, double sigma, std::uint64_t seed);

/// Per-band sigma drawn from U[sigma_min, sigma_max]; drawn values (0-255
/// scale) are written to `sigmas` when given.
Tensor gaussian_noniid(const Tensor& x, double sigma_min, double sigma_max, std::uint64_t seed,
                       std::vector<double>* sigmas = nullptr);

struct StripeParams {
  double band_fraction = 1.0 / 3.0;
  double col_fraction_min = 0.05;
  double col_fraction_max = 0.15;
  double magnitude = 0.25;  // offsets ~ U[-magnitude, magnitude]
};

struct DeadlineParams {
  double band_fraction = 1.0 / 3.0;
  double col_fraction_min = 0.05;
  double col_fraction_max = 0.15;
  std::size_t width_min = 1;
  std::size_t width_max = 3;
};

struct ImpulseParams {
  double band_fraction = 1.0 / 3.0;
  std::vector<double> probabilities{0.1, 0.3, 0.5, 0.7};  // one drawn per band
};

struct StripePlan {
  std::size_t band = 0;
  std::vector<std::size_t> columns;  // sorted
  std::vector<double> offsets;       // one per column
};

struct DeadlinePlan {
  std::size_t band = 0;
  std::vector<std::size_t> columns;  // sorted union of all dead lines
};

struct ImpulsePlan {
  std::size_t band = 0;
  double probability = 0.0;
  std::vector<std::size_t> voxels;  // row * W + col, ascending
  std::vector<double> values;       // 0 or 1
};

/// Band subset of size round(fraction * B), sorted.
std::vector<std::size_t> choose_bands(std::size_t bands, double fraction, std::uint64_t seed, std::uint32_t tag);

StripePlan plan_stripe_band(std::size_t band, std::size_t width, const StripeParams& p, std::uint64_t seed);
DeadlinePlan plan_deadline_band(std::size_t band, std::size_t width, const DeadlineParams& p, std::uint64_t seed);
ImpulsePlan plan_impulse_band(std::size_t band, std::size_t height, std::size_t width, double probability,
                              std::uint64_t seed);
double draw_impulse_probability(std::size_t band, const ImpulseParams& p, std::uint64_t seed);

void apply_plan(Tensor& y, const StripePlan& plan);
void apply_plan(Tensor& y, const DeadlinePlan& plan);
void apply_plan(Tensor& y, const ImpulsePlan& plan);

Tensor stripe(const Tensor& x, const StripeParams& p, std::uint64_t seed, std::vector<StripePlan>* plans = nullptr);
Tensor deadline(const Tensor& x, const DeadlineParams& p, std::uint64_t seed,
                std::vector<DeadlinePlan>* plans = nullptr);
/// A negative `fixed_probability` draws p per band from `p.probabilities`.
Tensor impulse(const Tensor& x, const ImpulseParams& p, std::uint64_t seed, std::vector<ImpulsePlan>* plans = nullptr,
               double fixed_probability = -1.0);

enum class Corruption { none, stripe, deadline, impulse };
const char* corruption_name(Corruption c);

struct MixtureRecipe {
  double sigma_min = 10.0;
  double sigma_max = 70.0;
  double p_stripe = 0.25;
  double p_deadline = 0.25;
  double p_impulse = 0.25;  // remaining mass is "none"
  StripeParams stripe;
  DeadlineParams deadline;
  ImpulseParams impulse;
};

struct MixturePlan {
  std::vector<double> sigmas;
  std::vector<Corruption> assignment;  // per band
  std::vector<StripePlan> stripes;
  std::vector<DeadlinePlan> deadlines;
  std::vector<ImpulsePlan> impulses;
};

/// Per-band corruption tags only (cheap; used for histogram checks).
std::vector<Corruption> mixture_assignment(std::size_t bands, const MixtureRecipe& r, std::uint64_t seed);
Tensor mixture(const Tensor& x, const MixtureRecipe& r, std::uint64_t seed, MixturePlan* plan = nullptr);

// --- recipes ----------------------------------------------------------------

enum class NoiseVariant { gaussian_iid, gaussian_noniid, stripe, deadline, impulse, mixture };

/// Full description of one noise model. The stripe/deadline/impulse variants
/// add non-i.i.d. Gaussian noise first (sigma_min..sigma_max, 0 disables).
struct NoiseSpec {
  static constexpr int kRecipeVersion = 1;
  NoiseVariant variant = NoiseVariant::gaussian_iid;
  double sigma = 50.0;  // gaussian_iid only
  double impulse_probability = -1.0;  // impulse variant: <0 draws from the set
  MixtureRecipe mix;  // sigma range and sub-parameters for all other variants

  /// Stable key=value pairs including recipe_version and variant.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  static NoiseSpec from_pairs(const std::map<std::string, std::string>& kv);
};

Tensor apply_noise(const Tensor& x, const NoiseSpec& spec, std::uint64_t seed);

std::string format_recipe(const NoiseSpec& spec);
NoiseSpec parse_recipe(const std::string& text);
NoiseSpec load_recipe(const std::string& path);
/// Shortcut recipes: "iid:50", "noniid:10:70", "stripe", "deadline", "impulse", "mixture".
NoiseSpec named_recipe(const std::string& name);

/// Smooth synthetic reflectance cube in [0, 1]: a few endmember spectra
/// mixed by low-frequency abundance maps.
Tensor synth_texture(std::size_t height, std::size_t width, std::size_t bands, std::uint64_t seed);

}  // namespace sert
