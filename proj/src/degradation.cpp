#include "sert/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sert/errors.hpp"
#include "sert/rng.hpp"

namespace sert {

namespace {

// stream tags
constexpr std::uint32_t kTagIid = 0x49494400;
constexpr std::uint32_t kTagSigma = 0x53494700;
constexpr std::uint32_t kTagNonIid = 0x4E494900;
constexpr std::uint32_t kTagStripeBands = 0x53544200;
constexpr std::uint32_t kTagStripe = 0x53545200;
constexpr std::uint32_t kTagDeadBands = 0x44454200;
constexpr std::uint32_t kTagDead = 0x44454100;
constexpr std::uint32_t kTagImpBands = 0x494D4200;
constexpr std::uint32_t kTagImpP = 0x494D5000;
constexpr std::uint32_t kTagImp = 0x494D5600;
constexpr std::uint32_t kTagMixture = 0x4D495800;
constexpr std::uint32_t kTagTexture = 0x54455800;

constexpr double kScale = 255.0;

std::size_t idx(std::size_t i, std::size_t j, std::size_t b, std::size_t W, std::size_t B) {
  return (i * W + j) * B + b;
}

void check_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f <= 1.0)) throw ParameterError(std::string(what) + " must lie in [0, 1], got " + std::to_string(f));
}

std::size_t round_count(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5)));
}

void add_band_gaussian(Tensor& y, std::size_t band, double sigma, std::uint64_t seed, std::uint32_t tag) {
  if (sigma == 0.0) return;
  const std::size_t H = y.dim(0), W = y.dim(1), B = y.dim(2);
  const double s = sigma / kScale;
  Philox g(seed, stream_id(tag, static_cast<std::uint32_t>(band)));
  auto d = y.mutable_data();
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) d[idx(i, j, band, W, B)] += s * g.normal(i * W + j);
}

}  // namespace

void require_cube(const Tensor& x, const char* op) {
  if (x.ndim() != 3) throw DimensionError(std::string(op) + ": expected an [H, W, B] cube, got " + shape_str(x.shape()));
}

Tensor gaussian_iid(const Tensor& x, double sigma, std::uint64_t seed) {
  require_cube(x, "gaussian_iid");
  if (!(sigma >= 0.0 && sigma <= 255.0)) throw ParameterError("gaussian_iid: sigma must lie in [0, 255]");
  Tensor y = x.clone();
  for (std::size_t b = 0; b < x.dim(2); ++b) add_band_gaussian(y, b, sigma, seed, kTagIid);
  return y;
}

Tensor gaussian_noniid(const Tensor& x, double sigma_min, double sigma_max, std::uint64_t seed,
                       std::vector<double>* sigmas) {
  require_cube(x, "gaussian_noniid");
  if (!(sigma_min >= 0.0) || !(sigma_max >= sigma_min) || sigma_max > 255.0) {
    throw ParameterError("gaussian_noniid: need 0 <= sigma_min <= sigma_max <= 255, got [" +
                         std::to_string(sigma_min) + ", " + std::to_string(sigma_max) + "]");
  }
  Tensor y = x.clone();
  if (sigmas) sigmas->clear();
  for (std::size_t b = 0; b < x.dim(2); ++b) {
    const double u = Philox(seed, stream_id(kTagSigma, static_cast<std::uint32_t>(b))).uniform(0);
    const double s = sigma_min + (sigma_max - sigma_min) * u;
    if (sigmas) sigmas->push_back(s);
    add_band_gaussian(y, b, s, seed, kTagNonIid);
  }
  return y;
}

std::vector<std::size_t> choose_bands(std::size_t bands, double fraction, std::uint64_t seed, std::uint32_t tag) {
  check_fraction(fraction, "band_fraction");
  RngStream rng(seed, stream_id(tag, 0));
  return rng.choose(bands, round_count(fraction, bands));
}

StripePlan plan_stripe_band(std::size_t band, std::size_t width, const StripeParams& p, std::uint64_t seed) {
  check_fraction(p.col_fraction_min, "stripe col_fraction_min");
  check_fraction(p.col_fraction_max, "stripe col_fraction_max");
  if (p.col_fraction_max < p.col_fraction_min) throw ParameterError("stripe: col fraction range is inverted");
  if (!(p.magnitude >= 0.0)) throw ParameterError("stripe: magnitude must be non-negative");
  RngStream rng(seed, stream_id(kTagStripe, static_cast<std::uint32_t>(band)));
  const double frac = rng.uniform(p.col_fraction_min, p.col_fraction_max);
  StripePlan plan;
  plan.band = band;
  plan.columns = rng.choose(width, round_count(frac, width));
  for (std::size_t k = 0; k < plan.columns.size(); ++k) plan.offsets.push_back(rng.uniform(-p.magnitude, p.magnitude));
  return plan;
}

DeadlinePlan plan_deadline_band(std::size_t band, std::size_t width, const DeadlineParams& p, std::uint64_t seed) {
  check_fraction(p.col_fraction_min, "deadline col_fraction_min");
  check_fraction(p.col_fraction_max, "deadline col_fraction_max");
  if (p.col_fraction_max < p.col_fraction_min) throw ParameterError("deadline: col fraction range is inverted");
  if (p.width_min < 1 || p.width_max < p.width_min) throw ParameterError("deadline: need 1 <= width_min <= width_max");
  RngStream rng(seed, stream_id(kTagDead, static_cast<std::uint32_t>(band)));
  const double frac = rng.uniform(p.col_fraction_min, p.col_fraction_max);
  const std::size_t lines = round_count(frac, width);
  std::vector<bool> dead(width, false);
  for (std::size_t k = 0; k < lines; ++k) {
    const std::size_t start = rng.below(width);
    const std::size_t w = p.width_min + rng.below(p.width_max - p.width_min + 1);
    for (std::size_t c = start; c < std::min(width, start + w); ++c) dead[c] = true;
  }
  DeadlinePlan plan;
  plan.band = band;
  for (std::size_t c = 0; c < width; ++c)
    if (dead[c]) plan.columns.push_back(c);
  return plan;
}

double draw_impulse_probability(std::size_t band, const ImpulseParams& p, std::uint64_t seed) {
  if (p.probabilities.empty()) throw ParameterError("impulse: probability set is empty");
  for (double q : p.probabilities) check_fraction(q, "impulse probability");
  RngStream rng(seed, stream_id(kTagImpP, static_cast<std::uint32_t>(band)));
  return p.probabilities[rng.below(p.probabilities.size())];
}

ImpulsePlan plan_impulse_band(std::size_t band, std::size_t height, std::size_t width, double probability,
                              std::uint64_t seed) {
  check_fraction(probability, "impulse probability");
  Philox g(seed, stream_id(kTagImp, static_cast<std::uint32_t>(band)));
  ImpulsePlan plan;
  plan.band = band;
  plan.probability = probability;
  for (std::size_t v = 0; v < height * width; ++v) {
    const auto blk = g.block(v);
    const double u = static_cast<double>((static_cast<std::uint64_t>(blk[0]) << 21) ^ (blk[1] >> 11)) * 0x1.0p-53;
    if (u < probability) {
      plan.voxels.push_back(v);
      plan.values.push_back(static_cast<double>(blk[2] & 1u));
    }
  }
  return plan;
}

void apply_plan(Tensor& y, const StripePlan& plan) {
  const std::size_t H = y.dim(0), W = y.dim(1), B = y.dim(2);
  auto d = y.mutable_data();
  for (std::size_t k = 0; k < plan.columns.size(); ++k)
    for (std::size_t i = 0; i < H; ++i) d[idx(i, plan.columns[k], plan.band, W, B)] += plan.offsets[k];
}

void apply_plan(Tensor& y, const DeadlinePlan& plan) {
  const std::size_t H = y.dim(0), W = y.dim(1), B = y.dim(2);
  auto d = y.mutable_data();
  for (std::size_t c : plan.columns)
    for (std::size_t i = 0; i < H; ++i) d[idx(i, c, plan.band, W, B)] = 0.0;
}

void apply_plan(Tensor& y, const ImpulsePlan& plan) {
  const std::size_t W = y.dim(1), B = y.dim(2);
  auto d = y.mutable_data();
  for (std::size_t k = 0; k < plan.voxels.size(); ++k) {
    d[idx(plan.voxels[k] / W, plan.voxels[k] % W, plan.band, W, B)] = plan.values[k];
  }
}

Tensor stripe(const Tensor& x, const StripeParams& p, std::uint64_t seed, std::vector<StripePlan>* plans) {
  require_cube(x, "stripe");
  Tensor y = x.clone();
  if (plans) plans->clear();
  for (std::size_t b : choose_bands(x.dim(2), p.band_fraction, seed, kTagStripeBands)) {
    StripePlan plan = plan_stripe_band(b, x.dim(1), p, seed);
    apply_plan(y, plan);
    if (plans) plans->push_back(std::move(plan));
  }
  return y;
}

Tensor deadline(const Tensor& x, const DeadlineParams& p, std::uint64_t seed, std::vector<DeadlinePlan>* plans) {
  require_cube(x, "deadline");
  Tensor y = x.clone();
  if (plans) plans->clear();
  for (std::size_t b : choose_bands(x.dim(2), p.band_fraction, seed, kTagDeadBands)) {
    DeadlinePlan plan = plan_deadline_band(b, x.dim(1), p, seed);
    apply_plan(y, plan);
    if (plans) plans->push_back(std::move(plan));
  }
  return y;
}

Tensor impulse(const Tensor& x, const ImpulseParams& p, std::uint64_t seed, std::vector<ImpulsePlan>* plans,
               double fixed_probability) {
  require_cube(x, "impulse");
  if (fixed_probability >= 0.0) check_fraction(fixed_probability, "impulse probability");
  Tensor y = x.clone();
  if (plans) plans->clear();
  for (std::size_t b : choose_bands(x.dim(2), p.band_fraction, seed, kTagImpBands)) {
    const double q = fixed_probability >= 0.0 ? fixed_probability : draw_impulse_probability(b, p, seed);
    ImpulsePlan plan = plan_impulse_band(b, x.dim(0), x.dim(1), q, seed);
    apply_plan(y, plan);
    if (plans) plans->push_back(std::move(plan));
  }
  return y;
}

const char* corruption_name(Corruption c) {
  switch (c) {
    case Corruption::none: return "none";
    case Corruption::stripe: return "stripe";
    case Corruption::deadline: return "deadline";
    case Corruption::impulse: return "impulse";
  }
  return "none";
}

std::vector<Corruption> mixture_assignment(std::size_t bands, const MixtureRecipe& r, std::uint64_t seed) {
  for (double q : {r.p_stripe, r.p_deadline, r.p_impulse}) check_fraction(q, "mixture probability");
  if (r.p_stripe + r.p_deadline + r.p_impulse > 1.0 + 1e-12) {
    throw ParameterError("mixture: corruption probabilities sum above 1");
  }
  std::vector<Corruption> out(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    const double u = Philox(seed, stream_id(kTagMixture, static_cast<std::uint32_t>(b))).uniform(0);
    if (u < r.p_stripe) out[b] = Corruption::stripe;
    else if (u < r.p_stripe + r.p_deadline) out[b] = Corruption::deadline;
    else if (u < r.p_stripe + r.p_deadline + r.p_impulse) out[b] = Corruption::impulse;
    else out[b] = Corruption::none;
  }
  return out;
}

Tensor mixture(const Tensor& x, const MixtureRecipe& r, std::uint64_t seed, MixturePlan* plan) {
  require_cube(x, "mixture");
  MixturePlan local;
  MixturePlan& p = plan ? *plan : local;
  p = MixturePlan{};
  Tensor y = gaussian_noniid(x, r.sigma_min, r.sigma_max, seed, &p.sigmas);
  p.assignment = mixture_assignment(x.dim(2), r, seed);
  for (std::size_t b = 0; b < x.dim(2); ++b) {
    switch (p.assignment[b]) {
      case Corruption::none:
        break;
      case Corruption::stripe:
        p.stripes.push_back(plan_stripe_band(b, x.dim(1), r.stripe, seed));
        apply_plan(y, p.stripes.back());
        break;
      case Corruption::deadline:
        p.deadlines.push_back(plan_deadline_band(b, x.dim(1), r.deadline, seed));
        apply_plan(y, p.deadlines.back());
        break;
      case Corruption::impulse:
        p.impulses.push_back(
            plan_impulse_band(b, x.dim(0), x.dim(1), draw_impulse_probability(b, r.impulse, seed), seed));
        apply_plan(y, p.impulses.back());
        break;
    }
  }
  return y;
}

// --- recipes ----------------------------------------------------------------

namespace {

const char* variant_name(NoiseVariant v) {
  switch (v) {
    case NoiseVariant::gaussian_iid: return "gaussian_iid";
    case NoiseVariant::gaussian_noniid: return "gaussian_noniid";
    case NoiseVariant::stripe: return "stripe";
    case NoiseVariant::deadline: return "deadline";
    case NoiseVariant::impulse: return "impulse";
    case NoiseVariant::mixture: return "mixture";
  }
  return "gaussian_iid";
}

NoiseVariant parse_variant(const std::string& s) {
  for (auto v : {NoiseVariant::gaussian_iid, NoiseVariant::gaussian_noniid, NoiseVariant::stripe,
                 NoiseVariant::deadline, NoiseVariant::impulse, NoiseVariant::mixture}) {
    if (s == variant_name(v)) return v;
  }
  throw ParameterError("noise recipe: unknown variant '" + s + "'");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ParameterError("noise recipe: '" + key + "' expects a number, got '" + v + "'");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> NoiseSpec::to_pairs() const {
  std::vector<std::pair<std::string, std::string>> kv{
      {"recipe_version", std::to_string(kRecipeVersion)},
      {"variant", variant_name(variant)},
  };
  if (variant == NoiseVariant::gaussian_iid) {
    kv.emplace_back("sigma", num(sigma));
    return kv;
  }
  kv.emplace_back("sigma_min", num(mix.sigma_min));
  kv.emplace_back("sigma_max", num(mix.sigma_max));
  const bool all = variant == NoiseVariant::mixture;
  if (all) {
    kv.emplace_back("p_stripe", num(mix.p_stripe));
    kv.emplace_back("p_deadline", num(mix.p_deadline));
    kv.emplace_back("p_impulse", num(mix.p_impulse));
  }
  if (all || variant == NoiseVariant::stripe) {
    if (!all) kv.emplace_back("stripe.band_fraction", num(mix.stripe.band_fraction));
    kv.emplace_back("stripe.col_fraction_min", num(mix.stripe.col_fraction_min));
    kv.emplace_back("stripe.col_fraction_max", num(mix.stripe.col_fraction_max));
    kv.emplace_back("stripe.magnitude", num(mix.stripe.magnitude));
  }
  if (all || variant == NoiseVariant::deadline) {
    if (!all) kv.emplace_back("deadline.band_fraction", num(mix.deadline.band_fraction));
    kv.emplace_back("deadline.col_fraction_min", num(mix.deadline.col_fraction_min));
    kv.emplace_back("deadline.col_fraction_max", num(mix.deadline.col_fraction_max));
    kv.emplace_back("deadline.width_min", std::to_string(mix.deadline.width_min));
    kv.emplace_back("deadline.width_max", std::to_string(mix.deadline.width_max));
  }
  if (all || variant == NoiseVariant::impulse) {
    if (!all) kv.emplace_back("impulse.band_fraction", num(mix.impulse.band_fraction));
    kv.emplace_back("impulse.probabilities", join(mix.impulse.probabilities));
    if (!all && impulse_probability >= 0.0) kv.emplace_back("impulse.probability", num(impulse_probability));
  }
  return kv;
}

NoiseSpec NoiseSpec::from_pairs(const std::map<std::string, std::string>& kv) {
  NoiseSpec s;
  if (auto it = kv.find("recipe_version"); it != kv.end() && it->second != std::to_string(kRecipeVersion)) {
    throw ParameterError("noise recipe: unsupported recipe_version " + it->second);
  }
  auto v = kv.find("variant");
  if (v == kv.end()) throw ParameterError("noise recipe: missing 'variant'");
  s.variant = parse_variant(v->second);
  for (const auto& [key, value] : kv) {
    if (key == "recipe_version" || key == "variant" || key == "seed") continue;
    if (key == "sigma") s.sigma = to_double(key, value);
    else if (key == "sigma_min") s.mix.sigma_min = to_double(key, value);
    else if (key == "sigma_max") s.mix.sigma_max = to_double(key, value);
    else if (key == "p_stripe") s.mix.p_stripe = to_double(key, value);
    else if (key == "p_deadline") s.mix.p_deadline = to_double(key, value);
    else if (key == "p_impulse") s.mix.p_impulse = to_double(key, value);
    else if (key == "stripe.band_fraction") s.mix.stripe.band_fraction = to_double(key, value);
    else if (key == "stripe.col_fraction_min") s.mix.stripe.col_fraction_min = to_double(key, value);
    else if (key == "stripe.col_fraction_max") s.mix.stripe.col_fraction_max = to_double(key, value);
    else if (key == "stripe.magnitude") s.mix.stripe.magnitude = to_double(key, value);
    else if (key == "deadline.band_fraction") s.mix.deadline.band_fraction = to_double(key, value);
    else if (key == "deadline.col_fraction_min") s.mix.deadline.col_fraction_min = to_double(key, value);
    else if (key == "deadline.col_fraction_max") s.mix.deadline.col_fraction_max = to_double(key, value);
    else if (key == "deadline.width_min") s.mix.deadline.width_min = static_cast<std::size_t>(to_double(key, value));
    else if (key == "deadline.width_max") s.mix.deadline.width_max = static_cast<std::size_t>(to_double(key, value));
    else if (key == "impulse.band_fraction") s.mix.impulse.band_fraction = to_double(key, value);
    else if (key == "impulse.probability") s.impulse_probability = to_double(key, value);
    else if (key == "impulse.probabilities") {
      s.mix.impulse.probabilities.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) s.mix.impulse.probabilities.push_back(to_double(key, trim(item)));
    } else {
      throw ParameterError("noise recipe: unknown key '" + key + "'");
    }
  }
  return s;
}

Tensor apply_noise(const Tensor& x, const NoiseSpec& spec, std::uint64_t seed) {
  const MixtureRecipe& m = spec.mix;
  switch (spec.variant) {
    case NoiseVariant::gaussian_iid:
      return gaussian_iid(x, spec.sigma, seed);
    case NoiseVariant::gaussian_noniid:
      return gaussian_noniid(x, m.sigma_min, m.sigma_max, seed);
    case NoiseVariant::stripe:
      return stripe(gaussian_noniid(x, m.sigma_min, m.sigma_max, seed), m.stripe, seed);
    case NoiseVariant::deadline:
      return deadline(gaussian_noniid(x, m.sigma_min, m.sigma_max, seed), m.deadline, seed);
    case NoiseVariant::impulse:
      return impulse(gaussian_noniid(x, m.sigma_min, m.sigma_max, seed), m.impulse, seed, nullptr,
                     spec.impulse_probability);
    case NoiseVariant::mixture:
      return mixture(x, m, seed);
  }
  return x.clone();
}

std::string format_recipe(const NoiseSpec& spec) {
  std::string out;
  for (const auto& [k, v] : spec.to_pairs()) out += k + " = " + v + "\n";
  return out;
}

NoiseSpec parse_recipe(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("noise recipe line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return NoiseSpec::from_pairs(kv);
}

NoiseSpec load_recipe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open noise recipe '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_recipe(ss.str());
}

NoiseSpec named_recipe(const std::string& name) {
  NoiseSpec s;
  std::vector<std::string> parts;
  std::stringstream ss(name);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw ParameterError("empty noise recipe name");
  const std::string& head = parts[0];
  if (head == "iid") {
    s.variant = NoiseVariant::gaussian_iid;
    if (parts.size() > 1) s.sigma = to_double("sigma", parts[1]);
  } else if (head == "noniid" || head == "stripe" || head == "deadline" || head == "impulse" || head == "mixture") {
    s.variant = head == "noniid" ? NoiseVariant::gaussian_noniid : parse_variant(head);
    if (parts.size() == 3) {
      s.mix.sigma_min = to_double("sigma_min", parts[1]);
      s.mix.sigma_max = to_double("sigma_max", parts[2]);
    } else if (parts.size() != 1) {
      throw ParameterError("noise recipe '" + name + "': expected " + head + "[:sigma_min:sigma_max]");
    }
  } else {
    throw ParameterError("unknown noise recipe '" + name + "'");
  }
  return s;
}

// --- synthetic data ----------------------------------------------------------

Tensor synth_texture(std::size_t height, std::size_t width, std::size_t bands, std::uint64_t seed) {
  if (height == 0 || width == 0 || bands == 0) throw DimensionError("synth_texture: extents must be positive");
  constexpr std::size_t kEndmembers = 3;
  constexpr std::size_t kWaves = 4;
  RngStream rng(seed, stream_id(kTagTexture, 0));
  const double two_pi = 2.0 * std::numbers::pi;

  // smooth spectra: offset plus a Gaussian bump over the band axis
  std::vector<std::vector<double>> spectra(kEndmembers, std::vector<double>(bands));
  for (auto& s : spectra) {
    const double base = rng.uniform(0.1, 0.4), amp = rng.uniform(0.2, 0.5);
    const double centre = rng.uniform(0.0, 1.0), spread = rng.uniform(0.2, 0.6);
    for (std::size_t b = 0; b < bands; ++b) {
      const double t = bands == 1 ? 0.5 : static_cast<double>(b) / static_cast<double>(bands - 1);
      s[b] = base + amp * std::exp(-0.5 * (t - centre) * (t - centre) / (spread * spread));
    }
  }
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<std::vector<Wave>> waves(kEndmembers);
  for (auto& ws : waves) {
    for (std::size_t k = 0; k < kWaves; ++k) {
      const double period = rng.uniform(8.0, 32.0), angle = rng.uniform(0.0, two_pi);
      ws.push_back({std::sin(angle) / period, std::cos(angle) / period, rng.uniform(0.0, two_pi), rng.uniform(0.5, 1.5)});
    }
  }

  Tensor x({height, width, bands});
  auto d = x.mutable_data();
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double logits[kEndmembers], total = 0.0;
      for (std::size_t e = 0; e < kEndmembers; ++e) {
        double v = 0.0;
        for (const auto& w : waves[e]) v += w.amp * std::sin(two_pi * (w.fy * i + w.fx * j) + w.phase);
        logits[e] = std::exp(v);
        total += logits[e];
      }
      for (std::size_t b = 0; b < bands; ++b) {
        double v = 0.0;
        for (std::size_t e = 0; e < kEndmembers; ++e) v += logits[e] / total * spectra[e][b];
        d[(i * width + j) * bands + b] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return x;
}

}  // namespace sert
