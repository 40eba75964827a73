#include "sert/train.hpp"

#include <algorithm>
#include <cmath>

#include "sert/errors.hpp"
#include "sert/metrics.hpp"
#include "sert/ops.hpp"
#include "sert/rng.hpp"

namespace sert {

namespace {

constexpr std::uint32_t kTagBatch = 0x42415400;
constexpr std::uint32_t kTagNoise = 0x4E4F5300;
constexpr std::uint32_t kTagValid = 0x56414C00;
constexpr std::uint32_t kTagCheck = 0x43484B00;
constexpr std::uint32_t kTagTail = 0x5441494C;
constexpr std::uint32_t kTagData = 0x44415400;

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag, std::uint64_t a, std::uint64_t b) {
  const auto blk = Philox(seed, stream_id(tag, static_cast<std::uint32_t>(a))).block(b);
  return (static_cast<std::uint64_t>(blk[0]) << 32) | blk[1];
}

Tensor stack(const std::vector<Tensor>& cubes) {
  const Shape s = cubes.front().shape();
  Tensor out({cubes.size(), s[0], s[1], s[2]});
  auto d = out.mutable_data();
  const std::size_t n = shape_numel(s);
  for (std::size_t k = 0; k < cubes.size(); ++k) {
    if (cubes[k].shape() != s) throw DimensionError("training patches must share one shape");
    std::copy(cubes[k].data().begin(), cubes[k].data().end(), d.begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return out;
}

}  // namespace

Batch make_batch(const std::vector<Tensor>& dataset, const TrainOptions& options, std::uint64_t step) {
  if (dataset.empty()) throw UsageError("training set is empty");
  if (options.batch == 0) throw UsageError("batch size must be positive");
  RngStream rng(options.seed, stream_id(kTagBatch, static_cast<std::uint32_t>(step)));
  Batch b;
  std::vector<Tensor> clean, noisy;
  for (std::size_t k = 0; k < options.batch; ++k) {
    const std::size_t i = rng.below(dataset.size());
    b.indices.push_back(i);
    clean.push_back(dataset[i]);
    noisy.push_back(apply_noise(dataset[i], options.noise, derive_seed(options.seed, kTagNoise, step, k)));
  }
  b.clean = stack(clean);
  b.noisy = stack(noisy);
  return b;
}

double train_step(SertModel& model, AdamState& adam, const std::vector<Tensor>& dataset, const TrainOptions& options) {
  const std::uint64_t step = adam.step;
  const Batch batch = make_batch(dataset, options, step);
  auto params = model.parameters();
  model.zero_grad();
  Tape tape;
  double loss_value = 0.0;
  {
    TapeGuard guard(tape);
    Tensor out = model.forward(batch.noisy);
    Tensor loss = ops::mse_loss(out, batch.clean);
    loss_value = loss.item();
    tape.backward(loss);
  }
  adam.options = options.adam;
  if (options.lr_drop_step > 0 && step >= options.lr_drop_step) adam.options.lr = options.adam.lr / 10.0;
  adam_step(params, adam);
  return loss_value;
}

Tensor denoise(const SertModel& model, const Tensor& noisy) {
  if (noisy.ndim() != 3) throw DimensionError("denoise: expected an [H, W, B] cube, got " + shape_str(noisy.shape()));
  return model.forward(noisy);
}

ValidationResult validate(const SertModel& model, const std::vector<Tensor>& clean, const NoiseSpec& noise,
                          std::uint64_t seed) {
  ValidationResult r;
  if (clean.empty()) return r;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Tensor y = apply_noise(clean[i], noise, derive_seed(seed, kTagValid, i, 0));
    r.noisy_psnr += psnr(y, clean[i]);
    r.denoised_psnr += psnr(denoise(model, y), clean[i]);
  }
  r.noisy_psnr /= static_cast<double>(clean.size());
  r.denoised_psnr /= static_cast<double>(clean.size());
  return r;
}

std::vector<Tensor> texture_dataset(std::size_t count, std::size_t h, std::size_t w, std::size_t bands,
                                    std::uint64_t seed) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_texture(h, w, bands, derive_seed(seed, kTagData, i, 0)));
  return out;
}

// --- gradient checking ------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

void randomize_tail(SertModel& model, std::uint64_t seed) {
  RngStream rng(seed, stream_id(kTagTail, 0));
  for (Tensor* t : {&model.tail().weight, &model.tail().bias}) {
    for (auto& v : t->mutable_data()) v = rng.uniform(-0.1, 0.1);
  }
}

std::vector<GradCheckEntry> gradcheck_model(SertModel& model, std::size_t height, std::size_t width,
                                            std::uint64_t seed, std::size_t max_per_tensor) {
  const std::size_t B = model.config().bands;
  Tensor y({1, height, width, B}), weights({1, height, width, B});
  RngStream rng(seed, stream_id(kTagCheck, 0));
  for (auto& v : y.mutable_data()) v = rng.uniform();
  for (auto& v : weights.mutable_data()) v = rng.uniform(-1.0, 1.0);

  auto objective = [&] {
    const Tensor out = model.forward(y);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
  };

  model.zero_grad();
  Tape tape;
  {
    TapeGuard guard(tape);
    Tensor loss = ops::sum(ops::mul(model.forward(y), weights));
    tape.backward(loss);
  }

  std::vector<GradCheckEntry> out;
  for (const auto& [name, tensor] : model.named_parameters()) {
    Tensor t = tensor;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    GradCheckEntry e{name, 0, 0.0};
    const std::size_t n = t.size();
    const std::size_t count = max_per_tensor == 0 ? n : std::min(n, max_per_tensor);
    RngStream pick(seed, stream_id(kTagCheck, static_cast<std::uint32_t>(out.size() + 1)));
    const auto coords = count == n ? std::vector<std::size_t>() : pick.choose(n, count);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = coords.empty() ? c : coords[c];
      auto d = t.mutable_data();
      const double orig = d[i];
      d[i] = orig + kGradCheckStep;
      const double plus = objective();
      d[i] = orig - kGradCheckStep;
      const double minus = objective();
      d[i] = orig;
      const double numeric = (plus - minus) / (2.0 * kGradCheckStep);
      e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic.empty() ? 0.0 : analytic[i], numeric,
                                                                 kGradCheckFloor));
      ++e.checked;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace sert
