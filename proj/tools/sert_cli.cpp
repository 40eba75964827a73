// sert: synthesize noisy cubes, train, denoise, evaluate and inspect models.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sert/degradation.hpp"
#include "sert/errors.hpp"
#include "sert/io.hpp"
#include "sert/metrics.hpp"
#include "sert/model.hpp"
#include "sert/train.hpp"

namespace fs = std::filesystem;
using namespace sert;

namespace {

std::vector<std::size_t> parse_dims(const std::string& text, std::size_t count, const std::string& what) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t x = text.find('x', start);
    const std::string part = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != part.size() || v == 0) throw ParameterError(what + ": cannot parse '" + text + "'");
    out.push_back(v);
    if (x == std::string::npos) break;
    start = x + 1;
  }
  if (out.size() != count) throw ParameterError(what + ": expected " + std::to_string(count) + " extents in '" + text + "'");
  return out;
}

// "texture:HxWxB" generates a cube from the seed; anything else is a file.
Tensor load_clean(const std::string& spec, std::uint64_t seed) {
  if (spec.starts_with("texture:")) {
    const auto d = parse_dims(spec.substr(8), 3, "--clean");
    return synth_texture(d[0], d[1], d[2], seed);
  }
  return load_hsi(spec).data;
}

NoiseSpec resolve_noise(const std::string& arg) {
  if (fs::exists(arg)) return load_recipe(arg);
  return named_recipe(arg);
}

std::vector<std::pair<std::string, std::string>> prefixed(const std::vector<std::pair<std::string, std::string>>& kv,
                                                          const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : kv) out.emplace_back(prefix + k, v);
  return out;
}

// Non-overlapping patch x patch crops (whole images when patch == 0).
std::vector<Tensor> crop_patches(const Tensor& img, std::size_t patch) {
  if (patch == 0) return {img};
  const std::size_t H = img.dim(0), W = img.dim(1), B = img.dim(2);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i + patch <= H; i += patch) {
    for (std::size_t j = 0; j + patch <= W; j += patch) {
      Tensor t({patch, patch, B});
      auto d = t.mutable_data();
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
          for (std::size_t b = 0; b < B; ++b) d[(r * patch + c) * B + b] = img.data()[((i + r) * W + j + c) * B + b];
      out.push_back(std::move(t));
    }
  }
  return out;
}

// "texture:N:HxWxB" or a directory of .hsr files.
std::vector<Tensor> load_dataset(const std::string& spec, std::size_t patch, std::uint64_t seed) {
  if (spec.starts_with("texture:")) {
    const std::string rest = spec.substr(8);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ParameterError("--data texture:N:HxWxB expected, got '" + spec + "'");
    const std::size_t n = parse_dims(rest.substr(0, colon), 1, "--data")[0];
    const auto d = parse_dims(rest.substr(colon + 1), 3, "--data");
    std::vector<Tensor> out;
    for (auto& t : texture_dataset(n, d[0], d[1], d[2], seed)) {
      for (auto& p : crop_patches(t, patch)) out.push_back(std::move(p));
    }
    return out;
  }
  if (!fs::is_directory(spec)) throw ParameterError("--data: '" + spec + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(spec)) {
    if (e.path().extension() == ".hsr") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParameterError("--data: no .hsr files in '" + spec + "'");
  std::vector<Tensor> out;
  for (const auto& f : files) {
    for (auto& p : crop_patches(load_hsi(f.string()).data, patch)) out.push_back(std::move(p));
  }
  return out;
}

// --- subcommands ---------------------------------------------------------------

struct SynthArgs {
  std::string clean, noise, out, clean_out, dtype = "f64";
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const Tensor x = load_clean(a.clean, a.seed);
  const NoiseSpec spec = resolve_noise(a.noise);
  HsiImage y;
  y.data = apply_noise(x, spec, a.seed);
  y.seed = a.seed;
  y.meta = prefixed(spec.to_pairs(), "recipe.");
  y.meta.emplace_back("clean", a.clean);
  const Dtype dt = a.dtype == "f32" ? Dtype::f32 : Dtype::f64;
  save_hsi(y, a.out, dt);
  if (!a.clean_out.empty()) {
    HsiImage c;
    c.data = x;
    c.seed = a.seed;
    c.meta.emplace_back("clean", a.clean);
    save_hsi(c, a.clean_out, dt);
  }
  std::cout << "wrote " << a.out << " (" << shape_str(x.shape()) << ", noisy PSNR " << psnr(y.data, x) << " dB)\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, ckpt, resume, noise = "iid:50", val;
  std::size_t epochs = 0, batch = 4, patch = 0, steps = 0;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const ModelConfig config = load_config(a.config);
  const std::vector<Tensor> data = load_dataset(a.data, a.patch, a.seed);
  const std::size_t steps_per_epoch = a.steps ? a.steps : (data.size() + a.batch - 1) / a.batch;
  const std::uint64_t total = steps_per_epoch * a.epochs;

  TrainOptions opt;
  opt.batch = a.batch;
  opt.noise = resolve_noise(a.noise);
  opt.adam.lr = a.lr;
  opt.seed = a.seed;
  opt.lr_drop_step = (a.epochs * 5 / 8) * steps_per_epoch;

  SertModel model = init_weights(config, a.seed);
  AdamState adam;
  adam.options = opt.adam;
  if (!a.resume.empty()) {
    const CheckpointInfo info = load_checkpoint(a.resume, model, adam);
    if (info.seed != a.seed) throw ConfigError("--resume: checkpoint was trained with seed " + std::to_string(info.seed));
    std::cout << "resumed from " << a.resume << " at step " << adam.step << "\n";
  }
  std::vector<Tensor> val;
  if (!a.val.empty()) val = load_dataset(a.val, a.patch, a.seed + 1);

  CheckpointInfo info;
  info.seed = a.seed;
  info.meta = {{"batch", std::to_string(a.batch)},
               {"data", a.data},
               {"epochs", std::to_string(a.epochs)},
               {"lr", std::to_string(a.lr)},
               {"lr_drop_step", std::to_string(opt.lr_drop_step)},
               {"noise", a.noise},
               {"steps_per_epoch", std::to_string(steps_per_epoch)}};

  std::cout << "training " << data.size() << " samples, " << steps_per_epoch << " steps/epoch, " << total
            << " steps, " << model.parameter_count() << " parameters\n";
  double epoch_loss = 0.0;
  while (adam.step < total) {
    epoch_loss += train_step(model, adam, data, opt);
    if (adam.step % steps_per_epoch == 0) {
      std::printf("epoch %4llu  step %6llu  loss %.6f", static_cast<unsigned long long>(adam.step / steps_per_epoch),
                  static_cast<unsigned long long>(adam.step), epoch_loss / static_cast<double>(steps_per_epoch));
      if (!val.empty()) {
        const auto v = validate(model, val, opt.noise, a.seed);
        std::printf("  val PSNR %.3f dB (noisy %.3f)", v.denoised_psnr, v.noisy_psnr);
      }
      std::printf("\n");
      std::fflush(stdout);
      epoch_loss = 0.0;
    }
  }
  info.step = adam.step;
  save_checkpoint(a.ckpt, model, adam, info);
  std::cout << "saved " << a.ckpt << "\n";
  return 0;
}

int run_denoise(const std::string& ckpt, const std::string& in, const std::string& out) {
  CheckpointInfo info;
  const SertModel model = load_model(ckpt, nullptr, &info);
  HsiImage y = load_hsi(in);
  HsiImage x;
  x.data = denoise(model, y.data);
  x.seed = y.seed;
  x.meta = prefixed(model.config().to_pairs(), "config.");
  x.meta.emplace_back("checkpoint", ckpt);
  x.meta.emplace_back("checkpoint_seed", std::to_string(info.seed));
  x.meta.emplace_back("source", in);
  save_hsi(x, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_eval(const std::vector<std::string>& refs, const std::vector<std::string>& tests, const std::string& format) {
  if (refs.size() != tests.size()) throw ParameterError("eval: give one --test per --ref");
  std::vector<std::pair<std::string, MetricReport>> reports;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    reports.emplace_back(fs::path(tests[i]).filename().string(), evaluate(load_hsi(tests[i]).data, load_hsi(refs[i]).data));
  }
  if (format == "table" || format == "both") std::cout << format_table(reports);
  if (format == "both") std::cout << "\n";
  if (format == "kv" || format == "both") std::cout << format_key_values(reports);
  return 0;
}

std::string group_of(const std::string& name) {
  static const std::pair<const char*, const char*> kGroups[] = {
      {"position_bias", "position_bias"}, {"se.memory", "memory"}, {".se.", "se"},   {".ra.", "attention"},
      {".norm", "norm"},                  {".mlp.", "mlp"},       {".conv.", "layer_conv"}};
  for (const auto& [needle, group] : kGroups) {
    if (name.find(needle) != std::string::npos) return group;
  }
  return name.substr(0, name.find('.'));
}

int run_gradcheck(const std::string& config_path, std::uint64_t seed, const std::string& hw, std::size_t samples,
                  double tolerance) {
  const ModelConfig config = config_path.empty() ? ModelConfig::toy() : load_config(config_path);
  const auto d = parse_dims(hw, 2, "--hw");
  SertModel model = init_weights(config, seed);
  randomize_tail(model, seed);
  const auto entries = gradcheck_model(model, d[0], d[1], seed, samples);
  std::map<std::string, std::pair<std::size_t, double>> groups;
  double worst = 0.0;
  for (const auto& e : entries) {
    auto& g = groups[group_of(e.name)];
    g.first += e.checked;
    g.second = std::max(g.second, e.max_rel_error);
    worst = std::max(worst, e.max_rel_error);
  }
  std::printf("%-16s %8s  %s\n", "group", "checked", "max_rel_error");
  for (const auto& [name, g] : groups) std::printf("%-16s %8zu  %.3e\n", name.c_str(), g.first, g.second);
  std::printf("overall max_rel_error=%.3e tolerance=%.1e %s\n", worst, tolerance, worst < tolerance ? "ok" : "FAILED");
  return worst < tolerance ? 0 : 1;
}

void print_breakdown(const CountBreakdown& b, const char* unit, double scale, const char* scaled_unit) {
  for (const auto& i : b.items) {
    std::printf("  %-20s %16llu %s  %10.4f %s%s%s\n", i.name.c_str(), static_cast<unsigned long long>(i.count), unit,
                static_cast<double>(i.count) * scale, scaled_unit, i.assumed ? "  [assumed]" : "",
                i.note.empty() ? "" : ("  " + i.note).c_str());
  }
  std::printf("  %-20s %16llu %s  %10.4f %s\n", "total", static_cast<unsigned long long>(b.total()), unit,
              static_cast<double>(b.total()) * scale, scaled_unit);
  std::printf("  %-20s %16llu %s  %10.4f %s\n", "assumed subtotal", static_cast<unsigned long long>(b.assumed_total()),
              unit, static_cast<double>(b.assumed_total()) * scale, scaled_unit);
}

int run_stats(const std::string& config_path, const std::string& hw) {
  const ModelConfig config = config_path.empty() ? ModelConfig{} : load_config(config_path);
  const auto d = parse_dims(hw, 2, "--hw");
  const CountBreakdown params = param_count(config);
  std::printf("parameters\n");
  print_breakdown(params, "", 1e-6, "M");
  const CountBreakdown macs = flops_estimate(config, d[0], d[1]);
  std::printf("\nmultiply-accumulates at %zux%zux%zu (1 MAC = 2 FLOPs)\n", d[0], d[1], config.bands);
  print_breakdown(macs, "MAC", 2e-9, "GFLOP");
  std::printf("\nparam_total=%llu\nmac_total=%llu\ngflops=%.4f\n", static_cast<unsigned long long>(params.total()),
              static_cast<unsigned long long>(macs.total()), 2e-9 * static_cast<double>(macs.total()));
  return 0;
}

int run_dump_zl(const std::string& ckpt, const std::string& in, const std::string& out) {
  const SertModel model = load_model(ckpt);
  if (!model.config().use_se) throw ConfigError("dump-zl: model was built without the SE module");
  const HsiImage y = load_hsi(in);
  std::vector<ZlRecord> records;
  model.forward(y.data, &records);
  std::ofstream os(out);
  if (!os) throw FormatError("cannot open '" + out + "' for writing");
  os << "layer\tblock\tpatch\tgrid_row\tgrid_col\tshift";
  for (std::size_t k = 0; k < model.config().rank; ++k) os << "\tz" << k;
  os << "\n";
  char buf[32];
  for (const auto& r : records) {
    const auto& t = r.trace;
    const std::size_t per_image = t.layout.grid_rows() * t.layout.grid_cols();
    const std::size_t K = t.low_rank.dim(1);
    for (std::size_t p = 0; p < t.low_rank.dim(0); ++p) {
      const std::size_t q = p % per_image;
      os << r.layer << '\t' << r.block << '\t' << p << '\t' << q / t.layout.grid_cols() << '\t'
         << q % t.layout.grid_cols() << '\t' << (t.layout.shift_rows > 0 ? 1 : 0);
      for (std::size_t k = 0; k < K; ++k) {
        std::snprintf(buf, sizeof buf, "%.9g", t.low_rank[p * K + k]);
        os << '\t' << buf;
      }
      os << "\n";
    }
  }
  std::cout << "wrote " << records.size() << " SE records to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral denoising with rectangle attention and spectral enhancement"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Corrupt a clean cube with a noise recipe");
  s->add_option("--clean", synth.clean, "Clean .hsr file or texture:HxWxB")->required();
  s->add_option("--noise", synth.noise, "Recipe file or iid:S | noniid:A:B | stripe | deadline | impulse | mixture")
      ->required();
  s->add_option("--seed", synth.seed, "Random seed")->required();
  s->add_option("--out", synth.out, "Noisy output .hsr")->required();
  s->add_option("--clean-out", synth.clean_out, "Also write the clean cube here");
  s->add_option("--dtype", synth.dtype, "Payload type")->check(CLI::IsMember({"f32", "f64"}));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model with Adam on synthetic noise");
  t->add_option("--config", train.config, "Model config file")->required();
  t->add_option("--data", train.data, "Directory of clean .hsr files or texture:N:HxWxB")->required();
  t->add_option("--epochs", train.epochs, "Epochs (lr /10 after 5/8 of them)")->required();
  t->add_option("--seed", train.seed, "Seed for init, batches and noise")->required();
  t->add_option("--ckpt", train.ckpt, "Output checkpoint")->required();
  t->add_option("--resume", train.resume, "Continue from this checkpoint");
  t->add_option("--noise", train.noise, "Training noise recipe")->capture_default_str();
  t->add_option("--batch", train.batch, "Batch size")->capture_default_str();
  t->add_option("--lr", train.lr, "Initial learning rate")->capture_default_str();
  t->add_option("--patch", train.patch, "Crop training images into PxP patches (0 keeps them whole)");
  t->add_option("--steps-per-epoch", train.steps, "Override steps per epoch");
  t->add_option("--val", train.val, "Validation data, same forms as --data");

  std::string ckpt, in, out;
  auto* dn = app.add_subcommand("denoise", "Denoise a cube with a trained checkpoint");
  dn->add_option("--ckpt", ckpt, "Checkpoint")->required();
  dn->add_option("--in", in, "Noisy .hsr")->required();
  dn->add_option("--out", out, "Denoised .hsr")->required();

  std::vector<std::string> refs, tests;
  std::string format = "both";
  auto* ev = app.add_subcommand("eval", "PSNR / SSIM / SAM of test cubes against references");
  ev->add_option("--ref", refs, "Reference .hsr (repeatable)")->required();
  ev->add_option("--test", tests, "Estimate .hsr (repeatable, paired with --ref)")->required();
  ev->add_option("--format", format, "Output form")->check(CLI::IsMember({"table", "kv", "both"}));

  std::string config_path, hw = "8x8", stats_hw = "512x512";
  std::uint64_t gc_seed = 0;
  std::size_t samples = 0;
  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  gc->add_option("--config", config_path, "Model config (default: toy)");
  gc->add_option("--seed", gc_seed, "Seed for weights and probe input")->required();
  gc->add_option("--hw", hw, "Probe spatial size HxW")->capture_default_str();
  gc->add_option("--samples", samples, "Coordinates per tensor (0 = all)");
  gc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  auto* st = app.add_subcommand("stats", "Parameter and FLOP accounting");
  st->add_option("--config", config_path, "Model config (default: full-size model)");
  st->add_option("--hw", stats_hw, "Spatial size HxW")->capture_default_str();

  auto* dz = app.add_subcommand("dump-zl", "Write per-patch low-rank vectors as TSV");
  dz->add_option("--ckpt", ckpt, "Checkpoint")->required();
  dz->add_option("--in", in, "Input .hsr")->required();
  dz->add_option("--out", out, "Output .tsv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(train);
    if (*dn) return run_denoise(ckpt, in, out);
    if (*ev) return run_eval(refs, tests, format);
    if (*gc) return run_gradcheck(config_path, gc_seed, hw, samples, tolerance);
    if (*st) return run_stats(config_path, stats_hw);
    if (*dz) return run_dump_zl(ckpt, in, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
