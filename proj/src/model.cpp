#include "sert/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "sert/errors.hpp"
#include "sert/ops.hpp"
#include "sert/rng.hpp"

namespace sert {

// --- config -------------------------------------------------------------------

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (bands == 0) fail("bands must be positive");
  if (channels < 2 || channels % 2 != 0) fail("channels must be even, got " + std::to_string(channels));
  if (heads == 0 || (channels / 2) % heads != 0) {
    fail("heads (" + std::to_string(heads) + ") must divide channels/2 (" + std::to_string(channels / 2) + ")");
  }
  if (rank == 0 || rank >= channels) fail("rank K must satisfy 1 <= K < C");
  if (memory_entries == 0) fail("memory_entries must be positive");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (layers.empty()) fail("at least one layer is required");
  for (const auto& l : layers) {
    RectSpec{l.rect_h, l.rect_w}.validate();
    if (l.blocks == 0) fail("every layer needs at least one block");
  }
}

namespace {

std::string placement_name(SePlacement p) {
  switch (p) {
    case SePlacement::non_local: return "non_local";
    case SePlacement::local: return "local";
    case SePlacement::global: return "global";
  }
  return "non_local";
}

SePlacement parse_placement(const std::string& s) {
  if (s == "non_local") return SePlacement::non_local;
  if (s == "local") return SePlacement::local;
  if (s == "global") return SePlacement::global;
  throw ConfigError("model config: unknown se_placement '" + s + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("model config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("model config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  std::string rects, blocks;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) {
      rects += ",";
      blocks += ",";
    }
    rects += std::to_string(layers[i].rect_h) + "x" + std::to_string(layers[i].rect_w);
    blocks += std::to_string(layers[i].blocks);
  }
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"bands", std::to_string(bands)},
      {"channels", std::to_string(channels)},
      {"rank", std::to_string(rank)},
      {"heads", std::to_string(heads)},
      {"memory_entries", std::to_string(memory_entries)},
      {"mlp_ratio", std::to_string(mlp_ratio)},
      {"rects", rects},
      {"blocks", blocks},
      {"use_ra", b(use_ra)},
      {"use_se", b(use_se)},
      {"use_shuffle", b(use_shuffle)},
      {"use_mu", b(use_mu)},
      {"use_mlp", b(use_mlp)},
      {"use_norm", b(use_norm)},
      {"layer_conv", b(layer_conv)},
      {"body_conv", b(body_conv)},
      {"sigmoid_gate", b(sigmoid_gate)},
      {"se_placement", placement_name(se_placement)},
  };
}

ModelConfig ModelConfig::from_pairs(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  std::vector<std::string> rects, blocks;
  for (const auto& [key, value] : kv) {
    if (key == "bands") c.bands = parse_size(key, value);
    else if (key == "channels") c.channels = parse_size(key, value);
    else if (key == "rank") c.rank = parse_size(key, value);
    else if (key == "heads") c.heads = parse_size(key, value);
    else if (key == "memory_entries") c.memory_entries = parse_size(key, value);
    else if (key == "mlp_ratio") c.mlp_ratio = parse_size(key, value);
    else if (key == "rects") rects = split(value, ',');
    else if (key == "blocks") blocks = split(value, ',');
    else if (key == "use_ra") c.use_ra = parse_bool(key, value);
    else if (key == "use_se") c.use_se = parse_bool(key, value);
    else if (key == "use_shuffle") c.use_shuffle = parse_bool(key, value);
    else if (key == "use_mu") c.use_mu = parse_bool(key, value);
    else if (key == "use_mlp") c.use_mlp = parse_bool(key, value);
    else if (key == "use_norm") c.use_norm = parse_bool(key, value);
    else if (key == "layer_conv") c.layer_conv = parse_bool(key, value);
    else if (key == "body_conv") c.body_conv = parse_bool(key, value);
    else if (key == "sigmoid_gate") c.sigmoid_gate = parse_bool(key, value);
    else if (key == "se_placement") c.se_placement = parse_placement(value);
    else throw ConfigError("model config: unknown key '" + key + "'");
  }
  if (!rects.empty() || !blocks.empty()) {
    if (blocks.empty()) blocks.assign(rects.size(), "6");
    if (blocks.size() == 1 && rects.size() > 1) blocks.assign(rects.size(), blocks.front());
    if (rects.size() != blocks.size()) throw ConfigError("model config: 'rects' and 'blocks' list lengths differ");
    c.layers.clear();
    for (std::size_t i = 0; i < rects.size(); ++i) {
      const auto parts = split(rects[i], 'x');
      if (parts.size() != 2) throw ConfigError("model config: rectangle '" + rects[i] + "' is not HxW");
      c.layers.push_back({parse_size("rects", parts[0]), parse_size("rects", parts[1]), parse_size("blocks", blocks[i])});
    }
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.bands = 4;
  c.channels = 8;
  c.rank = 2;
  c.heads = 2;
  c.memory_entries = 4;
  c.layers = {{4, 2, 2}};
  return c;
}

// --- model --------------------------------------------------------------------

namespace {

SeOptions se_options(const ModelConfig& config, const LayerSpec& layer, std::size_t block_index) {
  SeOptions o;
  o.use_memory = config.use_mu;
  o.sigmoid_gate = config.sigmoid_gate;
  o.shifted = block_index % 2 == 1;
  switch (config.se_placement) {
    case SePlacement::non_local:
      o.patch_rows = o.patch_cols = layer.rect_h;
      break;
    case SePlacement::local:
      o.patch_rows = layer.rect_h;
      o.patch_cols = layer.rect_w;
      break;
    case SePlacement::global:
      o.whole_map = true;
      o.shifted = false;
      break;
  }
  return o;
}

Tensor conv(const Tensor& x, const Conv3x3& c) { return ops::conv2d_3x3(x, c.weight, c.bias); }

Conv3x3 make_conv(std::size_t cin, std::size_t cout) {
  return {Tensor::zeros({3, 3, cin, cout}), Tensor::zeros({cout})};
}

}  // namespace

SertModel::SertModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t C = config_.channels, half = C / 2;
  head_ = make_conv(config_.bands, C);
  tail_ = make_conv(C, config_.bands);
  if (config_.body_conv) body_ = make_conv(C, C);
  for (const auto& spec : config_.layers) {
    ResidualLayer layer;
    layer.spec = spec;
    for (std::size_t b = 0; b < spec.blocks; ++b) {
      TransformerBlock blk;
      if (config_.use_norm) {
        blk.norm1 = {Tensor({C}, 1.0), Tensor::zeros({C})};
        if (config_.use_mlp) blk.norm2 = {Tensor({C}, 1.0), Tensor::zeros({C})};
      }
      if (config_.use_ra) {
        RectSpec h{spec.rect_h, spec.rect_w, Orientation::horizontal};
        blk.attn_h = AttentionWeights::zeros(half, config_.heads, h.tile_rows(), h.tile_cols());
        blk.attn_v = AttentionWeights::zeros(half, config_.heads, h.transposed().tile_rows(), h.transposed().tile_cols());
      }
      if (config_.use_se) {
        blk.se = SEWeights::zeros(C, config_.rank);
        if (config_.use_mu) blk.bank = {Tensor::zeros({config_.rank, config_.memory_entries})};
      }
      if (config_.use_mlp) {
        const std::size_t hidden = C * config_.mlp_ratio;
        blk.mlp = {Tensor::zeros({C, hidden}), Tensor::zeros({hidden}), Tensor::zeros({hidden, C}), Tensor::zeros({C})};
      }
      layer.blocks.push_back(std::move(blk));
    }
    if (config_.layer_conv) layer.conv = make_conv(C, C);
    layers_.push_back(std::move(layer));
  }
  for (auto& t : parameters()) t.set_requires_grad(true);
}

std::vector<NamedTensor> SertModel::named_parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&](const std::string& name, const Tensor& t) {
    if (t.defined()) out.push_back({name, t});
  };
  add("head.weight", head_.weight);
  add("head.bias", head_.bias);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
      const auto& blk = layer.blocks[b];
      const std::string p = "layers." + std::to_string(l) + ".blocks." + std::to_string(b) + ".";
      add(p + "norm1.gamma", blk.norm1.gamma);
      add(p + "norm1.beta", blk.norm1.beta);
      for (const auto& [tag, a] : {std::pair<const char*, const AttentionWeights*>{"ra.h.", &blk.attn_h},
                                   std::pair<const char*, const AttentionWeights*>{"ra.v.", &blk.attn_v}}) {
        add(p + tag + "w_q", a->w_q);
        add(p + tag + "w_k", a->w_k);
        add(p + tag + "w_v", a->w_v);
        add(p + tag + "w_o", a->w_o);
        add(p + tag + "b_o", a->b_o);
        add(p + tag + "position_bias", a->position_bias);
      }
      add(p + "se.w_k", blk.se.w_k);
      add(p + "se.w_c", blk.se.w_c);
      add(p + "se.memory", blk.bank.m);
      add(p + "norm2.gamma", blk.norm2.gamma);
      add(p + "norm2.beta", blk.norm2.beta);
      add(p + "mlp.w1", blk.mlp.w1);
      add(p + "mlp.b1", blk.mlp.b1);
      add(p + "mlp.w2", blk.mlp.w2);
      add(p + "mlp.b2", blk.mlp.b2);
    }
    add("layers." + std::to_string(l) + ".conv.weight", layer.conv.weight);
    add("layers." + std::to_string(l) + ".conv.bias", layer.conv.bias);
  }
  add("body.weight", body_.weight);
  add("body.bias", body_.bias);
  add("tail.weight", tail_.weight);
  add("tail.bias", tail_.bias);
  return out;
}

std::vector<Tensor> SertModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::size_t SertModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.size();
  return n;
}

void SertModel::zero_grad() {
  for (auto t : parameters()) t.zero_grad();
}

Tensor block_forward(const Tensor& z, const TransformerBlock& block, const LayerSpec& layer, std::size_t block_index,
                     const ModelConfig& config, SeTrace* trace) {
  Tensor zn = config.use_norm ? ops::layer_norm(z, block.norm1.gamma, block.norm1.beta) : z;
  Tensor acc = z;
  if (config.use_ra) {
    acc = ops::add(acc, ra_forward(zn, RectSpec{layer.rect_h, layer.rect_w}, block.attn_h, block.attn_v,
                                   config.use_shuffle));
  }
  if (config.use_se) {
    acc = ops::add(acc, se_forward(zn, se_options(config, layer, block_index), block.se, block.bank, trace));
  }
  if (config.use_mlp) {
    Tensor m = config.use_norm ? ops::layer_norm(acc, block.norm2.gamma, block.norm2.beta) : acc;
    m = ops::add_bias(ops::matmul(m, block.mlp.w1), block.mlp.b1);
    m = ops::gelu(m);
    m = ops::add_bias(ops::matmul(m, block.mlp.w2), block.mlp.b2);
    acc = ops::add(acc, m);
  }
  return acc;
}

Tensor rtl_forward(const Tensor& z, const ResidualLayer& layer, const ModelConfig& config, std::vector<ZlRecord>* zl,
                   std::size_t layer_index) {
  Tensor h = z;
  for (std::size_t b = 0; b < layer.blocks.size(); ++b) {
    SeTrace trace;
    h = block_forward(h, layer.blocks[b], layer.spec, b, config, zl && config.use_se ? &trace : nullptr);
    if (zl && config.use_se) zl->push_back({layer_index, b, std::move(trace)});
  }
  if (config.layer_conv) h = conv(h, layer.conv);
  return ops::add(z, h);
}

Tensor SertModel::forward(const Tensor& y, std::vector<ZlRecord>* zl) const {
  const bool unbatched = y.ndim() == 3;
  if (!unbatched && y.ndim() != 4) {
    throw DimensionError("sert_forward: expected [H, W, B] or [N, H, W, B], got " + shape_str(y.shape()));
  }
  if (y.shape().back() != config_.bands) {
    throw ConfigError("sert_forward: input has " + std::to_string(y.shape().back()) + " bands, model expects " +
                      std::to_string(config_.bands));
  }
  y.check_finite("sert_forward input");
  Tensor x = unbatched ? ops::reshape(y, {1, y.dim(0), y.dim(1), y.dim(2)}) : y;
  Tensor shallow = conv(x, head_);
  Tensor h = shallow;
  for (std::size_t l = 0; l < layers_.size(); ++l) h = rtl_forward(h, layers_[l], config_, zl, l);
  if (config_.body_conv) h = ops::add(conv(h, body_), shallow);
  Tensor out = ops::add(x, conv(h, tail_));
  return unbatched ? ops::reshape(out, y.shape()) : out;
}

// --- initialization -------------------------------------------------------------

namespace {

void fill_trunc_normal(Tensor& t, RngStream& rng, double stddev) {
  for (auto& v : t.mutable_data()) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = z * stddev;
  }
}

void fill_uniform(Tensor& t, RngStream& rng, double bound) {
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

constexpr std::uint32_t kInitTag = 0x494E4954;  // "INIT"

}  // namespace

SertModel init_weights(const ModelConfig& config, std::uint64_t seed) {
  SertModel model(config);
  const auto named = model.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t = named[i].tensor;
    const std::string& name = named[i].name;
    RngStream rng(seed, stream_id(kInitTag, static_cast<std::uint32_t>(i)));
    if (name.starts_with("tail.")) continue;  // zero: network starts as identity
    if (ends_with(name, "conv.weight") || name == "head.weight" || name == "body.weight") {
      const double fan_in = static_cast<double>(t.dim(0) * t.dim(1) * t.dim(2));
      fill_uniform(t, rng, 1.0 / std::sqrt(fan_in));
    } else if (ends_with(name, "conv.bias") || name == "head.bias" || name == "body.bias") {
      // bias bound follows the weight's fan-in
      const Tensor& w = named[i - 1].tensor;
      fill_uniform(t, rng, 1.0 / std::sqrt(static_cast<double>(w.dim(0) * w.dim(1) * w.dim(2))));
    } else if (ends_with(name, "se.memory")) {
      fill_uniform(t, rng, 1.0 / std::sqrt(static_cast<double>(config.rank)));
    } else if (ends_with(name, ".gamma")) {
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 1.0);
    } else if (ends_with(name, ".beta") || ends_with(name, "b_o") || ends_with(name, ".b1") || ends_with(name, ".b2")) {
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    } else {
      fill_trunc_normal(t, rng, 0.02);
    }
  }
  return model;
}

std::uint64_t parameter_checksum(const SertModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : model.parameters()) {
    for (double v : t.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

// --- accounting -------------------------------------------------------------------

std::uint64_t CountBreakdown::total() const {
  std::uint64_t n = 0;
  for (const auto& i : items) n += i.count;
  return n;
}

std::uint64_t CountBreakdown::assumed_total() const {
  std::uint64_t n = 0;
  for (const auto& i : items)
    if (i.assumed) n += i.count;
  return n;
}

std::uint64_t CountBreakdown::get(const std::string& name) const {
  for (const auto& i : items)
    if (i.name == name) return i.count;
  return 0;
}

CountBreakdown param_count(const ModelConfig& config) {
  config.validate();
  const std::uint64_t C = config.channels, c = C / 2, B = config.bands, K = config.rank, E = config.memory_entries;
  const std::uint64_t hidden = C * config.mlp_ratio;
  std::uint64_t qkv = 0, out_proj = 0, pos = 0, se = 0, mem = 0, norms = 0, mlp = 0, layer_convs = 0;
  for (const auto& l : config.layers) {
    const std::uint64_t nb = l.blocks;
    if (config.use_ra) {
      qkv += nb * 2 * 3 * c * c;
      out_proj += nb * 2 * (c * c + c);
      pos += nb * 2 * config.heads * relative_position_table_size(l.rect_h, l.rect_w);
    }
    if (config.use_se) {
      se += nb * 2 * C * K;
      if (config.use_mu) mem += nb * K * E;
    }
    if (config.use_norm) norms += nb * (config.use_mlp ? 4 : 2) * C;
    if (config.use_mlp) mlp += nb * (C * hidden + hidden + hidden * C + C);
    if (config.layer_conv) layer_convs += 9 * C * C + C;
  }
  CountBreakdown b;
  b.items = {
      {"head_conv", 9 * B * C + C, true, "3x3 conv bands->C"},
      {"attention_qkv", qkv, false, "W_q, W_k, W_v per branch (C/2 x C/2)"},
      {"attention_out_proj", out_proj, true, "per-branch C/2 x C/2 projection + bias"},
      {"position_bias", pos, false, "relative position tables P"},
      {"se_projection", se, false, "W_k and W_c (C x K each)"},
      {"memory_bank", mem, false, "M (K x E)"},
      {"norms", norms, true, "LayerNorm gamma/beta"},
      {"mlp", mlp, true, "two-layer MLP, expansion " + std::to_string(config.mlp_ratio)},
      {"layer_convs", layer_convs, true, "3x3 conv closing each residual layer"},
      {"body_conv", config.body_conv ? 9 * C * C + C : 0, true, "3x3 conv after the last layer"},
      {"tail_conv", 9 * C * B + B, true, "3x3 conv C->bands"},
  };
  return b;
}

CountBreakdown flops_estimate(const ModelConfig& config, std::size_t height, std::size_t width) {
  config.validate();
  auto up = [](std::uint64_t v, std::uint64_t m) { return (v + m - 1) / m * m; };
  const std::uint64_t H = height, W = width, HW = H * W;
  const std::uint64_t C = config.channels, c = C / 2, B = config.bands, K = config.rank, E = config.memory_entries;
  const std::uint64_t hidden = C * config.mlp_ratio;
  std::uint64_t proj = 0, out_proj = 0, attn = 0, se = 0, mem = 0, mlp = 0, layer_convs = 0;
  for (const auto& l : config.layers) {
    const std::uint64_t nb = l.blocks;
    if (config.use_ra) {
      const RectSpec hs{l.rect_h, l.rect_w, Orientation::horizontal};
      for (const RectSpec& r : {hs, hs.transposed()}) {
        const std::uint64_t n = up(H, r.tile_rows()) * up(W, r.tile_cols());
        const std::uint64_t T = r.tokens();
        proj += nb * 3 * n * c * c;
        out_proj += nb * n * c * c;
        attn += nb * 2 * n * T * c;  // QK^T and AV
      }
    }
    if (config.use_se) {
      std::uint64_t patches = 1;
      if (config.se_placement == SePlacement::non_local) {
        patches = (up(H, l.rect_h) / l.rect_h) * (up(W, l.rect_h) / l.rect_h);
      } else if (config.se_placement == SePlacement::local) {
        patches = (up(H, l.rect_h) / l.rect_h) * (up(W, l.rect_w) / l.rect_w);
      }
      se += nb * patches * 2 * C * K;
      if (config.use_mu) mem += nb * patches * 2 * K * E;
    }
    if (config.use_mlp) mlp += nb * 2 * HW * C * hidden;
    if (config.layer_conv) layer_convs += HW * 9 * C * C;
  }
  CountBreakdown b;
  b.items = {
      {"head_conv", HW * 9 * B * C, true, ""},
      {"attention_qkv", proj, false, ""},
      {"attention_out_proj", out_proj, true, ""},
      {"attention_scores", attn, false, "QK^T and AV inside rectangles"},
      {"se_projection", se, false, ""},
      {"memory_bank", mem, false, ""},
      {"mlp", mlp, true, ""},
      {"layer_convs", layer_convs, true, ""},
      {"body_conv", config.body_conv ? HW * 9 * C * C : 0, true, ""},
      {"tail_conv", HW * 9 * C * B, true, ""},
  };
  return b;
}

}  // namespace sert
