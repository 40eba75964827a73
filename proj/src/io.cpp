#include "sert/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sert/errors.hpp"

namespace sert {

namespace {

constexpr const char* kHsiMagic = "HSR1";
constexpr const char* kCkptMagic = "SERTCK1";
constexpr int kCkptVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, const char* what) : b_(bytes), pos_(pos), what_(what) {}
  std::uint64_t u(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(u(4, field)); }
  std::uint64_t u64(const char* field) { return u(8, field); }
  double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::size_t n, const char* field) const {
    if (remaining() < n) throw FormatError(std::string(what_) + ": truncated payload (reading " + field + ")");
  }

 private:
  const std::string& b_;
  std::size_t pos_;
  const char* what_;
};

struct Header {
  std::vector<std::pair<std::string, std::string>> lines;
  std::size_t payload_offset = 0;
};

// Magic line, key=value lines, blank line.
Header split_header(const std::string& bytes, const char* magic, const char* what) {
  const std::size_t first = bytes.find('\n');
  if (first == std::string::npos || bytes.compare(0, first, magic) != 0) {
    throw FormatError(std::string(what) + ": bad magic (expected " + magic + ")");
  }
  Header h;
  std::size_t pos = first + 1;
  while (true) {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) throw FormatError(std::string(what) + ": header not terminated by a blank line");
    const std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) break;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw FormatError(std::string(what) + ": malformed header line '" + line + "'");
    h.lines.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  h.payload_offset = pos;
  return h;
}

std::uint64_t header_uint(const std::string& what, const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') throw FormatError(what + ": field '" + key + "' is not an unsigned integer");
  return out;
}

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw FormatError("checkpoint: field '" + key + "' is not a number");
  return d;
}

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

}  // namespace

// --- files ---------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

// --- HSI -------------------------------------------------------------------------

std::string encode_hsi(const HsiImage& image, Dtype dtype) {
  const Tensor& x = image.data;
  if (x.ndim() != 3) throw DimensionError("save_hsi: expected an [H, W, B] cube, got " + shape_str(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), B = x.dim(2);
  std::string out = std::string(kHsiMagic) + "\n";
  out += "height=" + std::to_string(H) + "\n";
  out += "width=" + std::to_string(W) + "\n";
  out += "bands=" + std::to_string(B) + "\n";
  out += std::string("dtype=") + (dtype == Dtype::f32 ? "f32" : "f64") + "\n";
  out += "layout=band-major\n";
  if (image.seed) out += "seed=" + std::to_string(*image.seed) + "\n";
  for (const auto& [k, v] : image.meta) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("save_hsi: metadata key '" + k + "' cannot be stored in the header");
    }
    for (char c : k) {
      if (c >= 'A' && c <= 'Z') throw FormatError("save_hsi: header key '" + k + "' must be lowercase");
    }
    out += k + "=" + v + "\n";
  }
  out += "\n";
  const auto d = x.data();
  out.reserve(out.size() + d.size() * (dtype == Dtype::f32 ? 4 : 8));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < H * W; ++p) {
      if (dtype == Dtype::f32) put_f32(out, static_cast<float>(d[p * B + b]));
      else put_f64(out, d[p * B + b]);
    }
  }
  return out;
}

HsiImage decode_hsi(const std::string& bytes) {
  const Header h = split_header(bytes, kHsiMagic, "hsi");
  std::uint64_t H = 0, W = 0, B = 0;
  bool has_h = false, has_w = false, has_b = false, has_dtype = false;
  Dtype dtype = Dtype::f64;
  HsiImage img;
  for (const auto& [k, v] : h.lines) {
    if (k == "height") H = header_uint("hsi", k, v), has_h = true;
    else if (k == "width") W = header_uint("hsi", k, v), has_w = true;
    else if (k == "bands") B = header_uint("hsi", k, v), has_b = true;
    else if (k == "dtype") {
      if (v == "f32") dtype = Dtype::f32;
      else if (v == "f64") dtype = Dtype::f64;
      else throw FormatError("hsi: unknown dtype '" + v + "'");
      has_dtype = true;
    } else if (k == "layout") {
      if (v != "band-major") throw FormatError("hsi: unsupported layout '" + v + "'");
    } else if (k == "seed") {
      img.seed = header_uint("hsi", k, v);
    } else {
      img.meta.emplace_back(k, v);
    }
  }
  if (!has_h) throw FormatError("hsi: missing field 'height'");
  if (!has_w) throw FormatError("hsi: missing field 'width'");
  if (!has_b) throw FormatError("hsi: missing field 'bands'");
  if (!has_dtype) throw FormatError("hsi: missing field 'dtype'");
  if (H == 0) throw FormatError("hsi: field 'height' must be positive");
  if (W == 0) throw FormatError("hsi: field 'width' must be positive");
  if (B == 0) throw FormatError("hsi: field 'bands' must be positive");

  const std::size_t elem = dtype == Dtype::f32 ? 4 : 8;
  const std::size_t count = H * W * B;
  const std::size_t available = bytes.size() - h.payload_offset;
  if (available < count * elem) {
    throw FormatError("hsi: truncated payload (expected " + std::to_string(count * elem) + " bytes, found " +
                      std::to_string(available) + ")");
  }
  if (available > count * elem) throw FormatError("hsi: payload longer than declared size");

  Reader r(bytes, h.payload_offset, "hsi");
  img.data = Tensor({H, W, B});
  auto d = img.data.mutable_data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < H * W; ++p) {
      d[p * B + b] = dtype == Dtype::f32 ? static_cast<double>(r.f32("voxel")) : r.f64("voxel");
    }
  }
  return img;
}

void save_hsi(const HsiImage& image, const std::string& path, Dtype dtype) {
  write_file(path, encode_hsi(image, dtype));
}

HsiImage load_hsi(const std::string& path) { return decode_hsi(read_file(path)); }

// --- config -----------------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what) {
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
    if (eq == std::string::npos) throw ConfigError(what + " line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.count(key)) throw ConfigError(what + " line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_config(const ModelConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.to_pairs()) out += k + " = " + v + "\n";
  return out;
}

ModelConfig parse_config(const std::string& text) {
  return ModelConfig::from_pairs(parse_key_values(text, "model config"));
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// --- checkpoints ---------------------------------------------------------------------

std::string encode_checkpoint(const SertModel& model, const AdamState& adam, const CheckpointInfo& info) {
  const auto named = model.named_parameters();
  const bool has_moments = !adam.m.empty();
  if (has_moments && (adam.m.size() != named.size() || adam.v.size() != named.size())) {
    throw UsageError("save_checkpoint: optimizer state tracks " + std::to_string(adam.m.size()) +
                     " tensors, model has " + std::to_string(named.size()));
  }
  std::string out = std::string(kCkptMagic) + "\n";
  out += "format_version=" + std::to_string(kCkptVersion) + "\n";
  out += "step=" + std::to_string(info.step) + "\n";
  out += "seed=" + std::to_string(info.seed) + "\n";
  for (const auto& [k, v] : model.config().to_pairs()) out += "config." + k + "=" + v + "\n";
  out += "params=" + std::to_string(named.size()) + "\n";
  out += "adam.step=" + std::to_string(adam.step) + "\n";
  out += "adam.lr=" + hexfloat(adam.options.lr) + "\n";
  out += "adam.beta1=" + hexfloat(adam.options.beta1) + "\n";
  out += "adam.beta2=" + hexfloat(adam.options.beta2) + "\n";
  out += "adam.eps=" + hexfloat(adam.options.eps) + "\n";
  out += std::string("adam.moments=") + (has_moments ? "1" : "0") + "\n";
  for (const auto& [k, v] : info.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("save_checkpoint: metadata '" + k + "' cannot be stored in the header");
    }
    out += "meta." + k + "=" + v + "\n";
  }
  out += "\n";
  for (const auto& nt : named) {
    put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
    out += nt.name;
    put_u32(out, static_cast<std::uint32_t>(nt.tensor.ndim()));
    for (std::size_t d : nt.tensor.shape()) put_u64(out, d);
    for (double v : nt.tensor.data()) put_f64(out, v);
  }
  if (has_moments) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      if (adam.m[i].size() != named[i].tensor.size() || adam.v[i].size() != named[i].tensor.size()) {
        throw UsageError("save_checkpoint: optimizer buffer size mismatch for " + named[i].name);
      }
      for (double v : adam.m[i]) put_f64(out, v);
      for (double v : adam.v[i]) put_f64(out, v);
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const SertModel& model, const AdamState& adam,
                     const CheckpointInfo& info) {
  write_file(path, encode_checkpoint(model, adam, info));
}

namespace {

struct ParsedHeader {
  CheckpointInfo info;
  std::uint64_t params = 0;
  AdamState adam;
  bool moments = false;
  std::size_t payload_offset = 0;
};

ParsedHeader parse_checkpoint_header(const std::string& bytes) {
  const Header h = split_header(bytes, kCkptMagic, "checkpoint");
  ParsedHeader p;
  p.payload_offset = h.payload_offset;
  std::map<std::string, std::string> config_kv;
  bool has_version = false;
  for (const auto& [k, v] : h.lines) {
    if (k == "format_version") {
      if (header_uint("checkpoint", k, v) != kCkptVersion) {
        throw FormatError("checkpoint: unsupported format_version " + v);
      }
      has_version = true;
    } else if (k == "step") p.info.step = header_uint("checkpoint", k, v);
    else if (k == "seed") p.info.seed = header_uint("checkpoint", k, v);
    else if (k == "params") p.params = header_uint("checkpoint", k, v);
    else if (k == "adam.step") p.adam.step = header_uint("checkpoint", k, v);
    else if (k == "adam.lr") p.adam.options.lr = parse_hexfloat(k, v);
    else if (k == "adam.beta1") p.adam.options.beta1 = parse_hexfloat(k, v);
    else if (k == "adam.beta2") p.adam.options.beta2 = parse_hexfloat(k, v);
    else if (k == "adam.eps") p.adam.options.eps = parse_hexfloat(k, v);
    else if (k == "adam.moments") p.moments = v == "1";
    else if (k.starts_with("config.")) config_kv[k.substr(7)] = v;
    else if (k.starts_with("meta.")) p.info.meta[k.substr(5)] = v;
    else throw FormatError("checkpoint: unknown header field '" + k + "'");
  }
  if (!has_version) throw FormatError("checkpoint: missing field 'format_version'");
  try {
    p.info.config = ModelConfig::from_pairs(config_kv);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: stored config is invalid: ") + e.what());
  }
  return p;
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::string& path) {
  // the header is small; read up to the first blank line only
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::string text, line;
  while (std::getline(in, line)) {
    text += line + "\n";
    if (line.empty()) break;
  }
  return parse_checkpoint_header(text).info;
}

CheckpointInfo decode_checkpoint(const std::string& bytes, SertModel& model, AdamState& adam) {
  ParsedHeader p = parse_checkpoint_header(bytes);
  if (!(p.info.config == model.config())) {
    std::string diff;
    const auto a = p.info.config.to_pairs(), b = model.config().to_pairs();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].second != b[i].second) diff += " " + a[i].first + " (file " + a[i].second + ", model " + b[i].second + ")";
    }
    throw ConfigConflictError("checkpoint: config differs from the runtime model:" + diff);
  }
  const auto named = model.named_parameters();
  if (p.params != named.size()) {
    throw ShapeConflictError("checkpoint: file holds " + std::to_string(p.params) + " tensors, model has " +
                             std::to_string(named.size()));
  }
  Reader r(bytes, p.payload_offset, "checkpoint");
  std::vector<std::vector<double>> values(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    const std::string name = r.str(r.u32("name length"), "name");
    if (name != named[i].name) {
      throw FormatError("checkpoint: expected tensor '" + named[i].name + "', found '" + name + "'");
    }
    const std::uint32_t ndim = r.u32("ndim");
    if (ndim > 8) throw ShapeConflictError("checkpoint: tensor '" + name + "' has implausible rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape) d = r.u64("dims");
    if (shape != named[i].tensor.shape()) {
      throw ShapeConflictError("checkpoint: tensor '" + name + "' stored as " + shape_str(shape) + ", model expects " +
                               shape_str(named[i].tensor.shape()));
    }
    values[i].resize(named[i].tensor.size());
    for (auto& v : values[i]) v = r.f64("values");
  }
  AdamState state = p.adam;
  if (p.moments) {
    state.m.resize(named.size());
    state.v.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      state.m[i].resize(named[i].tensor.size());
      state.v[i].resize(named[i].tensor.size());
      for (auto& v : state.m[i]) v = r.f64("adam m");
      for (auto& v : state.v[i]) v = r.f64("adam v");
    }
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after payload");

  // commit only after the whole file validated
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t = named[i].tensor;
    auto d = t.mutable_data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
  adam = std::move(state);
  return p.info;
}

CheckpointInfo load_checkpoint(const std::string& path, SertModel& model, AdamState& adam) {
  return decode_checkpoint(read_file(path), model, adam);
}

SertModel load_model(const std::string& path, AdamState* adam, CheckpointInfo* info) {
  const std::string bytes = read_file(path);
  SertModel model(parse_checkpoint_header(bytes).info.config);
  AdamState local;
  CheckpointInfo i = decode_checkpoint(bytes, model, adam ? *adam : local);
  if (info) *info = i;
  return model;
}

}  // namespace sert
