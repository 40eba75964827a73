#include "sert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sert/degradation.hpp"
#include "sert/errors.hpp"

namespace sert {

namespace {

void require_pair(const Tensor& a, const Tensor& b, const char* op) {
  require_cube(a, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace

double psnr(const Tensor& estimate, const Tensor& reference, double peak) {
  require_pair(estimate, reference, "psnr");
  const auto a = estimate.data(), b = reference.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(a.size()), peak);
}

std::vector<double> psnr_per_band(const Tensor& estimate, const Tensor& reference, double peak) {
  require_pair(estimate, reference, "psnr_per_band");
  const std::size_t B = estimate.dim(2), n = estimate.dim(0) * estimate.dim(1);
  const auto a = estimate.data(), r = reference.data();
  std::vector<double> sums(B, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t b = 0; b < B; ++b) {
      const double d = a[p * B + b] - r[p * B + b];
      sums[b] += d * d;
    }
  }
  std::vector<double> out(B);
  for (std::size_t b = 0; b < B; ++b) out[b] = psnr_from_mse(sums[b] / static_cast<double>(n), peak);
  return out;
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double t = static_cast<double>(i) - c;
    w[i] = std::exp(-t * t / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

double ssim_band(const Tensor& estimate, const Tensor& reference, std::size_t band, const SsimOptions& o) {
  require_pair(estimate, reference, "ssim");
  const std::size_t H = estimate.dim(0), W = estimate.dim(1), B = estimate.dim(2);
  const std::size_t k = o.window;
  if (H < k || W < k) {
    throw ParameterError("ssim: spatial extent " + std::to_string(H) + "x" + std::to_string(W) +
                         " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
  }
  const auto g = gaussian_window(k, o.sigma);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const auto x = estimate.data(), y = reference.data();
  const std::size_t Ho = H - k + 1, Wo = W - k + 1;

  // separable filtering: rows first into [H, Wo], then columns
  enum { MX, MY, XX, YY, XY, N };
  std::vector<double> rows[N];
  for (auto& r : rows) r.assign(H * Wo, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      double acc[N] = {};
      for (std::size_t t = 0; t < k; ++t) {
        const double a = x[(i * W + j + t) * B + band], b = y[(i * W + j + t) * B + band];
        acc[MX] += g[t] * a;
        acc[MY] += g[t] * b;
        acc[XX] += g[t] * (a * a);
        acc[YY] += g[t] * (b * b);
        acc[XY] += g[t] * (a * b);
      }
      for (int c = 0; c < N; ++c) rows[c][i * Wo + j] = acc[c];
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      double m[N] = {};
      for (std::size_t t = 0; t < k; ++t)
        for (int c = 0; c < N; ++c) m[c] += g[t] * rows[c][(i + t) * Wo + j];
      const double mxy = m[MX] * m[MY];
      const double vx = m[XX] - m[MX] * m[MX], vy = m[YY] - m[MY] * m[MY], cxy = m[XY] - mxy;
      const double num = (2.0 * mxy + c1) * (2.0 * cxy + c2);
      const double den = (m[MX] * m[MX] + m[MY] * m[MY] + c1) * (vx + vy + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(Ho * Wo);
}

double ssim(const Tensor& estimate, const Tensor& reference, const SsimOptions& o) {
  require_pair(estimate, reference, "ssim");
  double sum = 0.0;
  for (std::size_t b = 0; b < estimate.dim(2); ++b) sum += ssim_band(estimate, reference, b, o);
  return sum / static_cast<double>(estimate.dim(2));
}

SamResult sam_detail(const Tensor& estimate, const Tensor& reference) {
  require_pair(estimate, reference, "sam");
  const std::size_t B = estimate.dim(2), n = estimate.dim(0) * estimate.dim(1);
  const auto a = estimate.data(), r = reference.data();
  SamResult out;
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double dot = 0.0, na = 0.0, nr = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      dot += a[p * B + b] * r[p * B + b];
      na += a[p * B + b] * a[p * B + b];
      nr += r[p * B + b] * r[p * B + b];
    }
    if (na == 0.0 || nr == 0.0) {
      ++out.skipped;
      continue;
    }
    const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nr)), -1.0, 1.0);
    sum += std::acos(cosine);
  }
  if (out.skipped == n) throw NumericError("sam: every pixel spectrum has zero norm, angle is undefined");
  out.degrees = sum / static_cast<double>(n - out.skipped) * 180.0 / std::numbers::pi;
  return out;
}

double sam(const Tensor& estimate, const Tensor& reference) { return sam_detail(estimate, reference).degrees; }

MetricReport evaluate(const Tensor& estimate, const Tensor& reference) {
  MetricReport r;
  r.psnr_db = psnr(estimate, reference);
  r.ssim = ssim(estimate, reference);
  const SamResult s = sam_detail(estimate, reference);
  r.sam_degrees = s.degrees;
  r.sam_skipped = s.skipped;
  r.band_psnr = psnr_per_band(estimate, reference);
  return r;
}

MetricReport average(const std::vector<MetricReport>& reports) {
  MetricReport avg;
  if (reports.empty()) return avg;
  bool same_bands = true;
  for (const auto& r : reports) same_bands = same_bands && r.band_psnr.size() == reports[0].band_psnr.size();
  if (same_bands) avg.band_psnr.assign(reports[0].band_psnr.size(), 0.0);
  for (const auto& r : reports) {
    avg.psnr_db += r.psnr_db;
    avg.ssim += r.ssim;
    avg.sam_degrees += r.sam_degrees;
    avg.sam_skipped += r.sam_skipped;
    for (std::size_t b = 0; b < avg.band_psnr.size(); ++b) avg.band_psnr[b] += r.band_psnr[b];
  }
  const double n = static_cast<double>(reports.size());
  avg.psnr_db /= n;
  avg.ssim /= n;
  avg.sam_degrees /= n;
  for (auto& v : avg.band_psnr) v /= n;
  return avg;
}

namespace {
std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::pair<std::string, MetricReport>> with_average(
    const std::vector<std::pair<std::string, MetricReport>>& reports) {
  std::vector<MetricReport> only;
  for (const auto& [name, r] : reports) only.push_back(r);
  auto all = reports;
  all.emplace_back("average", average(only));
  return all;
}
}  // namespace

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& reports) {
  const auto rows = with_average(reports);
  std::size_t width = 5;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-*s  %10s  %8s  %9s\n", static_cast<int>(width), "image", "PSNR(dB)", "SSIM",
                "SAM(deg)");
  out += line;
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-*s  %10.4f  %8.5f  %9.4f\n", static_cast<int>(width), name.c_str(), r.psnr_db,
                  r.ssim, r.sam_degrees);
    out += line;
  }
  return out;
}

std::string format_key_values(const std::vector<std::pair<std::string, MetricReport>>& reports) {
  std::string out;
  for (const auto& [name, r] : with_average(reports)) {
    out += "image=" + name + "\n";
    out += "psnr_db=" + fmt("%.6f", r.psnr_db) + "\n";
    out += "ssim=" + fmt("%.8f", r.ssim) + "\n";
    out += "sam_degrees=" + fmt("%.6f", r.sam_degrees) + "\n";
    out += "sam_skipped=" + std::to_string(r.sam_skipped) + "\n";
    out += "band_psnr=";
    for (std::size_t b = 0; b < r.band_psnr.size(); ++b) out += (b ? "," : "") + fmt("%.4f", r.band_psnr[b]);
    out += "\n\n";
  }
  return out;
}

}  // namespace sert
