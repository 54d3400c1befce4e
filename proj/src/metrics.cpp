#include "rcnet/metrics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace rcnet {
namespace {

void require_same_dims(const GrayImage& a, const GrayImage& b, const char* op) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError(fmt::format("{}: image sizes differ ({}x{} vs {}x{})", op, a.h, a.w, b.h, b.w));
}

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  const double center = (kWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - center;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  const double sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= sum;
  return g;
}

// Separable "valid" filtering: output is (h - 10) x (w - 10).
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> horizontal(h * ow);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double v = 0.0;
      for (std::size_t t = 0; t < kWindow; ++t) v += g[t] * src[r * w + c + t];
      horizontal[r * ow + c] = v;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double v = 0.0;
      for (std::size_t t = 0; t < kWindow; ++t) v += g[t] * horizontal[(r + t) * ow + c];
      out[r * ow + c] = v;
    }
  return out;
}

std::string format_number(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.{}f}", v, precision);
}

}  // namespace

double psnr(const GrayImage& a, const GrayImage& b, double peak) {
  require_same_dims(a, b, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const GrayImage& a, const GrayImage& b) {
  require_same_dims(a, b, "ssim");
  if (a.h < kWindow || a.w < kWindow)
    throw ShapeError(fmt::format("ssim: images must be at least {0}x{0}, got {1}x{2}", kWindow,
                                 a.h, a.w));
  constexpr double L = 255.0;
  constexpr double c1 = (0.01 * L) * (0.01 * L);
  constexpr double c2 = (0.03 * L) * (0.03 * L);
  const auto g = gaussian_window();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = filter_valid(a.pixels, a.h, a.w, g);
  const auto mu_b = filter_valid(b.pixels, a.h, a.w, g);
  const auto e_aa = filter_valid(aa, a.h, a.w, g);
  const auto e_bb = filter_valid(bb, a.h, a.w, g);
  const auto e_ab = filter_valid(ab, a.h, a.w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma2 = mu_a[i] * mu_a[i], mb2 = mu_b[i] * mu_b[i], mab = mu_a[i] * mu_b[i];
    const double va = e_aa[i] - ma2, vb = e_bb[i] - mb2, cov = e_ab[i] - mab;
    total += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::vector<double> rolling_std(std::span<const double> series, std::size_t window) {
  if (window < 2) throw ConfigError("rolling_std: window must be >= 2");
  if (window > series.size())
    throw ConfigError(fmt::format("rolling_std: window {} exceeds series length {}", window,
                                  series.size()));
  std::vector<double> out;
  out.reserve(series.size() - window + 1);
  for (std::size_t start = 0; start + window <= series.size(); ++start) {
    const auto slice = series.subspan(start, window);
    const double mean = std::accumulate(slice.begin(), slice.end(), 0.0) / window;
    double sq = 0.0;
    for (double v : slice) sq += (v - mean) * (v - mean);
    out.push_back(std::sqrt(sq / static_cast<double>(window - 1)));
  }
  return out;
}

double QualityReport::mean_psnr() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.psnr_db;
  return s / static_cast<double>(entries.size());
}

double QualityReport::mean_ssim() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.ssim;
  return s / static_cast<double>(entries.size());
}

double QualityReport::mean_runtime() const {
  if (entries.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries) s += e.runtime_s;
  return s / static_cast<double>(entries.size());
}

std::string QualityReport::to_csv() const {
  std::ostringstream os;
  os << "image,psnr_db,ssim,runtime_s\n";
  for (const auto& e : entries)
    os << e.image << ',' << format_number(e.psnr_db, 4) << ',' << format_number(e.ssim, 6) << ','
       << format_number(e.runtime_s, 4) << '\n';
  return os.str();
}

std::string quality_markdown(std::span<const std::string> labels,
                             std::span<const QualityReport> reports) {
  if (labels.size() != reports.size()) throw Error("quality_markdown: one label per report");
  std::ostringstream os;
  os << "| image |";
  for (const auto& l : labels) os << ' ' << l << " PSNR (dB) / SSIM / Time (s) |";
  os << "\n|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) os << "---|";
  os << '\n';
  const std::size_t rows = reports.empty() ? 0 : reports[0].entries.size();
  for (std::size_t r = 0; r < rows; ++r) {
    os << "| " << reports[0].entries[r].image << " |";
    for (const auto& rep : reports) {
      const auto& e = rep.entries.at(r);
      os << ' ' << format_number(e.psnr_db, 2) << " / " << format_number(e.ssim, 4) << " / "
         << format_number(e.runtime_s, 3) << " |";
    }
    os << '\n';
  }
  os << "| **mean** |";
  for (const auto& rep : reports)
    os << " **" << format_number(rep.mean_psnr(), 2) << " / " << format_number(rep.mean_ssim(), 4)
       << " / " << format_number(rep.mean_runtime(), 3) << "** |";
  os << '\n';
  return os.str();
}

}  // namespace rcnet
