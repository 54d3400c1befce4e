#pragma once

#include <span>
#include <string>
#include <vector>

#include "rcnet/data.hpp"

namespace rcnet {

/// 10 log10(peak^2 / MSE). Identical images give +infinity.
double psnr(const GrayImage& a, const GrayImage& b, double peak = 255.0);

/// Mean SSIM over every valid 11x11 Gaussian window (sigma 1.5) with
/// K1 = 0.01, K2 = 0.03 and L = 255. Both images need h, w >= 11.
double ssim(const GrayImage& a, const GrayImage& b);

/// Sliding-window sample standard deviation; length series.size() - window + 1.
std::vector<double> rolling_std(std::span<const double> series, std::size_t window);

/// Per-image restoration quality, laid out like a PSNR / SSIM / time table.
struct QualityReport {
  struct Entry {
    std::string image;
    double psnr_db;
    double ssim;
    double runtime_s;
  };
  std::vector<Entry> entries;

  double mean_psnr() const;
  double mean_ssim() const;
  double mean_runtime() const;

  /// Header `image,psnr_db,ssim,runtime_s`; infinite PSNR is written as inf.
  std::string to_csv() const;
};

/// Markdown table with one column group per labelled report, every report
/// covering the same images in the same order.
std::string quality_markdown(std::span<const std::string> labels,
                             std::span<const QualityReport> reports);

}  // namespace rcnet
