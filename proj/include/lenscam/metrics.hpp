#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lenscam/image.hpp"

namespace lenscam {

// 10*log10(max_val^2 / MSE), capped at 100 dB when the images coincide so
// aggregates stay finite.
double psnr(const ImageGrid& a, const ImageGrid& b, double max_val = 1.0);

// Standard windowed SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, mean over all valid windows; multi-channel images are scored per
// channel and averaged.
double ssim(const ImageGrid& a, const ImageGrid& b, double max_val = 1.0);

// Converts a PSNR difference (dB) into an intensity-error ratio. Two
// conventions are computed: the published 10^(dp/2) and the amplitude-ratio
// derivation 10^(dp/20); callers should prefer `derived`.
struct IntensityErrorRate {
  double published_form;
  double derived;
};
IntensityErrorRate intensity_error_rate(double dp_db);

struct QualityRow {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

// Per-image scores plus the summary fields of the published results layout
// (model, in-out size, parameter size, training-set size, mean PSNR/SSIM).
struct QualityReport {
  std::string model_name;
  std::string in_out;          // e.g. "64-64"
  std::size_t param_count = 0;
  std::size_t train_size = 0;
  std::vector<QualityRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

}  // namespace lenscam
