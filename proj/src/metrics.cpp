#include "lenscam/metrics.hpp"

#include <cmath>
#include <sstream>

#include "lenscam/common.hpp"

namespace lenscam {

namespace {

void require_same_shape(const ImageGrid& a, const ImageGrid& b) {
  if (a.h != b.h || a.w != b.w || a.c != b.c)
    throw ShapeError("images differ in shape: " + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + "x" + std::to_string(a.c) + " vs " +
                     std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                     std::to_string(b.c));
}

constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

}  // namespace

double psnr(const ImageGrid& a, const ImageGrid& b, double max_val) {
  require_same_shape(a, b);
  if (!(max_val > 0.0)) throw DomainError("max_val must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= a.data.size();
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(max_val * max_val / mse));
}

double ssim(const ImageGrid& a, const ImageGrid& b, double max_val) {
  require_same_shape(a, b);
  if (!(max_val > 0.0)) throw DomainError("max_val must be positive");
  if (a.h < kWin || a.w < kWin)
    throw ShapeError("image " + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + " is smaller than the " +
                     std::to_string(kWin) + "x" + std::to_string(kWin) +
                     " SSIM window");

  double win[kWin][kWin];
  double wsum = 0.0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - kWin / 2, dx = x - kWin / 2;
      win[y][x] = std::exp(-(dy * dy + dx * dx) / (2.0 * kWinSigma * kWinSigma));
      wsum += win[y][x];
    }
  for (auto& row : win)
    for (double& v : row) v /= wsum;

  const double c1 = (kK1 * max_val) * (kK1 * max_val);
  const double c2 = (kK2 * max_val) * (kK2 * max_val);

  double total = 0.0;
  std::size_t windows = 0;
  for (int ch = 0; ch < a.c; ++ch) {
    for (int y0 = 0; y0 + kWin <= a.h; ++y0) {
      for (int x0 = 0; x0 + kWin <= a.w; ++x0) {
        double mx = 0.0, my = 0.0;
        for (int y = 0; y < kWin; ++y)
          for (int x = 0; x < kWin; ++x) {
            mx += win[y][x] * a.at(y0 + y, x0 + x, ch);
            my += win[y][x] * b.at(y0 + y, x0 + x, ch);
          }
        double vx = 0.0, vy = 0.0, cov = 0.0;
        for (int y = 0; y < kWin; ++y)
          for (int x = 0; x < kWin; ++x) {
            const double da = a.at(y0 + y, x0 + x, ch) - mx;
            const double db = b.at(y0 + y, x0 + x, ch) - my;
            vx += win[y][x] * da * da;
            vy += win[y][x] * db * db;
            cov += win[y][x] * da * db;
          }
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

IntensityErrorRate intensity_error_rate(double dp_db) {
  return {std::pow(10.0, dp_db / 2.0), std::pow(10.0, dp_db / 20.0)};
}

double QualityReport::mean_psnr() const {
  if (rows.empty()) throw DomainError("quality report has no rows");
  double s = 0.0;
  for (const QualityRow& r : rows) s += r.psnr_db;
  return s / rows.size();
}

double QualityReport::mean_ssim() const {
  if (rows.empty()) throw DomainError("quality report has no rows");
  double s = 0.0;
  for (const QualityRow& r : rows) s += r.ssim;
  return s / rows.size();
}

std::string QualityReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "id,psnr_db,ssim\n";
  for (const QualityRow& r : rows)
    out << r.id << "," << r.psnr_db << "," << r.ssim << "\n";
  if (!rows.empty()) {
    out << "# model,in-out,params,train_size,mean_psnr,mean_ssim\n";
    out << model_name << "," << in_out << "," << param_count << ","
        << train_size << "," << mean_psnr() << "," << mean_ssim() << "\n";
  }
  return out.str();
}

nlohmann::json QualityReport::to_json() const {
  nlohmann::json per_image = nlohmann::json::array();
  for (const QualityRow& r : rows)
    per_image.push_back({{"id", r.id}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}});
  nlohmann::json j{{"model", model_name},
                   {"in_out", in_out},
                   {"param_count", param_count},
                   {"train_size", train_size},
                   {"images", per_image}};
  if (!rows.empty()) {
    j["mean_psnr_db"] = mean_psnr();
    j["mean_ssim"] = mean_ssim();
  }
  return j;
}

}  // namespace lenscam
