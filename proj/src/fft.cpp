#include "lenscam/fft.hpp"

#include <cmath>

#include "lenscam/common.hpp"
#include "lenscam/kernels.hpp"

namespace lenscam::fft {

void fft2(cplx* data, int h, int w, bool inverse) {
  const auto m = kernels::mode();
  kernels::fft_rows(data, h, w, inverse, m);
  kernels::fft_cols(data, h, w, inverse, m);
}

std::vector<cplx> forward_real(const std::vector<double>& real, int h, int w) {
  if (static_cast<std::size_t>(h) * w != real.size())
    throw ShapeError("fft input size mismatch: " + std::to_string(real.size()) +
                     " values for " + std::to_string(h) + "x" +
                     std::to_string(w));
  std::vector<cplx> spec(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) spec[i] = cplx(real[i], 0.0);
  fft2(spec.data(), h, w, false);
  return spec;
}

std::vector<double> inverse_to_real(std::vector<cplx> spec, int h, int w,
                                    double* max_imag) {
  if (static_cast<std::size_t>(h) * w != spec.size())
    throw ShapeError("fft input size mismatch: " + std::to_string(spec.size()) +
                     " values for " + std::to_string(h) + "x" +
                     std::to_string(w));
  fft2(spec.data(), h, w, true);
  std::vector<double> out(spec.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    out[i] = spec[i].real();
    peak = std::max(peak, std::abs(spec[i].imag()));
  }
  if (max_imag) *max_imag = peak;
  return out;
}

std::vector<double> circshift(const std::vector<double>& a, int h, int w,
                              int dy, int dx) {
  std::vector<double> out(a.size());
  dy = ((dy % h) + h) % h;
  dx = ((dx % w) + w) % w;
  for (int y = 0; y < h; ++y) {
    const int yo = (y + dy) % h;
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(yo) * w + (x + dx) % w] =
          a[static_cast<std::size_t>(y) * w + x];
  }
  return out;
}

std::vector<double> convolve_circular(const std::vector<double>& f,
                                      const std::vector<double>& k, int h,
                                      int w) {
  if (f.size() != k.size())
    throw ShapeError("convolution operands differ in size: " +
                     std::to_string(f.size()) + " vs " +
                     std::to_string(k.size()));
  auto sf = forward_real(f, h, w);
  const auto sk = forward_real(k, h, w);
  for (std::size_t i = 0; i < sf.size(); ++i) sf[i] *= sk[i];
  return inverse_to_real(std::move(sf), h, w);
}

}  // namespace lenscam::fft
