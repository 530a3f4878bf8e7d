#include "lenscam/deconv.hpp"

#include <algorithm>
#include <cmath>

#include "lenscam/common.hpp"
#include "lenscam/fft.hpp"

namespace lenscam {

double FrequencyFilter::max_magnitude() const {
  double peak = 0.0;
  for (const auto& v : r) peak = std::max(peak, std::abs(v));
  return peak;
}

FrequencyFilter build_inverse_filter(const ImageGrid& psf_centered,
                                     double eps_rel) {
  if (eps_rel < 0.0)
    throw DomainError("regularization must be non-negative, got " +
                      std::to_string(eps_rel));
  if (psf_centered.c != 1)
    throw ShapeError("psf must be single-channel, got " +
                     std::to_string(psf_centered.c));
  const int h = psf_centered.h;
  const int w = psf_centered.w;
  if (!is_pow2(h) || !is_pow2(w))
    throw DomainError("psf raster must have power-of-two dimensions, got " +
                      std::to_string(h) + "x" + std::to_string(w));

  // Move the centered PSF to origin-at-(0,0) convention, matching the
  // forward capture model.
  const auto k0 =
      fft::circshift(psf_centered.data, h, w, -(h / 2), -(w / 2));
  auto spec = fft::forward_real(k0, h, w);

  double peak = 0.0;
  for (const auto& v : spec) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw DomainError("psf is identically zero");

  const double eps_abs = eps_rel * peak;
  if (eps_abs == 0.0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (std::abs(spec[static_cast<std::size_t>(y) * w + x]) == 0.0)
          throw SingularityError(
              "psf spectrum has a zero bin at (" + std::to_string(y) + ", " +
              std::to_string(x) + "); unregularized inversion is undefined");
  }

  FrequencyFilter f;
  f.h = h;
  f.w = w;
  f.eps_rel = eps_rel;
  f.eps_abs = eps_abs;
  f.r.resize(spec.size());
  const double e2 = eps_abs * eps_abs;
  for (std::size_t i = 0; i < spec.size(); ++i)
    f.r[i] = std::conj(spec[i]) / (std::norm(spec[i]) + e2);
  return f;
}

ImageGrid deconvolve(const ImageGrid& g, const FrequencyFilter& filter) {
  if (g.h != filter.h || g.w != filter.w)
    throw ShapeError("capture " + std::to_string(g.h) + "x" +
                     std::to_string(g.w) + " does not match filter " +
                     std::to_string(filter.h) + "x" + std::to_string(filter.w));
  ImageGrid out(g.h, g.w, g.c);
  std::vector<double> plane(static_cast<std::size_t>(g.h) * g.w);
  for (int ch = 0; ch < g.c; ++ch) {
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x)
        plane[static_cast<std::size_t>(y) * g.w + x] = g.at(y, x, ch);
    auto spec = fft::forward_real(plane, g.h, g.w);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= filter.r[i];
    double max_imag = 0.0;
    const auto restored =
        fft::inverse_to_real(std::move(spec), g.h, g.w, &max_imag);
    double energy = 0.0;
    for (const double v : restored) energy += v * v;
    const double rms = std::sqrt(energy / restored.size());
    if (max_imag > 1e-8 * std::max(rms, 1e-300))
      throw NumericFault("imaginary residue " + std::to_string(max_imag) +
                         " exceeds 1e-8 of the restored signal RMS");
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x)
        out.at(y, x, ch) = restored[static_cast<std::size_t>(y) * g.w + x];
  }
  return out;
}

}  // namespace lenscam
