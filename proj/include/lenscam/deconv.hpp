#pragma once

#include <complex>
#include <vector>

#include "lenscam/image.hpp"

namespace lenscam {

// Precomputed frequency-domain restoration filter
//   r[k] = conj(K[k]) / (|K[k]|^2 + eps_abs^2)
// where K is the spectrum of the (centered) PSF raster and
// eps_abs = eps_rel * max|K|. Every entry magnitude is bounded by
// 1/(2*eps_abs) for eps_abs > 0.
struct FrequencyFilter {
  int h = 0;
  int w = 0;
  std::vector<std::complex<double>> r;
  double eps_rel = 0.0;
  double eps_abs = 0.0;

  double max_magnitude() const;
};

// eps_rel = 0 is permitted only when the PSF spectrum has no zero bin;
// otherwise a singularity error names the offending bin.
FrequencyFilter build_inverse_filter(const ImageGrid& psf_centered,
                                     double eps_rel);

// h = IFFT[ FFT[g] * r ]. The imaginary residue of the inverse transform must
// stay below 1e-8 of the restored signal's RMS, else a numeric fault is
// raised. Multi-channel captures are restored per channel.
ImageGrid deconvolve(const ImageGrid& g, const FrequencyFilter& filter);

}  // namespace lenscam
