#pragma once

#include <complex>
#include <vector>

namespace lenscam::fft {

using cplx = std::complex<double>;

// In-place 2D FFT of a row-major (h, w) grid. Both dimensions must be powers
// of two. The inverse applies the full 1/(h*w) normalization.
void fft2(cplx* data, int h, int w, bool inverse);

// Real (h, w) grid -> full complex spectrum.
std::vector<cplx> forward_real(const std::vector<double>& real, int h, int w);

// Complex spectrum -> real grid. The imaginary residue of the inverse
// transform is discarded; its peak magnitude is reported through *max_imag
// when non-null so callers can assert it is numerically negligible.
std::vector<double> inverse_to_real(std::vector<cplx> spec, int h, int w,
                                    double* max_imag = nullptr);

// Circular (wrap-around) shift by (dy, dx); positive shifts move content down
// and right.
std::vector<double> circshift(const std::vector<double>& a, int h, int w,
                              int dy, int dx);

// Circular convolution of two (h, w) grids via the frequency domain. Both the
// signal and the kernel are taken in origin-at-(0,0) convention.
std::vector<double> convolve_circular(const std::vector<double>& f,
                                      const std::vector<double>& k, int h,
                                      int w);

}  // namespace lenscam::fft
