#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace lenscam::kernels {

// Every kernel exists in a serial reference form and an OpenMP form. The two
// are element-wise identical by construction: each output element is produced
// by exactly one thread using the same accumulation order as the serial loop,
// so results do not depend on the thread count.
enum class Mode { serial, parallel };

Mode mode();
void set_mode(Mode m);
void set_threads(int n);  // 0 = library default
int threads();

// c(n,m) = a(n,k) * b(k,m), row-major.
template <class T>
void matmul(const T* a, const T* b, T* c, int n, int k, int m, Mode mode);

// c(n,k) = g(n,m) * b(k,m)^T
template <class T>
void matmul_nt(const T* g, const T* b, T* c, int n, int m, int k, Mode mode);

// c(k,m) = a(n,k)^T * g(n,m)
template <class T>
void matmul_tn(const T* a, const T* g, T* c, int n, int k, int m, Mode mode);

// NHWC conv2d on a single image. in (h,w,ci), w (kh,kw,ci,co), out (oh,ow,co).
// bias may be null.
template <class T>
void conv2d_forward(const T* in, int h, int w, int ci, const T* kern, int kh,
                    int kw, int co, const T* bias, int stride, int pad, T* out,
                    int oh, int ow, Mode mode);

template <class T>
void conv2d_backward_input(const T* gout, int oh, int ow, int co, const T* kern,
                           int kh, int kw, int ci, int stride, int pad, T* gin,
                           int h, int w, Mode mode);

template <class T>
void conv2d_backward_kernel(const T* in, int h, int w, int ci, const T* gout,
                            int oh, int ow, int co, int kh, int kw, int stride,
                            int pad, T* gkern, T* gbias, Mode mode);

// Batched 1D FFT passes used by the 2D transform. n must be a power of two.
void fft_rows(std::complex<double>* data, int rows, int n, bool inverse,
              Mode mode);
void fft_cols(std::complex<double>* data, int rows, int cols, bool inverse,
              Mode mode);

// Separable Gaussian blur with circular boundary handling, 2D (h,w) planes.
void gaussian_blur(const double* in, double* out, int h, int w, double sigma,
                   Mode mode);

// Bilinear resample of an interleaved (h,w,c) raster to (oh,ow,c).
void bilinear_resize(const double* in, int h, int w, int c, double* out, int oh,
                     int ow, Mode mode);

}  // namespace lenscam::kernels
