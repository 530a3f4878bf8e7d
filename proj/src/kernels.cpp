#include "lenscam/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lenscam/common.hpp"

namespace lenscam::kernels {

namespace {
std::atomic<Mode> g_mode{Mode::parallel};
std::atomic<int> g_threads{0};

inline bool par(Mode m) {
#ifdef _OPENMP
  return m == Mode::parallel;
#else
  (void)m;
  return false;
#endif
}
}  // namespace

Mode mode() { return g_mode.load(); }
void set_mode(Mode m) { g_mode.store(m); }

void set_threads(int n) {
  g_threads.store(n);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class T>
void matmul(const T* a, const T* b, T* c, int n, int k, int m, Mode mode) {
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int i = 0; i < n; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * m;
    std::fill(ci, ci + m, T(0));
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const T av = ai[t];
      const T* bt = b + static_cast<std::size_t>(t) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * bt[j];
    }
  }
}

template <class T>
void matmul_nt(const T* g, const T* b, T* c, int n, int m, int k, Mode mode) {
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int i = 0; i < n; ++i) {
    const T* gi = g + static_cast<std::size_t>(i) * m;
    T* ci = c + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * m;
      T acc = 0;
      for (int t = 0; t < m; ++t) acc += gi[t] * bj[t];
      ci[j] = acc;
    }
  }
}

template <class T>
void matmul_tn(const T* a, const T* g, T* c, int n, int k, int m, Mode mode) {
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int i = 0; i < k; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * m;
    std::fill(ci, ci + m, T(0));
    for (int t = 0; t < n; ++t) {
      const T av = a[static_cast<std::size_t>(t) * k + i];
      const T* gt = g + static_cast<std::size_t>(t) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * gt[j];
    }
  }
}

template <class T>
void conv2d_forward(const T* in, int h, int w, int ci, const T* kern, int kh,
                    int kw, int co, const T* bias, int stride, int pad, T* out,
                    int oh, int ow, Mode mode) {
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      T* o = out + (static_cast<std::size_t>(y) * ow + x) * co;
      if (bias)
        std::copy(bias, bias + co, o);
      else
        std::fill(o, o + co, T(0));
      for (int dy = 0; dy < kh; ++dy) {
        const int yi = y * stride - pad + dy;
        if (yi < 0 || yi >= h) continue;
        for (int dx = 0; dx < kw; ++dx) {
          const int xi = x * stride - pad + dx;
          if (xi < 0 || xi >= w) continue;
          const T* px = in + (static_cast<std::size_t>(yi) * w + xi) * ci;
          const T* kp =
              kern + (static_cast<std::size_t>(dy) * kw + dx) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const T v = px[c];
            const T* kc = kp + static_cast<std::size_t>(c) * co;
            for (int f = 0; f < co; ++f) o[f] += v * kc[f];
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const T* gout, int oh, int ow, int co, const T* kern,
                           int kh, int kw, int ci, int stride, int pad, T* gin,
                           int h, int w, Mode mode) {
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int yi = 0; yi < h; ++yi) {
    for (int xi = 0; xi < w; ++xi) {
      T* g = gin + (static_cast<std::size_t>(yi) * w + xi) * ci;
      std::fill(g, g + ci, T(0));
      for (int dy = 0; dy < kh; ++dy) {
        const int yn = yi + pad - dy;
        if (yn < 0 || yn % stride) continue;
        const int y = yn / stride;
        if (y >= oh) continue;
        for (int dx = 0; dx < kw; ++dx) {
          const int xn = xi + pad - dx;
          if (xn < 0 || xn % stride) continue;
          const int x = xn / stride;
          if (x >= ow) continue;
          const T* go = gout + (static_cast<std::size_t>(y) * ow + x) * co;
          const T* kp =
              kern + (static_cast<std::size_t>(dy) * kw + dx) * ci * co;
          for (int c = 0; c < ci; ++c) {
            const T* kc = kp + static_cast<std::size_t>(c) * co;
            T acc = 0;
            for (int f = 0; f < co; ++f) acc += go[f] * kc[f];
            g[c] += acc;
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_kernel(const T* in, int h, int w, int ci, const T* gout,
                            int oh, int ow, int co, int kh, int kw, int stride,
                            int pad, T* gkern, T* gbias, Mode mode) {
  const bool p = par(mode);
  const int taps = kh * kw;
#pragma omp parallel for schedule(static) if (p)
  for (int t = 0; t < taps; ++t) {
    const int dy = t / kw;
    const int dx = t % kw;
    T* gk = gkern + static_cast<std::size_t>(t) * ci * co;
    std::fill(gk, gk + static_cast<std::size_t>(ci) * co, T(0));
    for (int y = 0; y < oh; ++y) {
      const int yi = y * stride - pad + dy;
      if (yi < 0 || yi >= h) continue;
      for (int x = 0; x < ow; ++x) {
        const int xi = x * stride - pad + dx;
        if (xi < 0 || xi >= w) continue;
        const T* px = in + (static_cast<std::size_t>(yi) * w + xi) * ci;
        const T* go = gout + (static_cast<std::size_t>(y) * ow + x) * co;
        for (int c = 0; c < ci; ++c) {
          const T v = px[c];
          T* gc = gk + static_cast<std::size_t>(c) * co;
          for (int f = 0; f < co; ++f) gc[f] += v * go[f];
        }
      }
    }
  }
  if (gbias) {
    // Fixed order over the raster per output channel keeps this deterministic.
#pragma omp parallel for schedule(static) if (p)
    for (int f = 0; f < co; ++f) {
      T acc = 0;
      const std::size_t npix = static_cast<std::size_t>(oh) * ow;
      for (std::size_t i = 0; i < npix; ++i) acc += gout[i * co + f];
      gbias[f] = acc;
    }
  }
}

namespace {

// In-place iterative radix-2 FFT over one contiguous line.
void fft_line(std::complex<double>* x, int n, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<double> u = x[i + j];
        const std::complex<double> v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) x[i] *= inv;
  }
}

}  // namespace

void fft_rows(std::complex<double>* data, int rows, int n, bool inverse,
              Mode mode) {
  if (!is_pow2(n))
    throw DomainError("fft length must be a power of two, got " +
                      std::to_string(n));
  const bool p = par(mode);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < rows; ++r)
    fft_line(data + static_cast<std::size_t>(r) * n, n, inverse);
}

void fft_cols(std::complex<double>* data, int rows, int cols, bool inverse,
              Mode mode) {
  if (!is_pow2(rows))
    throw DomainError("fft length must be a power of two, got " +
                      std::to_string(rows));
  const bool p = par(mode);
#pragma omp parallel if (p)
  {
    std::vector<std::complex<double>> tmp(rows);
#pragma omp for schedule(static)
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r)
        tmp[r] = data[static_cast<std::size_t>(r) * cols + c];
      fft_line(tmp.data(), rows, inverse);
      for (int r = 0; r < rows; ++r)
        data[static_cast<std::size_t>(r) * cols + c] = tmp[r];
    }
  }
}

namespace {

std::vector<double> gauss_taps(double sigma, int dim) {
  int radius = static_cast<int>(std::ceil(4.0 * sigma));
  radius = std::min(radius, dim / 2);
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[i + radius] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

}  // namespace

void gaussian_blur(const double* in, double* out, int h, int w, double sigma,
                   Mode mode) {
  if (sigma <= 0.0) {
    std::copy(in, in + static_cast<std::size_t>(h) * w, out);
    return;
  }
  const bool p = par(mode);
  std::vector<double> mid(static_cast<std::size_t>(h) * w);
  {
    const auto taps = gauss_taps(sigma, w);
    const int radius = (static_cast<int>(taps.size()) - 1) / 2;
#pragma omp parallel for schedule(static) if (p)
    for (int y = 0; y < h; ++y) {
      const double* row = in + static_cast<std::size_t>(y) * w;
      double* orow = mid.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int xi = (x + i) % w;
          if (xi < 0) xi += w;
          acc += taps[i + radius] * row[xi];
        }
        orow[x] = acc;
      }
    }
  }
  {
    const auto taps = gauss_taps(sigma, h);
    const int radius = (static_cast<int>(taps.size()) - 1) / 2;
#pragma omp parallel for schedule(static) if (p)
    for (int y = 0; y < h; ++y) {
      double* orow = out + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int yi = (y + i) % h;
          if (yi < 0) yi += h;
          acc += taps[i + radius] * mid[static_cast<std::size_t>(yi) * w + x];
        }
        orow[x] = acc;
      }
    }
  }
}

void bilinear_resize(const double* in, int h, int w, int c, double* out, int oh,
                     int ow, Mode mode) {
  const bool p = par(mode);
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
#pragma omp parallel for schedule(static) if (p)
  for (int y = 0; y < oh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < ow; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const double* p00 = in + (static_cast<std::size_t>(y0) * w + x0) * c;
      const double* p01 = in + (static_cast<std::size_t>(y0) * w + x1) * c;
      const double* p10 = in + (static_cast<std::size_t>(y1) * w + x0) * c;
      const double* p11 = in + (static_cast<std::size_t>(y1) * w + x1) * c;
      double* o = out + (static_cast<std::size_t>(y) * ow + x) * c;
      for (int ch = 0; ch < c; ++ch) {
        const double top = p00[ch] + tx * (p01[ch] - p00[ch]);
        const double bot = p10[ch] + tx * (p11[ch] - p10[ch]);
        o[ch] = top + ty * (bot - top);
      }
    }
  }
}

#define LENSCAM_INSTANTIATE(T)                                                 \
  template void matmul<T>(const T*, const T*, T*, int, int, int, Mode);        \
  template void matmul_nt<T>(const T*, const T*, T*, int, int, int, Mode);     \
  template void matmul_tn<T>(const T*, const T*, T*, int, int, int, Mode);     \
  template void conv2d_forward<T>(const T*, int, int, int, const T*, int, int, \
                                  int, const T*, int, int, T*, int, int,       \
                                  Mode);                                       \
  template void conv2d_backward_input<T>(const T*, int, int, int, const T*,    \
                                         int, int, int, int, int, T*, int,     \
                                         int, Mode);                           \
  template void conv2d_backward_kernel<T>(const T*, int, int, int, const T*,   \
                                          int, int, int, int, int, int, int,   \
                                          T*, T*, Mode);

LENSCAM_INSTANTIATE(float)
LENSCAM_INSTANTIATE(double)
#undef LENSCAM_INSTANTIATE

}  // namespace lenscam::kernels
