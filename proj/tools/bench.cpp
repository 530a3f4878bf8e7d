// Serial-reference vs OpenMP comparison for the hot kernels. Both paths must
// produce bit-identical outputs (element ownership, fixed accumulation
// order); the table reports timings and the max absolute difference, which
// is required to be exactly zero.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "lenscam/common.hpp"
#include "lenscam/kernels.hpp"

namespace k = lenscam::kernels;

namespace {

using clk = std::chrono::steady_clock;

double now_ms() {
  return std::chrono::duration<double, std::milli>(clk::now().time_since_epoch())
      .count();
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  lenscam::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct Timed {
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  double max_diff = 0.0;
};

template <class Fn>
Timed run_pair(Fn&& fn, std::vector<double>& out_serial,
               std::vector<double>& out_parallel, int reps) {
  Timed t;
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn(k::Mode::serial, out_serial.data());
    best = std::min(best, now_ms() - t0);
  }
  t.serial_ms = best;
  best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn(k::Mode::parallel, out_parallel.data());
    best = std::min(best, now_ms() - t0);
  }
  t.parallel_ms = best;
  for (std::size_t i = 0; i < out_serial.size(); ++i)
    t.max_diff = std::max(t.max_diff, std::abs(out_serial[i] - out_parallel[i]));
  return t;
}

void report(const char* name, const char* size, const Timed& t) {
  std::printf("%-16s %-14s %10.3f ms %10.3f ms %8.2fx %12.3e\n", name, size,
              t.serial_ms, t.parallel_ms,
              t.parallel_ms > 0 ? t.serial_ms / t.parallel_ms : 0.0,
              t.max_diff);
}

}  // namespace

int main() {
  std::printf("threads=%d\n", k::threads());
  std::printf("%-16s %-14s %13s %13s %9s %12s\n", "kernel", "size", "serial",
              "parallel", "speedup", "max|diff|");

  {
    const int n = 384, kk = 384, m = 384;
    const auto a = random_vec(std::size_t(n) * kk, 1);
    const auto b = random_vec(std::size_t(kk) * m, 2);
    std::vector<double> cs(std::size_t(n) * m), cp(cs.size());
    const Timed t = run_pair(
        [&](k::Mode mode, double* out) {
          k::matmul(a.data(), b.data(), out, n, kk, m, mode);
        },
        cs, cp, 5);
    report("matmul", "384x384x384", t);
  }

  {
    const int h = 128, w = 128, ci = 16, co = 16, kh = 3, kw = 3;
    const auto in = random_vec(std::size_t(h) * w * ci, 3);
    const auto kern = random_vec(std::size_t(kh) * kw * ci * co, 4);
    std::vector<double> os(std::size_t(h) * w * co), op(os.size());
    const Timed t = run_pair(
        [&](k::Mode mode, double* out) {
          k::conv2d_forward(in.data(), h, w, ci, kern.data(), kh, kw, co,
                            static_cast<const double*>(nullptr), 1, 1, out, h,
                            w, mode);
        },
        os, op, 5);
    report("conv2d_forward", "128x128x16", t);
  }

  {
    const int n = 512;
    const auto re = random_vec(std::size_t(n) * n, 5);
    std::vector<std::complex<double>> base(std::size_t(n) * n);
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = re[i];
    std::vector<double> os(2 * base.size()), op(os.size());
    auto run = [&](k::Mode mode, double* out) {
      std::vector<std::complex<double>> d = base;
      k::fft_rows(d.data(), n, n, false, mode);
      k::fft_cols(d.data(), n, n, false, mode);
      for (std::size_t i = 0; i < d.size(); ++i) {
        out[2 * i] = d[i].real();
        out[2 * i + 1] = d[i].imag();
      }
    };
    const Timed t = run_pair(run, os, op, 5);
    report("fft2", "512x512", t);
  }

  {
    const int h = 512, w = 512;
    const auto in = random_vec(std::size_t(h) * w, 6);
    std::vector<double> os(in.size()), op(in.size());
    const Timed t = run_pair(
        [&](k::Mode mode, double* out) {
          k::gaussian_blur(in.data(), out, h, w, 3.0, mode);
        },
        os, op, 5);
    report("gaussian_blur", "512x512 s=3", t);
  }

  {
    const int h = 256, w = 256, c = 3, oh = 512, ow = 512;
    const auto in = random_vec(std::size_t(h) * w * c, 7);
    std::vector<double> os(std::size_t(oh) * ow * c), op(os.size());
    const Timed t = run_pair(
        [&](k::Mode mode, double* out) {
          k::bilinear_resize(in.data(), h, w, c, out, oh, ow, mode);
        },
        os, op, 5);
    report("bilinear_resize", "256->512 c=3", t);
  }

  return 0;
}
