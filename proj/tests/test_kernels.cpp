#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "lenscam/common.hpp"
#include "lenscam/fft.hpp"
#include "lenscam/kernels.hpp"

namespace k = lenscam::kernels;
using lenscam::Rng;
using cplx = std::complex<double>;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("matmul matches the naive triple loop") {
  const int n = 7, kk = 5, m = 9;
  const auto a = random_vec(std::size_t(n) * kk, 1);
  const auto b = random_vec(std::size_t(kk) * m, 2);
  std::vector<double> c(std::size_t(n) * m), want(c.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      for (int p = 0; p < kk; ++p)
        want[i * m + j] += a[i * kk + p] * b[p * m + j];
  k::matmul(a.data(), b.data(), c.data(), n, kk, m, k::Mode::serial);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("matmul_nt and matmul_tn match explicit transposition") {
  const int n = 6, m = 4, kk = 5;
  const auto g = random_vec(std::size_t(n) * m, 3);
  const auto b = random_vec(std::size_t(kk) * m, 4);
  const auto a = random_vec(std::size_t(n) * kk, 5);

  // c(n,kk) = g(n,m) * b(kk,m)^T
  std::vector<double> c(std::size_t(n) * kk), want(c.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kk; ++j)
      for (int p = 0; p < m; ++p)
        want[i * kk + j] += g[i * m + p] * b[j * m + p];
  k::matmul_nt(g.data(), b.data(), c.data(), n, m, kk, k::Mode::serial);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // c(kk,m) = a(n,kk)^T * g(n,m)
  std::vector<double> d(std::size_t(kk) * m), want2(d.size(), 0.0);
  for (int i = 0; i < kk; ++i)
    for (int j = 0; j < m; ++j)
      for (int p = 0; p < n; ++p)
        want2[i * m + j] += a[p * kk + i] * g[p * m + j];
  k::matmul_tn(a.data(), g.data(), d.data(), n, kk, m, k::Mode::serial);
  for (std::size_t i = 0; i < d.size(); ++i)
    CHECK(d[i] == doctest::Approx(want2[i]).epsilon(1e-12));
}

TEST_CASE("conv2d forward matches the naive oracle with stride and padding") {
  const int h = 9, w = 7, ci = 3, co = 2, kh = 3, kw = 3;
  for (const auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}}) {
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    const auto in = random_vec(std::size_t(h) * w * ci, 6);
    const auto kern = random_vec(std::size_t(kh) * kw * ci * co, 7);
    const auto bias = random_vec(co, 8);
    std::vector<double> out(std::size_t(oh) * ow * co);
    std::vector<double> want(out.size(), 0.0);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int f = 0; f < co; ++f) {
          double acc = bias[f];
          for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
              const int yi = oy * stride + dy - pad;
              const int xi = ox * stride + dx - pad;
              if (yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
              for (int ch = 0; ch < ci; ++ch)
                acc += in[(std::size_t(yi) * w + xi) * ci + ch] *
                       kern[((std::size_t(dy) * kw + dx) * ci + ch) * co + f];
            }
          want[(std::size_t(oy) * ow + ox) * co + f] = acc;
        }
    k::conv2d_forward(in.data(), h, w, ci, kern.data(), kh, kw, co,
                      bias.data(), stride, pad, out.data(), oh, ow,
                      k::Mode::serial);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d backward_input is the adjoint of the forward pass") {
  // <gout, conv(in)> == <conv_bwd_input(gout), in> for bias-free conv.
  const int h = 8, w = 6, ci = 2, co = 3, kh = 3, kw = 3, stride = 2, pad = 1;
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  const auto in = random_vec(std::size_t(h) * w * ci, 9);
  const auto kern = random_vec(std::size_t(kh) * kw * ci * co, 10);
  const auto gout = random_vec(std::size_t(oh) * ow * co, 11);

  std::vector<double> out(std::size_t(oh) * ow * co);
  k::conv2d_forward(in.data(), h, w, ci, kern.data(), kh, kw, co,
                    static_cast<const double*>(nullptr), stride, pad,
                    out.data(), oh, ow, k::Mode::serial);
  std::vector<double> gin(std::size_t(h) * w * ci);
  k::conv2d_backward_input(gout.data(), oh, ow, co, kern.data(), kh, kw, ci,
                           stride, pad, gin.data(), h, w, k::Mode::serial);

  const double lhs = std::inner_product(gout.begin(), gout.end(), out.begin(), 0.0);
  const double rhs = std::inner_product(gin.begin(), gin.end(), in.begin(), 0.0);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv2d backward_kernel matches finite differences") {
  const int h = 6, w = 5, ci = 2, co = 2, kh = 3, kw = 3, stride = 1, pad = 1;
  const int oh = h, ow = w;
  const auto in = random_vec(std::size_t(h) * w * ci, 12);
  auto kern = random_vec(std::size_t(kh) * kw * ci * co, 13);
  const auto gout = random_vec(std::size_t(oh) * ow * co, 14);

  std::vector<double> gkern(kern.size()), gbias(co);
  k::conv2d_backward_kernel(in.data(), h, w, ci, gout.data(), oh, ow, co, kh,
                            kw, stride, pad, gkern.data(), gbias.data(),
                            k::Mode::serial);

  auto loss = [&](const std::vector<double>& kk_) {
    std::vector<double> out(std::size_t(oh) * ow * co);
    std::vector<double> bias(co, 0.0);
    k::conv2d_forward(in.data(), h, w, ci, kk_.data(), kh, kw, co, bias.data(),
                      stride, pad, out.data(), oh, ow, k::Mode::serial);
    return std::inner_product(out.begin(), out.end(), gout.begin(), 0.0);
  };
  const double eps = 1e-6;
  for (const std::size_t idx : {std::size_t{0}, kern.size() / 2, kern.size() - 1}) {
    auto kp = kern, km = kern;
    kp[idx] += eps;
    km[idx] -= eps;
    const double fd = (loss(kp) - loss(km)) / (2 * eps);
    CHECK(gkern[idx] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("1D FFT matches the direct DFT and round-trips") {
  const int n = 16;
  const auto re = random_vec(n, 15);
  const auto im = random_vec(n, 16);
  std::vector<cplx> x(n);
  for (int i = 0; i < n; ++i) x[i] = {re[i], im[i]};

  std::vector<cplx> want(n);
  for (int f = 0; f < n; ++f) {
    cplx acc = 0.0;
    for (int t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * lenscam::kPi * f * t / n);
    want[f] = acc;
  }
  auto got = x;
  k::fft_rows(got.data(), 1, n, false, k::Mode::serial);
  for (int i = 0; i < n; ++i) {
    CHECK(got[i].real() == doctest::Approx(want[i].real()).epsilon(1e-10));
    CHECK(got[i].imag() == doctest::Approx(want[i].imag()).epsilon(1e-10));
  }

  k::fft_rows(got.data(), 1, n, true, k::Mode::serial);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(got[i] - x[i]) < 1e-12);
}

TEST_CASE("FFT rejects non-power-of-two lengths") {
  std::vector<cplx> x(12);
  CHECK_THROWS_AS(k::fft_rows(x.data(), 1, 12, false, k::Mode::serial),
                  lenscam::DomainError);
  CHECK_THROWS_AS(k::fft_cols(x.data(), 3, 4, false, k::Mode::serial),
                  lenscam::DomainError);
}

TEST_CASE("fft2 convolution theorem agrees with direct circular convolution") {
  const int h = 8, w = 8;
  const auto f = random_vec(std::size_t(h) * w, 17);
  const auto g = random_vec(std::size_t(h) * w, 18);
  const auto got = lenscam::fft::convolve_circular(f, g, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < h; ++dy)
        for (int dx = 0; dx < w; ++dx)
          acc += f[dy * w + dx] *
                 g[((y - dy + h) % h) * w + ((x - dx + w) % w)];
      CHECK(got[y * w + x] == doctest::Approx(acc).epsilon(1e-10));
    }
}

TEST_CASE("circshift wraps both axes") {
  const int h = 4, w = 4;
  std::vector<double> a(16);
  std::iota(a.begin(), a.end(), 0.0);
  const auto s = lenscam::fft::circshift(a, h, w, 1, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      CHECK(s[y * w + x] == a[((y - 1 + h) % h) * w + (x + 1) % w]);
}

TEST_CASE("gaussian_blur preserves constants and total mass") {
  const int h = 16, w = 16;
  std::vector<double> in(std::size_t(h) * w, 0.7), out(in.size());
  k::gaussian_blur(in.data(), out.data(), h, w, 2.5, k::Mode::serial);
  for (const double v : out) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

  const auto img = random_vec(std::size_t(h) * w, 19, 0.0, 1.0);
  k::gaussian_blur(img.data(), out.data(), h, w, 1.3, k::Mode::serial);
  const double sum_in = std::accumulate(img.begin(), img.end(), 0.0);
  const double sum_out = std::accumulate(out.begin(), out.end(), 0.0);
  CHECK(sum_out == doctest::Approx(sum_in).epsilon(1e-10));
}

TEST_CASE("bilinear_resize is exact on identity and linear ramps") {
  const int h = 5, w = 6, c = 2;
  const auto in = random_vec(std::size_t(h) * w * c, 20);
  std::vector<double> same(in.size());
  k::bilinear_resize(in.data(), h, w, c, same.data(), h, w, k::Mode::serial);
  for (std::size_t i = 0; i < in.size(); ++i)
    CHECK(same[i] == doctest::Approx(in[i]).epsilon(1e-12));

  // A ramp along x stays a ramp at 2x resolution away from the clamped edges.
  std::vector<double> ramp(std::size_t(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ramp[y * w + x] = x;
  std::vector<double> up(std::size_t(h) * 2 * w * 2);
  k::bilinear_resize(ramp.data(), h, w, 1, up.data(), 2 * h, 2 * w,
                     k::Mode::serial);
  for (int x = 1; x < 2 * w - 2; ++x)
    CHECK(up[(2 * h / 2) * 2 * w + x + 1] - up[(2 * h / 2) * 2 * w + x] ==
          doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("parallel mode is bit-identical to serial for every kernel") {
  for (const int threads : {2, 3, 7}) {
    k::set_threads(threads);

    const int n = 33, kk = 17, m = 29;
    const auto a = random_vec(std::size_t(n) * kk, 21);
    const auto b = random_vec(std::size_t(kk) * m, 22);
    std::vector<double> cs(std::size_t(n) * m), cp(cs.size());
    k::matmul(a.data(), b.data(), cs.data(), n, kk, m, k::Mode::serial);
    k::matmul(a.data(), b.data(), cp.data(), n, kk, m, k::Mode::parallel);
    CHECK(cs == cp);

    std::vector<double> ts(std::size_t(kk) * m), tp(ts.size());
    k::matmul_tn(a.data(), cs.data(), ts.data(), n, kk, m, k::Mode::serial);
    k::matmul_tn(a.data(), cs.data(), tp.data(), n, kk, m, k::Mode::parallel);
    CHECK(ts == tp);

    const int h = 13, w = 11, ci = 3, co = 4;
    const auto img = random_vec(std::size_t(h) * w * ci, 23);
    const auto kern = random_vec(9 * ci * co, 24);
    const auto bias = random_vec(co, 25);
    std::vector<double> os(std::size_t(h) * w * co), op(os.size());
    k::conv2d_forward(img.data(), h, w, ci, kern.data(), 3, 3, co, bias.data(),
                      1, 1, os.data(), h, w, k::Mode::serial);
    k::conv2d_forward(img.data(), h, w, ci, kern.data(), 3, 3, co, bias.data(),
                      1, 1, op.data(), h, w, k::Mode::parallel);
    CHECK(os == op);

    std::vector<double> gis(std::size_t(h) * w * ci), gip(gis.size());
    k::conv2d_backward_input(os.data(), h, w, co, kern.data(), 3, 3, ci, 1, 1,
                             gis.data(), h, w, k::Mode::serial);
    k::conv2d_backward_input(os.data(), h, w, co, kern.data(), 3, 3, ci, 1, 1,
                             gip.data(), h, w, k::Mode::parallel);
    CHECK(gis == gip);

    std::vector<double> gks(kern.size()), gkp(kern.size()), gbs(co), gbp(co);
    k::conv2d_backward_kernel(img.data(), h, w, ci, os.data(), h, w, co, 3, 3,
                              1, 1, gks.data(), gbs.data(), k::Mode::serial);
    k::conv2d_backward_kernel(img.data(), h, w, ci, os.data(), h, w, co, 3, 3,
                              1, 1, gkp.data(), gbp.data(), k::Mode::parallel);
    CHECK(gks == gkp);
    CHECK(gbs == gbp);

    const int fn = 32;
    const auto re = random_vec(std::size_t(fn) * fn, 26);
    std::vector<cplx> ds(std::size_t(fn) * fn), dp(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = dp[i] = re[i];
    k::fft_rows(ds.data(), fn, fn, false, k::Mode::serial);
    k::fft_cols(ds.data(), fn, fn, false, k::Mode::serial);
    k::fft_rows(dp.data(), fn, fn, false, k::Mode::parallel);
    k::fft_cols(dp.data(), fn, fn, false, k::Mode::parallel);
    CHECK(ds == dp);

    const auto plane = random_vec(std::size_t(fn) * fn, 27);
    std::vector<double> bs(plane.size()), bp(plane.size());
    k::gaussian_blur(plane.data(), bs.data(), fn, fn, 1.7, k::Mode::serial);
    k::gaussian_blur(plane.data(), bp.data(), fn, fn, 1.7, k::Mode::parallel);
    CHECK(bs == bp);

    std::vector<double> rs(std::size_t(24) * 18 * ci), rp(rs.size());
    k::bilinear_resize(img.data(), h, w, ci, rs.data(), 24, 18, k::Mode::serial);
    k::bilinear_resize(img.data(), h, w, ci, rp.data(), 24, 18, k::Mode::parallel);
    CHECK(rs == rp);
  }
  k::set_threads(0);
}
