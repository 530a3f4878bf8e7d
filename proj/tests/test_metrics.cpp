#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "lenscam/common.hpp"
#include "lenscam/image.hpp"
#include "lenscam/metrics.hpp"

using namespace lenscam;

namespace {

ImageGrid random_image(int h, int w, int c, std::uint64_t seed) {
  ImageGrid img(h, w, c);
  Rng rng(seed);
  for (double& x : img.data) x = rng.uniform(0.0, 1.0);
  return img;
}

ImageGrid add_noise(const ImageGrid& img, double sigma, std::uint64_t seed) {
  ImageGrid out = img;
  Rng rng(seed);
  for (double& x : out.data) x += sigma * rng.gauss();
  return out;
}

}  // namespace

TEST_CASE("psnr matches the direct definition") {
  const auto a = random_image(9, 7, 2, 1);
  const auto b = random_image(9, 7, 2, 2);
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / double(a.data.size());
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse))
                          .epsilon(1e-12));
  CHECK(psnr(a, b, 2.0) == doctest::Approx(10.0 * std::log10(4.0 / mse))
                               .epsilon(1e-12));
}

TEST_CASE("psnr of identical images is capped at 100 dB") {
  const auto a = random_image(8, 8, 1, 3);
  CHECK(psnr(a, a) == doctest::Approx(100.0));

  // a tiny error that still exceeds 100 dB also lands on the cap
  auto b = a;
  b.data[0] += 1e-9;
  CHECK(psnr(a, b) == doctest::Approx(100.0));

  // but a measurable error reports its true value
  b.data[0] = a.data[0] + 1e-3;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(64.0 / 1e-6)));
}

TEST_CASE("psnr rejects mismatched shapes") {
  CHECK_THROWS_AS(psnr(ImageGrid(4, 4, 1), ImageGrid(4, 5, 1)), ShapeError);
  CHECK_THROWS_AS(ssim(ImageGrid(16, 16, 1), ImageGrid(16, 16, 2)),
                  ShapeError);
}

TEST_CASE("ssim is 1 for identical images and symmetric in its arguments") {
  const auto a = random_image(24, 24, 1, 4);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const auto b = add_noise(a, 0.1, 5);
  const double ab = ssim(a, b);
  CHECK(ab == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ab < 1.0);
  CHECK(ab > 0.0);
}

TEST_CASE("both metrics degrade monotonically with noise level") {
  const auto a = random_image(32, 32, 1, 6);
  double prev_psnr = 1e9, prev_ssim = 2.0;
  for (const double sigma : {0.01, 0.05, 0.15, 0.4}) {
    const auto b = add_noise(a, sigma, 7);
    const double p = psnr(a, b), s = ssim(a, b);
    CHECK(p < prev_psnr);
    CHECK(s < prev_ssim);
    prev_psnr = p;
    prev_ssim = s;
  }
}

TEST_CASE("ssim penalizes structure loss harder than a constant shift") {
  ImageGrid a(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      a.at(y, x, 0) = ((x / 4 + y / 4) % 2) ? 0.8 : 0.2;

  ImageGrid shifted = a;
  for (double& v : shifted.data) v += 0.05;
  ImageGrid flat(32, 32, 1);
  for (double& v : flat.data) v = 0.5;

  CHECK(ssim(a, shifted) > 0.9);
  CHECK(ssim(a, flat) < 0.2);
}

TEST_CASE("multi-channel ssim averages the per-channel scores") {
  const auto r = random_image(24, 24, 1, 8);
  const auto g = add_noise(r, 0.2, 9);

  ImageGrid rg(24, 24, 2), rr(24, 24, 2);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      rg.at(y, x, 0) = r.at(y, x, 0);
      rg.at(y, x, 1) = g.at(y, x, 0);
      rr.at(y, x, 0) = r.at(y, x, 0);
      rr.at(y, x, 1) = r.at(y, x, 0);
    }
  const double want = 0.5 * (1.0 + ssim(r, g));
  CHECK(ssim(rr, rg) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("intensity error rate computes both published conventions") {
  const auto zero = intensity_error_rate(0.0);
  CHECK(zero.published_form == doctest::Approx(1.0));
  CHECK(zero.derived == doctest::Approx(1.0));

  const auto drop = intensity_error_rate(-20.0);
  CHECK(drop.published_form == doctest::Approx(1e-10));
  CHECK(drop.derived == doctest::Approx(0.1));

  const auto gain = intensity_error_rate(6.0);
  CHECK(gain.published_form == doctest::Approx(std::pow(10.0, 3.0)));
  CHECK(gain.derived == doctest::Approx(std::pow(10.0, 0.3)));
}

TEST_CASE("quality report aggregates rows and serializes") {
  QualityReport rep;
  rep.model_name = "gmlp";
  rep.in_out = "64-64";
  rep.param_count = 1234;
  rep.train_size = 500;
  rep.rows = {{"img0", 20.0, 0.5}, {"img1", 30.0, 0.7}, {"img2", 25.0, 0.6}};

  CHECK(rep.mean_psnr() == doctest::Approx(25.0));
  CHECK(rep.mean_ssim() == doctest::Approx(0.6));

  const std::string csv = rep.to_csv();
  std::istringstream lines(csv);
  std::string line;
  int data_rows = 0;
  bool summary = false;
  while (std::getline(lines, line)) {
    if (line.rfind("img", 0) == 0) ++data_rows;
    if (line.rfind("gmlp,64-64,1234,500,", 0) == 0) summary = true;
  }
  CHECK(data_rows == 3);
  CHECK(summary);

  const auto j = rep.to_json();
  CHECK(j.at("model").get<std::string>() == "gmlp");
  CHECK(j.at("mean_psnr_db").get<double>() == doctest::Approx(25.0));
  CHECK(j.at("images").size() == 3);
}
