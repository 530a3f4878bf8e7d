#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <vector>

#include "lenscam/common.hpp"
#include "lenscam/data.hpp"
#include "lenscam/image.hpp"
#include "lenscam/optics.hpp"

using namespace lenscam;
namespace fs = std::filesystem;

namespace {

// one-pinhole setup small enough for fast capture synthesis
struct TinySetup {
  ApertureMask mask;
  PinholeGeometry geom;
  NoiseSpec noise;

  TinySetup() {
    MaskSpec ms;
    ms.pinhole_count = 1;
    ms.grid_cells = 16;
    ms.seed = 1;
    mask = generate_coded_mask(ms);
    geom.scene_distance = 4.0;
    noise = NoiseSpec{};  // noiseless by default
  }
};

std::vector<ImageGrid> make_refs(int n, int size, int channels,
                                 std::uint64_t seed0) {
  std::vector<ImageGrid> refs;
  for (int i = 0; i < n; ++i)
    refs.push_back(generate_scene(size, size, channels, seed0 + i));
  return refs;
}

ImageGrid centered_delta_psf(int n) {
  ImageGrid psf(n, n, 1);
  psf.at(n / 2, n / 2, 0) = 1.0;
  return psf;
}

}  // namespace

TEST_CASE("generated scenes are deterministic, seed-sensitive, and bounded") {
  const auto a = generate_scene(32, 24, 1, 7);
  const auto b = generate_scene(32, 24, 1, 7);
  const auto c = generate_scene(32, 24, 1, 8);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  CHECK(a.h == 32);
  CHECK(a.w == 24);

  double lo = 1e9, hi = -1e9;
  for (const double v : a.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi - lo > 0.2);  // scenes carry actual structure

  const auto rgb = generate_scene(16, 16, 3, 9);
  CHECK(rgb.c == 3);
  CHECK_THROWS_AS(generate_scene(0, 16, 1, 1), DomainError);
}

TEST_CASE("preprocess center-crops to square then resizes") {
  // 8x16 image, left half dark, right half bright: the centered 8x8 crop
  // straddles the boundary
  ImageGrid img(8, 16, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x, 0) = x < 8 ? 0.0 : 1.0;
  const auto out = preprocess(img, 4);
  CHECK(out.h == 4);
  CHECK(out.w == 4);
  // crop covers x in [4,12): half dark, half bright
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(out.at(0, 3, 0) == doctest::Approx(1.0));

  const auto ref = generate_scene(8, 8, 1, 3);
  const auto same = preprocess(ref, 8);
  for (std::size_t i = 0; i < ref.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
}

TEST_CASE("dataset synthesis pairs every reference with its capture") {
  const TinySetup s;
  const auto refs = make_refs(10, 16, 1, 100);
  const auto ds =
      synth_capture_dataset(refs, s.mask, s.geom, s.noise, 42, 0.2);

  REQUIRE(ds.records.size() == 10);
  const auto train = ds.split_indices("train");
  const auto eval = ds.split_indices("eval");
  CHECK(train.size() == 8);
  CHECK(eval.size() == 2);

  std::set<std::string> ids;
  for (const auto& r : ds.records) {
    ids.insert(r.id);
    CHECK(r.capture.h == 16);
    CHECK(r.capture.w == 16);
    CHECK(r.hash != 0);
  }
  CHECK(ids.size() == 10);  // unique ids
  CHECK(ds.psf.h == 16);

  // capture of record i equals the forward model applied to reference i
  const auto direct =
      convolve_centered(pinhole_project(refs[3], s.geom), ds.psf);
  for (std::size_t i = 0; i < direct.data.size(); ++i)
    CHECK(ds.records[3].capture.data[i] ==
          doctest::Approx(direct.data[i]).epsilon(1e-12));
}

TEST_CASE("noise streams differ per record but reproduce per seed") {
  const TinySetup s;
  NoiseSpec noise;
  noise.gaussian_sigma = 0.01;
  const auto refs = make_refs(4, 16, 1, 200);

  const auto a = synth_capture_dataset(refs, s.mask, s.geom, noise, 7, 0.0);
  const auto b = synth_capture_dataset(refs, s.mask, s.geom, noise, 7, 0.0);
  const auto c = synth_capture_dataset(refs, s.mask, s.geom, noise, 8, 0.0);

  for (int i = 0; i < 4; ++i) {
    CHECK(a.records[i].capture.data == b.records[i].capture.data);
    CHECK(a.records[i].capture.data != c.records[i].capture.data);
    CHECK(a.records[i].hash == b.records[i].hash);
  }

  // same reference twice: the per-record stream must decorrelate them
  const std::vector<ImageGrid> twins = {refs[0], refs[0]};
  const auto tw = synth_capture_dataset(twins, s.mask, s.geom, noise, 7, 0.0);
  CHECK(tw.records[0].capture.data != tw.records[1].capture.data);
  CHECK(tw.records[0].hash != tw.records[1].hash);
}

TEST_CASE("eval fraction carves a seeded, disjoint split") {
  const TinySetup s;
  const auto refs = make_refs(12, 16, 1, 300);
  const auto ds =
      synth_capture_dataset(refs, s.mask, s.geom, s.noise, 5, 0.25);
  const auto train = ds.split_indices("train");
  const auto eval = ds.split_indices("eval");
  CHECK(train.size() == 9);
  CHECK(eval.size() == 3);

  std::set<int> all(train.begin(), train.end());
  all.insert(eval.begin(), eval.end());
  CHECK(all.size() == 12);  // disjoint and covering

  CHECK_THROWS_AS(
      synth_capture_dataset(refs, s.mask, s.geom, s.noise, 5, 1.0),
      DomainError);
  CHECK_THROWS_AS(
      synth_capture_dataset({}, s.mask, s.geom, s.noise, 5, 0.2),
      DomainError);
}

TEST_CASE("psf override bypasses the mask-derived optics") {
  const TinySetup s;
  const auto refs = make_refs(3, 16, 1, 400);
  const auto psf = centered_delta_psf(16);
  const auto ds = synth_capture_dataset(refs, s.mask, s.geom, s.noise, 9, 0.0,
                                        &psf);
  CHECK(ds.psf.data == psf.data);

  // identity PSF: capture equals the pinhole projection of the reference
  const auto proj = pinhole_project(refs[1], s.geom);
  for (std::size_t i = 0; i < proj.data.size(); ++i)
    CHECK(ds.records[1].capture.data[i] ==
          doctest::Approx(proj.data[i]).epsilon(1e-9));
}

TEST_CASE("datasets survive a save/load round trip") {
  const TinySetup s;
  const auto refs = make_refs(5, 16, 1, 500);
  NoiseSpec noise;
  noise.gaussian_sigma = 0.005;
  const auto ds = synth_capture_dataset(refs, s.mask, s.geom, noise, 11, 0.2);

  const auto dir = fs::temp_directory_path() / "lenscam_data_test";
  fs::remove_all(dir);
  save_dataset(dir.string(), ds);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "psf.pgm"));

  const auto back = load_dataset(dir.string());
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(back.records[i].id == ds.records[i].id);
    CHECK(back.records[i].split == ds.records[i].split);
    CHECK(back.records[i].hash == ds.records[i].hash);
    // 16-bit storage: reload within one quantization step of the range,
    // including negative noise excursions (nothing may clamp to zero)
    double hi = 0.0, lo = 0.0;
    for (const double v : ds.records[i].capture.data) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    for (std::size_t k = 0; k < ds.records[i].capture.data.size(); ++k)
      CHECK(std::abs(back.records[i].capture.data[k] -
                     ds.records[i].capture.data[k]) <=
            2.0 * (hi - lo) / 65535.0);
  }
  CHECK_THROWS_AS(load_dataset((dir / "missing").string()), IoError);
}

TEST_CASE("corpus sampling is seeded and without replacement") {
  const auto dir = fs::temp_directory_path() / "lenscam_corpus_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "sub");
  for (int i = 0; i < 12; ++i) {
    ImageGrid img(4, 4, 1);
    img.at(0, 0, 0) = 0.5;
    const auto name = "img" + std::to_string(i) + ".pgm";
    save_image(((i % 2 ? dir / "sub" : dir) / name).string(), img);
  }

  const auto a = sample_corpus(dir.string(), 4, 3);
  const auto b = sample_corpus(dir.string(), 4, 3);
  CHECK(a.size() == 4);
  CHECK(a == b);
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 4);

  // across many seeds the selections cannot all coincide
  bool any_differs = false;
  for (std::uint64_t s = 4; s < 10; ++s)
    any_differs |= sample_corpus(dir.string(), 4, s) != a;
  CHECK(any_differs);

  const auto all = sample_corpus(dir.string(), 12, 1);
  CHECK(all.size() == 12);
  CHECK_THROWS_AS(sample_corpus(dir.string(), 13, 1), DomainError);
  CHECK_THROWS_AS(sample_corpus((dir / "nope").string(), 1, 1), IoError);
}
