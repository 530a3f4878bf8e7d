#include "lenscam/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lenscam/common.hpp"
#include "lenscam/fft.hpp"

namespace lenscam {

void PinholeGeometry::validate() const {
  if (!(wavelength > 0.0))
    throw DomainError("wavelength must be positive, got " +
                      std::to_string(wavelength));
  if (!(mask_sensor_distance > 0.0))
    throw DomainError("mask_sensor_distance must be positive, got " +
                      std::to_string(mask_sensor_distance));
  if (!(scene_distance > 0.0))
    throw DomainError("scene_distance must be positive, got " +
                      std::to_string(scene_distance));
  if (!(pinhole_size > 0.0))
    throw DomainError("pinhole_size must be positive, got " +
                      std::to_string(pinhole_size));
}

void MaskSpec::validate() const {
  if (pinhole_count < 1)
    throw DomainError("pinhole_count must be >= 1, got " +
                      std::to_string(pinhole_count));
  if (!(pinhole_size > 0.0))
    throw DomainError("pinhole_size must be positive");
  if (!(region_h > 0.0) || !(region_w > 0.0))
    throw DomainError("mask region must have positive extent");
  if (grid_cells < 2) throw DomainError("grid_cells must be >= 2");
  if (thickness < 0.0) throw DomainError("thickness must be non-negative");
  if (pinhole_size > region_h || pinhole_size > region_w)
    throw GeometryError("pinhole_size " + std::to_string(pinhole_size) +
                        " exceeds mask region");
  const double area_needed = pinhole_count * pinhole_size * pinhole_size;
  if (area_needed > region_h * region_w)
    throw PackingError("pinhole area " + std::to_string(area_needed) +
                       " m^2 exceeds region area " +
                       std::to_string(region_h * region_w) + " m^2");
}

double ApertureMask::open_fraction() const {
  const double sum =
      std::accumulate(transmission.data.begin(), transmission.data.end(), 0.0);
  const double cell_area = pitch_y * pitch_x;
  const double region_area = (pitch_y * transmission.h) *
                             (pitch_x * transmission.w);
  return sum * cell_area / region_area;
}

double optimal_pinhole_diameter(double wavelength, double distance,
                                double coeff) {
  if (!(wavelength > 0.0))
    throw DomainError("wavelength must be positive, got " +
                      std::to_string(wavelength));
  if (!(distance > 0.0))
    throw DomainError("distance must be positive, got " +
                      std::to_string(distance));
  if (!(coeff > 0.0))
    throw DomainError("coefficient must be positive, got " +
                      std::to_string(coeff));
  return coeff * std::sqrt(wavelength * distance);
}

namespace {

struct Rect {
  double y0, x0;  // top-left corner, meters
};

// Adds one open square of side `a` to the transmission raster with exact
// fractional cell coverage, so the grid sum reproduces the analytic open
// area regardless of alignment.
void rasterize_pinhole(ImageGrid& grid, double pitch_y, double pitch_x,
                       const Rect& r, double a) {
  const double gy0 = r.y0 / pitch_y;
  const double gy1 = (r.y0 + a) / pitch_y;
  const double gx0 = r.x0 / pitch_x;
  const double gx1 = (r.x0 + a) / pitch_x;
  const int cy0 = std::max(0, static_cast<int>(std::floor(gy0)));
  const int cy1 = std::min(grid.h - 1, static_cast<int>(std::ceil(gy1)) - 1);
  const int cx0 = std::max(0, static_cast<int>(std::floor(gx0)));
  const int cx1 = std::min(grid.w - 1, static_cast<int>(std::ceil(gx1)) - 1);
  for (int y = cy0; y <= cy1; ++y) {
    const double oy = std::min<double>(y + 1, gy1) - std::max<double>(y, gy0);
    if (oy <= 0) continue;
    for (int x = cx0; x <= cx1; ++x) {
      const double ox = std::min<double>(x + 1, gx1) - std::max<double>(x, gx0);
      if (ox <= 0) continue;
      grid.at(y, x) = std::min(1.0, grid.at(y, x) + oy * ox);
    }
  }
}

bool overlaps(const std::vector<Rect>& placed, const Rect& r, double a) {
  for (const Rect& p : placed)
    if (r.y0 < p.y0 + a && p.y0 < r.y0 + a && r.x0 < p.x0 + a &&
        p.x0 < r.x0 + a)
      return true;
  return false;
}

}  // namespace

ApertureMask generate_coded_mask(const MaskSpec& spec) {
  spec.validate();
  const double a = spec.pinhole_size;
  const int n = spec.pinhole_count;

  std::vector<Rect> placed;
  placed.reserve(n);
  Rng rng(spec.seed);

  if (n == 1) {
    placed.push_back({(spec.region_h - a) / 2.0, (spec.region_w - a) / 2.0});
  } else {
    // Uniform rejection sampling works at low fill; dense masks (the ~1000
    // pinhole regime approaches full coverage) fall back to a seeded
    // jittered-slot layout that always succeeds when a slot fits a pinhole.
    const long budget = 64L * n;
    long attempts = 0;
    while (static_cast<int>(placed.size()) < n && attempts < budget) {
      ++attempts;
      Rect r{rng.uniform(0.0, spec.region_h - a),
             rng.uniform(0.0, spec.region_w - a)};
      if (!overlaps(placed, r, a)) placed.push_back(r);
    }
    if (static_cast<int>(placed.size()) < n) {
      const int g = static_cast<int>(std::ceil(std::sqrt(double(n))));
      const double slot_h = spec.region_h / g;
      const double slot_w = spec.region_w / g;
      if (slot_h < a || slot_w < a)
        throw PackingError(
            "cannot place " + std::to_string(n) + " pinholes of " +
            std::to_string(a) + " m without overlap in the given region");
      placed.clear();
      std::vector<int> slots(static_cast<std::size_t>(g) * g);
      std::iota(slots.begin(), slots.end(), 0);
      for (std::size_t i = slots.size() - 1; i > 0; --i)
        std::swap(slots[i], slots[rng.below(i + 1)]);
      for (int i = 0; i < n; ++i) {
        const int s = slots[i];
        const double sy = (s / g) * slot_h;
        const double sx = (s % g) * slot_w;
        placed.push_back({sy + rng.uniform(0.0, slot_h - a),
                          sx + rng.uniform(0.0, slot_w - a)});
      }
    }
  }

  ApertureMask mask;
  mask.transmission = ImageGrid(spec.grid_cells, spec.grid_cells, 1);
  mask.pitch_y = spec.region_h / spec.grid_cells;
  mask.pitch_x = spec.region_w / spec.grid_cells;
  mask.thickness = spec.thickness;
  mask.seed = spec.seed;
  for (const Rect& r : placed)
    rasterize_pinhole(mask.transmission, mask.pitch_y, mask.pitch_x, r, a);
  return mask;
}

void save_mask(const std::string& path, const ApertureMask& mask) {
  nlohmann::json meta;
  meta["kind"] = "aperture_mask";
  meta["pitch_y"] = mask.pitch_y;
  meta["pitch_x"] = mask.pitch_x;
  meta["thickness"] = mask.thickness;
  meta["seed"] = mask.seed;
  save_image(path, mask.transmission, meta);
}

ApertureMask load_mask(const std::string& path) {
  LoadedImage li = load_image(path);
  for (const char* field : {"pitch_y", "pitch_x", "thickness"})
    if (!li.meta.contains(field))
      throw PackingError("mask sidecar '" + path + ".json' lacks field '" +
                         field + "'");
  ApertureMask mask;
  mask.transmission = std::move(li.image);
  mask.pitch_y = li.meta["pitch_y"].get<double>();
  mask.pitch_x = li.meta["pitch_x"].get<double>();
  mask.thickness = li.meta["thickness"].get<double>();
  mask.seed = li.meta.value("seed", std::uint64_t{0});
  return mask;
}

ImageGrid pinhole_project(const ImageGrid& scene, const PinholeGeometry& geom) {
  geom.validate();
  const double z = geom.scene_distance;
  const double inv_z2 = 1.0 / (z * z);
  ImageGrid out(scene.h, scene.w, scene.c);
  for (int y = 0; y < out.h; ++y) {
    const double sy = y / z;
    const int y0 = static_cast<int>(std::floor(sy));
    const double ty = sy - y0;
    for (int x = 0; x < out.w; ++x) {
      const double sx = x / z;
      const int x0 = static_cast<int>(std::floor(sx));
      const double tx = sx - x0;
      for (int ch = 0; ch < scene.c; ++ch) {
        auto tap = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= scene.h || xx < 0 || xx >= scene.w) return 0.0;
          return scene.at(yy, xx, ch);
        };
        const double top = (1 - tx) * tap(y0, x0) + tx * tap(y0, x0 + 1);
        const double bot = (1 - tx) * tap(y0 + 1, x0) + tx * tap(y0 + 1, x0 + 1);
        out.at(y, x, ch) = ((1 - ty) * top + ty * bot) * inv_z2;
      }
    }
  }
  return out;
}

double blur_width(const PinholeGeometry& geom, const BlurCoefficients& blur) {
  geom.validate();
  const double geometric = blur.c1 * geom.pinhole_size;
  const double diffractive = blur.c2 * geom.wavelength *
                             geom.mask_sensor_distance / geom.pinhole_size;
  return std::hypot(geometric, diffractive);
}

double thickness_vignetting(double a, double t, double incidence_angle) {
  if (!(a > 0.0)) throw DomainError("pinhole size must be positive");
  if (t < 0.0) throw DomainError("thickness must be non-negative");
  const double abs_angle = std::abs(incidence_angle);
  if (abs_angle >= kPi / 2.0) return 0.0;
  return std::clamp(1.0 - t * std::tan(abs_angle) / a, 0.0, 1.0);
}

ImageGrid psf_from_mask(const ApertureMask& mask, const PinholeGeometry& geom,
                        int out_h, int out_w, double sensor_pitch,
                        const BlurCoefficients& blur) {
  geom.validate();
  if (out_h <= 0 || out_w <= 0 || !(sensor_pitch > 0.0))
    throw GeometryError("psf raster must have positive size and pitch");

  const ImageGrid& tr = mask.transmission;
  const double open = mask.open_fraction();
  if (!(open > 0.0)) throw DomainError("mask is fully opaque (no open area)");

  // Box-average resample of the mask onto the sensor raster (unit
  // magnification, centered), via supersampling: sensor pixels are usually
  // coarser than mask cells.
  const int ss = std::clamp(
      static_cast<int>(std::ceil(2.0 * sensor_pitch /
                                 std::min(mask.pitch_y, mask.pitch_x))),
      1, 16);
  const double cy = 0.5 * out_h;
  const double cx = 0.5 * out_w;
  const double mcy = 0.5 * tr.h;
  const double mcx = 0.5 * tr.w;
  ImageGrid psf(out_h, out_w, 1);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < ss; ++sy) {
        const double oy = (y + (sy + 0.5) / ss - cy) * sensor_pitch;
        const double my = oy / mask.pitch_y + mcy;
        const int iy = static_cast<int>(std::floor(my));
        if (iy < 0 || iy >= tr.h) continue;
        for (int sx = 0; sx < ss; ++sx) {
          const double ox = (x + (sx + 0.5) / ss - cx) * sensor_pitch;
          const double mx = ox / mask.pitch_x + mcx;
          const int ix = static_cast<int>(std::floor(mx));
          if (ix < 0 || ix >= tr.w) continue;
          acc += tr.at(iy, ix);
        }
      }
      psf.at(y, x) = acc / (ss * ss);
    }
  }

  // Thickness vignetting: per-axis tunnel transmission at the incidence
  // angle of each raster cell.
  if (mask.thickness > 0.0) {
    const double d = geom.mask_sensor_distance;
    const double t = mask.thickness;
    const double a = geom.pinhole_size;
    for (int y = 0; y < out_h; ++y) {
      const double ay = std::atan(std::abs((y + 0.5 - cy) * sensor_pitch) / d);
      const double vy = thickness_vignetting(a, t, ay);
      for (int x = 0; x < out_w; ++x) {
        const double ax =
            std::atan(std::abs((x + 0.5 - cx) * sensor_pitch) / d);
        psf.at(y, x) *= vy * thickness_vignetting(a, t, ax);
      }
    }
  }

  const double w = blur_width(geom, blur);
  if (w > 0.0) psf = gaussian_blur(psf, w / sensor_pitch);

  double sum = std::accumulate(psf.data.begin(), psf.data.end(), 0.0);
  if (!(sum > 0.0))
    throw DomainError("psf vanished after vignetting; mask/geometry mismatch");
  const double scale = open / sum;
  for (double& v : psf.data) v *= scale;
  return psf;
}

ImageGrid convolve_centered(const ImageGrid& f, const ImageGrid& k) {
  if (f.h != k.h || f.w != k.w)
    throw GeometryError("signal " + std::to_string(f.h) + "x" +
                        std::to_string(f.w) + " and kernel " +
                        std::to_string(k.h) + "x" + std::to_string(k.w) +
                        " rasters differ");
  if (k.c != 1) throw ShapeError("convolution kernel must be single-channel");
  if (!is_pow2(f.h) || !is_pow2(f.w))
    throw DomainError("raster dimensions must be powers of two for the "
                      "frequency-domain path, got " +
                      std::to_string(f.h) + "x" + std::to_string(f.w));
  const auto k0 = fft::circshift(k.data, k.h, k.w, -(k.h / 2), -(k.w / 2));
  ImageGrid out(f.h, f.w, f.c);
  if (f.c == 1) {
    out.data = fft::convolve_circular(f.data, k0, f.h, f.w);
    return out;
  }
  std::vector<double> plane(static_cast<std::size_t>(f.h) * f.w);
  for (int ch = 0; ch < f.c; ++ch) {
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x)
        plane[static_cast<std::size_t>(y) * f.w + x] = f.at(y, x, ch);
    const auto conv = fft::convolve_circular(plane, k0, f.h, f.w);
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x)
        out.at(y, x, ch) = conv[static_cast<std::size_t>(y) * f.w + x];
  }
  return out;
}

CaptureResult coded_capture(const ImageGrid& scene, const ApertureMask& mask,
                            const PinholeGeometry& geom, const NoiseSpec& noise,
                            double sensor_pitch, const BlurCoefficients& blur) {
  geom.validate();
  if (sensor_pitch <= 0.0)
    sensor_pitch = mask.pitch_y * mask.transmission.h / scene.h;

  CaptureResult res;
  res.projected = pinhole_project(scene, geom);
  res.psf = psf_from_mask(mask, geom, scene.h, scene.w, sensor_pitch, blur);
  res.capture = convolve_centered(res.projected, res.psf);

  if (noise.gaussian_sigma > 0.0 || noise.poisson) {
    Rng rng(noise.seed);
    for (double& v : res.capture.data) {
      if (noise.poisson) {
        const double mean = std::max(v, 0.0) * noise.photons_per_unit;
        v = static_cast<double>(rng.poisson(mean)) / noise.photons_per_unit;
      }
      if (noise.gaussian_sigma > 0.0) v += noise.gaussian_sigma * rng.gauss();
    }
  }
  return res;
}

}  // namespace lenscam
