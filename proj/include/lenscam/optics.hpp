#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lenscam/image.hpp"

namespace lenscam {

// All lengths are meters.
struct PinholeGeometry {
  double wavelength = 500e-9;
  double mask_sensor_distance = 2e-3;
  double scene_distance = 1.0;
  double pinhole_size = 61e-6;

  void validate() const;
};

struct MaskSpec {
  double region_h = 2e-3;
  double region_w = 2e-3;
  int pinhole_count = 1000;
  double pinhole_size = 61e-6;
  int grid_cells = 256;      // transmission raster resolution per axis
  double thickness = 0.0;    // plate thickness
  std::uint64_t seed = 1;

  void validate() const;
};

struct ApertureMask {
  ImageGrid transmission;  // (grid_cells, grid_cells), values in [0,1]
  double pitch_y = 0.0;    // meters per cell
  double pitch_x = 0.0;
  double thickness = 0.0;
  std::uint64_t seed = 0;

  double open_fraction() const;  // sum(transmission) * cell_area / region_area
};

struct NoiseSpec {
  double gaussian_sigma = 0.0;  // additive, in intensity units
  bool poisson = false;
  double photons_per_unit = 1e4;  // shot-noise scale when poisson is on
  std::uint64_t seed = 1;
};

// Blur model knobs: kernel width w = sqrt((c1*a)^2 + (c2*lambda*d/a)^2).
struct BlurCoefficients {
  double c1 = 0.5;
  double c2 = 2.08;
};

double optimal_pinhole_diameter(double wavelength, double distance,
                                double coeff = 1.9);

ApertureMask generate_coded_mask(const MaskSpec& spec);

void save_mask(const std::string& path, const ApertureMask& mask);
ApertureMask load_mask(const std::string& path);

// Geometric image of the scene through an ideal pinhole: the scene point
// x maps to sensor coordinate z*x with intensity divided by z^2 (origin at
// pixel (0,0); points that land outside the raster are lost).
ImageGrid pinhole_project(const ImageGrid& scene, const PinholeGeometry& geom);

// Sensor-plane point spread function: mask transmission resampled onto an
// (out_h, out_w) raster of the given pixel pitch, weighted by thickness
// vignetting, blurred by the geometry/diffraction kernel, normalized so the
// raster sums to the mask's open-area fraction. The PSF is centered.
ImageGrid psf_from_mask(const ApertureMask& mask, const PinholeGeometry& geom,
                        int out_h, int out_w, double sensor_pitch,
                        const BlurCoefficients& blur = {});

double blur_width(const PinholeGeometry& geom, const BlurCoefficients& blur);

// Per-axis tunnel transmission through a plate of thickness t.
double thickness_vignetting(double a, double t, double incidence_angle);

// Full forward model: g = pinhole_project(scene) (*) psf + noise. The PSF is
// built on the scene raster; a sensor_pitch of 0 defaults to
// region_extent / raster_size so the mask shadow fills the sensor.
struct CaptureResult {
  ImageGrid capture;
  ImageGrid projected;  // noiseless pinhole projection (deconvolution target)
  ImageGrid psf;
};

CaptureResult coded_capture(const ImageGrid& scene, const ApertureMask& mask,
                            const PinholeGeometry& geom, const NoiseSpec& noise,
                            double sensor_pitch = 0.0,
                            const BlurCoefficients& blur = {});

// Circular convolution with a centered kernel raster; the forward model and
// the direct-convolution oracle both go through this convention.
ImageGrid convolve_centered(const ImageGrid& f, const ImageGrid& k);

}  // namespace lenscam
