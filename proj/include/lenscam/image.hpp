#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace lenscam {

// Planar-interleaved raster of physical intensity values. Channels is 1
// (PGM on disk) or 3 (PPM on disk).
struct ImageGrid {
  int h = 0;
  int w = 0;
  int c = 1;
  std::vector<double> data;  // (h, w, c) row-major interleaved

  ImageGrid() = default;
  ImageGrid(int h_, int w_, int c_ = 1)
      : h(h_), w(w_), c(c_),
        data(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}

  double& at(int y, int x, int ch = 0) {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  double at(int y, int x, int ch = 0) const {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::size_t size() const { return data.size(); }
};

// Samples on disk are 16-bit big-endian Netpbm rasters. Physical values are
// recovered via the sidecar's value_scale: value = raw / 65535 * value_scale.
// The sidecar lives at <path>.json and carries value_scale plus caller
// metadata (geometry, seed, ...). Loading a file without a sidecar assumes
// value_scale = 1.
struct LoadedImage {
  ImageGrid image;
  nlohmann::json meta;  // sidecar contents; empty object if none was found
};

void save_image(const std::string& path, const ImageGrid& img,
                nlohmann::json meta = nlohmann::json::object());
LoadedImage load_image(const std::string& path);

ImageGrid resize_bilinear(const ImageGrid& img, int oh, int ow);
ImageGrid center_crop(const ImageGrid& img, int ch, int cw);
ImageGrid to_gray(const ImageGrid& img);  // Rec. 601 luma for 3-channel input
ImageGrid gaussian_blur(const ImageGrid& img, double sigma);

}  // namespace lenscam
