#include "lenscam/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "lenscam/common.hpp"
#include "lenscam/kernels.hpp"

namespace lenscam {

namespace {

constexpr int kMaxval = 65535;

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  for (;;) {
    const int ch = in.get();
    if (ch == EOF) {
      if (tok.empty()) throw PackingError("truncated netpbm header");
      return tok;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    if (ch == '#' && tok.empty()) {
      std::string line;
      std::getline(in, line);
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
}

int parse_int(const std::string& tok, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw PackingError(std::string("bad netpbm ") + what + ": '" + tok + "'");
  }
}

}  // namespace

void save_image(const std::string& path, const ImageGrid& img,
                nlohmann::json meta) {
  if (img.c != 1 && img.c != 3)
    throw ShapeError("image must have 1 or 3 channels, got " +
                     std::to_string(img.c));
  if (img.h <= 0 || img.w <= 0)
    throw ShapeError("image has empty dimensions " + std::to_string(img.h) +
                     "x" + std::to_string(img.w));

  double peak = 0.0, floor = 0.0;
  for (const double v : img.data) {
    if (!std::isfinite(v))
      throw NumericFault("image contains a non-finite sample");
    peak = std::max(peak, v);
    floor = std::min(floor, v);
  }
  // offset stays 0 for nonnegative data; negative samples (noisy captures,
  // deconvolution ringing) shift the stored range instead of clamping
  const double value_offset = floor;
  const double span = peak - value_offset;
  const double value_scale = span > 0.0 ? span : 1.0;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (img.c == 1 ? "P5" : "P6") << "\n"
      << img.w << " " << img.h << "\n"
      << kMaxval << "\n";
  std::vector<unsigned char> raw(img.data.size() * 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double unit =
        std::clamp((img.data[i] - value_offset) / value_scale, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(unit * kMaxval));
    raw[2 * i] = static_cast<unsigned char>(q >> 8);  // big-endian
    raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to '" + path + "'");
  out.close();

  meta["value_scale"] = value_scale;
  meta["value_offset"] = value_offset;
  meta["width"] = img.w;
  meta["height"] = img.h;
  meta["channels"] = img.c;
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot open '" + path + ".json' for writing");
  side << meta.dump(2) << "\n";
}

LoadedImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");

  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw PackingError("unsupported netpbm magic '" + magic +
                       "' (expected P5 or P6)");

  const int w = parse_int(next_token(in), "width");
  const int h = parse_int(next_token(in), "height");
  const int maxval = parse_int(next_token(in), "maxval");
  if (w <= 0 || h <= 0)
    throw PackingError("bad netpbm dimensions " + std::to_string(w) + "x" +
                       std::to_string(h));
  if (maxval != kMaxval)
    throw PackingError("expected 16-bit samples (maxval 65535), got maxval " +
                       std::to_string(maxval));

  LoadedImage out;
  out.image = ImageGrid(h, w, channels);
  out.meta = nlohmann::json::object();

  const std::size_t n = out.image.data.size();
  std::vector<unsigned char> raw(n * 2);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw PackingError("truncated raster in '" + path + "': expected " +
                       std::to_string(raw.size()) + " bytes");

  double value_scale = 1.0, value_offset = 0.0;
  std::ifstream side(path + ".json");
  if (side) {
    try {
      out.meta = nlohmann::json::parse(side);
    } catch (const nlohmann::json::exception& e) {
      throw PackingError("bad sidecar '" + path + ".json': " + e.what());
    }
    if (out.meta.contains("value_scale"))
      value_scale = out.meta["value_scale"].get<double>();
    if (!(value_scale > 0.0) || !std::isfinite(value_scale))
      throw PackingError("bad sidecar value_scale in '" + path + ".json'");
    if (out.meta.contains("value_offset"))
      value_offset = out.meta["value_offset"].get<double>();
    if (!std::isfinite(value_offset))
      throw PackingError("bad sidecar value_offset in '" + path + ".json'");
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int q = (raw[2 * i] << 8) | raw[2 * i + 1];
    out.image.data[i] =
        q / static_cast<double>(kMaxval) * value_scale + value_offset;
  }
  return out;
}

ImageGrid resize_bilinear(const ImageGrid& img, int oh, int ow) {
  if (oh <= 0 || ow <= 0)
    throw ShapeError("resize target must be positive, got " +
                     std::to_string(oh) + "x" + std::to_string(ow));
  ImageGrid out(oh, ow, img.c);
  kernels::bilinear_resize(img.data.data(), img.h, img.w, img.c,
                           out.data.data(), oh, ow, kernels::mode());
  return out;
}

ImageGrid center_crop(const ImageGrid& img, int ch, int cw) {
  if (ch > img.h || cw > img.w)
    throw ShapeError("crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                     " exceeds image " + std::to_string(img.h) + "x" +
                     std::to_string(img.w));
  const int y0 = (img.h - ch) / 2;
  const int x0 = (img.w - cw) / 2;
  ImageGrid out(ch, cw, img.c);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int k = 0; k < img.c; ++k)
        out.at(y, x, k) = img.at(y0 + y, x0 + x, k);
  return out;
}

ImageGrid to_gray(const ImageGrid& img) {
  if (img.c == 1) return img;
  ImageGrid out(img.h, img.w, 1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                     0.114 * img.at(y, x, 2);
  return out;
}

ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
  ImageGrid out(img.h, img.w, img.c);
  if (img.c == 1) {
    kernels::gaussian_blur(img.data.data(), out.data.data(), img.h, img.w,
                           sigma, kernels::mode());
    return out;
  }
  std::vector<double> plane(static_cast<std::size_t>(img.h) * img.w);
  std::vector<double> blurred(plane.size());
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        plane[static_cast<std::size_t>(y) * img.w + x] = img.at(y, x, ch);
    kernels::gaussian_blur(plane.data(), blurred.data(), img.h, img.w, sigma,
                           kernels::mode());
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        out.at(y, x, ch) = blurred[static_cast<std::size_t>(y) * img.w + x];
  }
  return out;
}

}  // namespace lenscam
