#include "lenscam/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "lenscam/common.hpp"

namespace fs = std::filesystem;

namespace lenscam {

std::vector<int> PairedDataset::split_indices(const std::string& split) const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) idx.push_back(static_cast<int>(i));
  return idx;
}

ImageGrid generate_scene(int h, int w, int channels, std::uint64_t seed) {
  if (h < 1 || w < 1 || channels < 1)
    throw DomainError("scene dimensions must be positive");
  Rng rng(seed);
  ImageGrid img(h, w, channels);

  for (int ch = 0; ch < channels; ++ch) {
    // Low-frequency background gradient.
    const double gx = rng.uniform(-0.3, 0.3);
    const double gy = rng.uniform(-0.3, 0.3);
    const double base = rng.uniform(0.2, 0.5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(y, x, ch) =
            base + gx * (double(x) / w - 0.5) + gy * (double(y) / h - 0.5);

    const int shapes = 6 + static_cast<int>(rng.below(7));
    for (int s = 0; s < shapes; ++s) {
      const double amp = rng.uniform(-0.6, 0.8);
      const int kind = static_cast<int>(rng.below(4));
      const double cy = rng.uniform(0.0, h);
      const double cx = rng.uniform(0.0, w);
      const double ry = rng.uniform(0.05, 0.3) * h;
      const double rx = rng.uniform(0.05, 0.3) * w;
      const double freq = rng.uniform(2.0, 10.0);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double v = 0.0;
          switch (kind) {
            case 0:  // rectangle
              v = (std::abs(y - cy) < ry && std::abs(x - cx) < rx) ? 1.0 : 0.0;
              break;
            case 1: {  // ellipse
              const double dy = (y - cy) / ry, dx = (x - cx) / rx;
              v = (dy * dy + dx * dx < 1.0) ? 1.0 : 0.0;
              break;
            }
            case 2: {  // soft blob
              const double dy = (y - cy) / ry, dx = (x - cx) / rx;
              v = std::exp(-(dy * dy + dx * dx));
              break;
            }
            default:  // stripes, windowed by a blob
              const double dy = (y - cy) / (2 * ry), dx = (x - cx) / (2 * rx);
              v = 0.5 * (1.0 + std::sin(freq * kPi * (x + y) / (w + h) * 2.0 +
                                        phase)) *
                  std::exp(-(dy * dy + dx * dx));
          }
          img.at(y, x, ch) += amp * v;
        }
      }
    }
  }
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

ImageGrid preprocess(const ImageGrid& image, int target_size) {
  if (target_size < 1) throw DomainError("target size must be positive");
  const int side = std::min(image.h, image.w);
  ImageGrid square = center_crop(image, side, side);
  if (side == target_size) return square;
  return resize_bilinear(square, target_size, target_size);
}

PairedDataset synth_capture_dataset(const std::vector<ImageGrid>& references,
                                    const ApertureMask& mask,
                                    const PinholeGeometry& geom,
                                    const NoiseSpec& noise, std::uint64_t seed,
                                    double eval_fraction,
                                    const ImageGrid* psf_override) {
  if (references.empty()) throw DomainError("no reference images supplied");
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw DomainError("eval_fraction must lie in [0,1)");

  PairedDataset ds;
  const ImageGrid& ref0 = references.front();
  if (psf_override) {
    ds.psf = *psf_override;
  } else {
    const double pitch = mask.pitch_y * mask.transmission.h / ref0.h;
    ds.psf = psf_from_mask(mask, geom, ref0.h, ref0.w, pitch);
  }

  // Seeded split assignment.
  const int n = static_cast<int>(references.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(seed);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[split_rng.below(static_cast<std::uint64_t>(i) + 1)]);
  const int n_eval = static_cast<int>(std::lround(eval_fraction * n));
  std::vector<bool> is_eval(n, false);
  for (int i = 0; i < n_eval; ++i) is_eval[order[i]] = true;

  for (int i = 0; i < n; ++i) {
    const ImageGrid& ref = references[i];
    if (ref.h != ref0.h || ref.w != ref0.w || ref.c != ref0.c)
      throw ShapeError("reference " + std::to_string(i) +
                       " differs in shape from the first reference");
    DataRecord rec;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", i);
    rec.id = buf;
    rec.reference = ref;

    ImageGrid projected = pinhole_project(ref, geom);
    rec.capture = convolve_centered(projected, ds.psf);
    if (noise.gaussian_sigma > 0.0 || noise.poisson) {
      // Independent, reproducible noise stream per record.
      const std::uint64_t h = fnv1a(&i, sizeof i) ^ noise.seed ^ (seed << 1);
      Rng rng(h);
      for (double& v : rec.capture.data) {
        if (noise.poisson) {
          const double mean = std::max(v, 0.0) * noise.photons_per_unit;
          v = static_cast<double>(rng.poisson(mean)) / noise.photons_per_unit;
        }
        if (noise.gaussian_sigma > 0.0) v += noise.gaussian_sigma * rng.gauss();
      }
    }
    rec.split = is_eval[i] ? "eval" : "train";
    rec.hash = fnv1a(rec.capture.data.data(),
                     rec.capture.data.size() * sizeof(double));
    ds.records.push_back(std::move(rec));
  }

  ds.provenance = {{"mask_seed", mask.seed},
                   {"mask_thickness", mask.thickness},
                   {"wavelength", geom.wavelength},
                   {"mask_sensor_distance", geom.mask_sensor_distance},
                   {"scene_distance", geom.scene_distance},
                   {"pinhole_size", geom.pinhole_size},
                   {"noise_sigma", noise.gaussian_sigma},
                   {"noise_poisson", noise.poisson},
                   {"seed", seed},
                   {"eval_fraction", eval_fraction},
                   {"psf_override", psf_override != nullptr}};
  return ds;
}

void save_dataset(const std::string& dir, const PairedDataset& ds) {
  fs::create_directories(fs::path(dir) / "refs");
  fs::create_directories(fs::path(dir) / "captures");
  save_image((fs::path(dir) / "psf.pgm").string(), ds.psf);

  nlohmann::json manifest;
  manifest["provenance"] = ds.provenance;
  nlohmann::json records = nlohmann::json::array();
  for (const DataRecord& rec : ds.records) {
    const std::string ref_path = "refs/" + rec.id + ".pgm";
    const std::string cap_path = "captures/" + rec.id + ".pgm";
    save_image((fs::path(dir) / ref_path).string(), rec.reference);
    save_image((fs::path(dir) / cap_path).string(), rec.capture);
    records.push_back({{"id", rec.id},
                       {"ref", ref_path},
                       {"capture", cap_path},
                       {"split", rec.split},
                       {"hash", rec.hash}});
  }
  manifest["records"] = records;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
}

PairedDataset load_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("cannot open '" + dir + "/manifest.json'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw PackingError("bad dataset manifest in '" + dir + "': " + e.what());
  }
  PairedDataset ds;
  ds.provenance = manifest.value("provenance", nlohmann::json::object());
  ds.psf = load_image((fs::path(dir) / "psf.pgm").string()).image;
  for (const auto& entry : manifest["records"]) {
    DataRecord rec;
    rec.id = entry["id"].get<std::string>();
    rec.reference =
        load_image((fs::path(dir) / entry["ref"].get<std::string>()).string())
            .image;
    rec.capture =
        load_image(
            (fs::path(dir) / entry["capture"].get<std::string>()).string())
            .image;
    rec.split = entry["split"].get<std::string>();
    rec.hash = entry.value("hash", std::uint64_t{0});
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::vector<std::string> sample_corpus(const std::string& dir, int count,
                                       std::uint64_t seed) {
  if (count < 1) throw DomainError("sample count must be positive");
  if (!fs::is_directory(dir))
    throw IoError("corpus directory '" + dir + "' not found");
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (static_cast<int>(files.size()) < count)
    throw DomainError("corpus '" + dir + "' has only " +
                      std::to_string(files.size()) + " images, need " +
                      std::to_string(count));
  Rng rng(seed);
  for (std::size_t i = files.size() - 1; i > 0; --i)
    std::swap(files[i], files[rng.below(i + 1)]);
  files.resize(count);
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace lenscam
