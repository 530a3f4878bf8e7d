#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenscam/image.hpp"
#include "lenscam/optics.hpp"

namespace lenscam {

struct DataRecord {
  std::string id;
  ImageGrid reference;
  ImageGrid capture;
  std::string split;       // "train" | "eval"
  std::uint64_t hash = 0;  // identity of the capture payload
};

struct PairedDataset {
  std::vector<DataRecord> records;
  ImageGrid psf;  // forward-model PSF used for synthesis
  nlohmann::json provenance;

  std::vector<int> split_indices(const std::string& split) const;
};

// Procedural reference scene: layered gradients, rectangles, blobs, and
// stripes, deterministic per seed, values in [0,1].
ImageGrid generate_scene(int h, int w, int channels, std::uint64_t seed);

// Center-crop to the largest centered square, then bilinear-resize.
ImageGrid preprocess(const ImageGrid& image, int target_size);

// Runs the forward model over every reference: capture_i =
// coded_capture(reference_i) with a per-record noise stream derived from
// `seed`. `eval_fraction` of records (seeded shuffle) lands in the eval
// split. A non-null psf_override skips the mask-derived PSF (used by tests
// and degenerate setups).
PairedDataset synth_capture_dataset(const std::vector<ImageGrid>& references,
                                    const ApertureMask& mask,
                                    const PinholeGeometry& geom,
                                    const NoiseSpec& noise, std::uint64_t seed,
                                    double eval_fraction = 0.2,
                                    const ImageGrid* psf_override = nullptr);

// Directory layout: refs/<id>.pgm, captures/<id>.pgm, psf.pgm,
// manifest.json (pairing, split, provenance, hashes).
void save_dataset(const std::string& dir, const PairedDataset& ds);
PairedDataset load_dataset(const std::string& dir);

// Seeded sample (without replacement) of image files from a directory tree,
// mirroring a fixed-size selection protocol over an arbitrary corpus.
std::vector<std::string> sample_corpus(const std::string& dir, int count,
                                       std::uint64_t seed);

}  // namespace lenscam
