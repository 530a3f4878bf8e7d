#include "lenscam/tensor.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace lenscam {

template class TapeT<float>;
template class TapeT<double>;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian float32");

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw IoError("cannot open '" + path + "' for writing");
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const NamedParam& p : params) {
    if (shape_numel(p.shape) != p.value.size())
      throw ShapeError("parameter '" + p.name + "' payload does not match " +
                       shape_str(p.shape));
    bin.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    manifest.push_back({{"name", p.name},
                        {"shape", p.shape},
                        {"offset_bytes", offset},
                        {"count", p.value.size()}});
    offset += p.value.size() * sizeof(float);
  }
  if (!bin) throw IoError("short write to '" + path + "'");
  bin.close();
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot open '" + path + ".json' for writing");
  side << nlohmann::json{{"format", "lenscam-checkpoint-v1"},
                         {"dtype", "f32le"},
                         {"total_bytes", offset},
                         {"tensors", manifest}}
              .dump(2)
       << "\n";
}

std::vector<NamedParam> load_checkpoint(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw IoError("cannot open manifest '" + path + ".json'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw PackingError("bad checkpoint manifest '" + path + ".json': " +
                       e.what());
  }
  if (manifest.value("dtype", "") != "f32le")
    throw PackingError("unsupported checkpoint dtype in '" + path + ".json'");

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw IoError("cannot open '" + path + "'");

  std::vector<NamedParam> params;
  for (const auto& entry : manifest["tensors"]) {
    NamedParam p;
    p.name = entry["name"].get<std::string>();
    p.shape = entry["shape"].get<Shape>();
    const auto count = entry["count"].get<std::size_t>();
    if (shape_numel(p.shape) != count)
      throw PackingError("manifest entry '" + p.name +
                         "' count disagrees with its shape");
    p.value.resize(count);
    bin.seekg(static_cast<std::streamoff>(
        entry["offset_bytes"].get<std::size_t>()));
    bin.read(reinterpret_cast<char*>(p.value.data()),
             static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(bin.gcount()) != count * sizeof(float))
      throw PackingError("checkpoint '" + path + "' truncated at tensor '" +
                         p.name + "'");
    params.push_back(std::move(p));
  }
  return params;
}

}  // namespace lenscam
