#include "lenscam/nn.hpp"

#include <cmath>
#include <fstream>

namespace lenscam {

std::string block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::gmlp: return "gmlp";
    case BlockKind::vit_sa: return "vit_sa";
    case BlockKind::vit_aa: return "vit_aa";
  }
  throw ConfigError("unknown block kind");
}

BlockKind block_kind_from_name(const std::string& name) {
  if (name == "gmlp") return BlockKind::gmlp;
  if (name == "vit_sa") return BlockKind::vit_sa;
  if (name == "vit_aa") return BlockKind::vit_aa;
  throw ConfigError("block_kind: unknown value '" + name +
                    "' (expected gmlp, vit_sa, or vit_aa)");
}

namespace {

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::identity;
  if (name == "gelu") return Act::gelu;
  throw ConfigError("activation: unknown value '" + name + "'");
}

std::string act_name(Act a) { return a == Act::gelu ? "gelu" : "identity"; }

}  // namespace

void ModelSpec::validate() const {
  if (embed_dims.empty()) throw ConfigError("embed_dims: must be non-empty");
  for (const int e : embed_dims)
    if (e < 1) throw ConfigError("embed_dims: entries must be positive");
  if (patch < 1) throw ConfigError("patch: must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio: must be >= 1");
  if (in_h < 1 || in_w < 1 || in_c < 1 || out_h < 1 || out_w < 1 || out_c < 1)
    throw ConfigError("image sizes: must be positive");
  if (in_h % patch || in_w % patch)
    throw ConfigError("patch: " + std::to_string(patch) +
                      " does not divide input " + std::to_string(in_h) + "x" +
                      std::to_string(in_w));
  int gh = in_h / patch, gw = in_w / patch;
  for (std::size_t s = 1; s < embed_dims.size(); ++s) {
    if (gh % 2 || gw % 2)
      throw ConfigError("embed_dims: stage " + std::to_string(s) +
                        " cannot halve token grid " + std::to_string(gh) + "x" +
                        std::to_string(gw));
    gh /= 2;
    gw /= 2;
  }
  if (gh < 1 || gw < 1) throw ConfigError("token grid vanished");
}

nlohmann::json ModelSpec::to_json() const {
  return {{"block_kind", block_kind_name(block_kind)},
          {"embed_dims", embed_dims},
          {"patch", patch},
          {"mlp_ratio", mlp_ratio},
          {"in_h", in_h},
          {"in_w", in_w},
          {"in_c", in_c},
          {"out_h", out_h},
          {"out_w", out_w},
          {"out_c", out_c},
          {"residual", residual},
          {"spatial_gate", spatial_gate},
          {"axial_parallel_sum", axial_parallel_sum},
          {"act_f", act_name(act_f)},
          {"act_h", act_name(act_h)}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.block_kind = block_kind_from_name(j.value("block_kind", "gmlp"));
    s.embed_dims = j.value("embed_dims", std::vector<int>{128});
    s.patch = j.value("patch", 4);
    s.mlp_ratio = j.value("mlp_ratio", 6);
    s.in_h = j.value("in_h", 64);
    s.in_w = j.value("in_w", 64);
    s.in_c = j.value("in_c", 1);
    s.out_h = j.value("out_h", s.in_h);
    s.out_w = j.value("out_w", s.in_w);
    s.out_c = j.value("out_c", s.in_c);
    s.residual = j.value("residual", false);
    s.spatial_gate = j.value("spatial_gate", false);
    s.axial_parallel_sum = j.value("axial_parallel_sum", false);
    s.act_f = act_from_name(j.value("act_f", "gelu"));
    s.act_h = act_from_name(j.value("act_h", "identity"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

std::vector<float> uniform_init(Rng& rng, std::size_t n, double bound) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  return v;
}

}  // namespace

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);

  auto push = [&](const std::string& name, Shape shape,
                  std::vector<float> value) {
    params_.push_back({name, std::move(shape), std::move(value)});
  };
  auto weight = [&](const std::string& name, Shape shape, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    push(name, shape, uniform_init(rng, shape_numel(shape), bound));
  };

  int gh = spec_.in_h, gw = spec_.in_w;
  int cin = spec_.in_c;
  for (std::size_t s = 0; s < spec_.embed_dims.size(); ++s) {
    const std::string pre = "stage" + std::to_string(s) + ".";
    const int P = s == 0 ? spec_.patch : 2;
    const int E = spec_.embed_dims[s];
    const int K = 2 * P - 1;
    weight(pre + "embed.kernel", {K, K, cin, E}, K * K * cin);
    push(pre + "embed.bias", {E}, std::vector<float>(E, 0.0f));
    gh /= P;
    gw /= P;
    push(pre + "norm.gamma", {E}, std::vector<float>(E, 1.0f));
    push(pre + "norm.beta", {E}, std::vector<float>(E, 0.0f));
    switch (spec_.block_kind) {
      case BlockKind::gmlp: {
        const int h = spec_.mlp_ratio * E;
        const int n = gh * gw;
        weight(pre + "gmlp.w", {E, h}, E);
        if (spec_.spatial_gate)
          weight(pre + "gmlp.u", {n, n}, n);
        else
          weight(pre + "gmlp.u", {h, h}, h);
        // Gate bias starts at one so the gate opens near-neutral.
        push(pre + "gmlp.b", {h}, std::vector<float>(h, 1.0f));
        weight(pre + "gmlp.v", {h, E}, h);
        break;
      }
      case BlockKind::vit_sa:
        for (const char* nm : {"attn.q", "attn.k", "attn.v"})
          weight(pre + nm, {E, E}, E);
        break;
      case BlockKind::vit_aa:
        for (const char* nm :
             {"attn.hq", "attn.hk", "attn.hv", "attn.wq", "attn.wk", "attn.wv"})
          weight(pre + nm, {E, E}, E);
        break;
    }
    cin = E;
  }

  int ch = spec_.embed_dims.back();
  for (int i = 0; i < 4; ++i) {
    const std::string pre = "decoder.conv" + std::to_string(i) + ".";
    const int cout = i == 3 ? spec_.out_c : std::max(1, ch / 2);
    weight(pre + "kernel", {3, 3, ch, cout}, 3 * 3 * ch);
    push(pre + "bias", {cout}, std::vector<float>(cout, 0.0f));
    ch = cout;
  }
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const NamedParam& p : params_) n += p.value.size();
  return n;
}

std::size_t Model::block_param_count() const {
  std::size_t n = 0;
  for (const NamedParam& p : params_)
    if (p.name.find(".gmlp.") != std::string::npos ||
        p.name.find(".attn.") != std::string::npos)
      n += p.value.size();
  return n;
}

int Model::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  throw ConfigError("model has no parameter named '" + name + "'");
}

void Model::save(const std::string& path) const {
  save_checkpoint(path, params_);
  // Fold the architecture into the manifest so a checkpoint is
  // self-describing.
  std::ifstream in(path + ".json");
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();
  manifest["model_spec"] = spec_.to_json();
  std::ofstream out(path + ".json");
  if (!out) throw IoError("cannot rewrite manifest '" + path + ".json'");
  out << manifest.dump(2) << "\n";
}

Model Model::load(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw IoError("cannot open manifest '" + path + ".json'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw PackingError("bad manifest '" + path + ".json': " + e.what());
  }
  if (!manifest.contains("model_spec"))
    throw PackingError("checkpoint '" + path +
                       "' carries no model_spec; cannot rebuild the model");
  Model m(ModelSpec::from_json(manifest["model_spec"]), 0);
  auto loaded = load_checkpoint(path);
  for (NamedParam& p : m.params_) {
    bool found = false;
    for (NamedParam& l : loaded)
      if (l.name == p.name) {
        if (l.shape != p.shape)
          throw PackingError("checkpoint tensor '" + p.name + "' has shape " +
                             shape_str(l.shape) + ", model expects " +
                             shape_str(p.shape));
        p.value = std::move(l.value);
        found = true;
        break;
      }
    if (!found)
      throw PackingError("checkpoint '" + path + "' lacks tensor '" + p.name +
                         "'");
  }
  return m;
}

std::uint64_t measured_forward_mults(const ModelSpec& spec) {
  Model m(spec, 1);
  Tape32 tape;
  auto x = tape.input({spec.in_h, spec.in_w, spec.in_c},
                      std::vector<float>(
                          static_cast<std::size_t>(spec.in_h) * spec.in_w *
                              spec.in_c,
                          0.5f));
  tape.reset_mult_count();
  m.forward(tape, x);
  return tape.mult_count();
}

}  // namespace lenscam
