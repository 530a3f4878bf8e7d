#include "lenscam/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lenscam/cost.hpp"
#include "lenscam/data.hpp"
#include "lenscam/deconv.hpp"
#include "lenscam/image.hpp"
#include "lenscam/metrics.hpp"
#include "lenscam/nn.hpp"
#include "lenscam/optics.hpp"
#include "lenscam/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lenscam {

namespace {

// ---------------------------------------------------------------------------
// config plumbing

json load_json_file(const std::string& path) {
  // an argument that starts with '{' is inline JSON, not a filename
  const auto first = path.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && path[first] == '{') {
    try {
      return json::parse(path);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: inline JSON is malformed: ") +
                        e.what());
    }
  }
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("output: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::string default_out_root() {
  if (const char* env = std::getenv("LENSCAM_OUT"); env && *env) return env;
  return "lenscam_out";
}

// Accepts either a fresh config document or a previous run.json (recognized
// by its subcommand/config envelope) and returns the inner config.
json unwrap_config(const json& doc, const std::string& subcommand) {
  if (doc.contains("subcommand") && doc.contains("config")) {
    const std::string recorded = doc["subcommand"].get<std::string>();
    if (recorded != subcommand)
      throw ConfigError("config: run.json records subcommand '" + recorded +
                        "', not '" + subcommand + "'");
    return doc["config"];
  }
  return doc;
}

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config_path,
                  "JSON config (or a previous run.json)");
  cmd->add_option("--out", common.out, "output directory");
  cmd->add_option("--seed", common.seed, "seed override")
      ->each([&common](const std::string&) { common.seed_given = true; });
}

// Resolves the output directory, loads/unwraps the config, and applies the
// seed override. `seed_key` names the config field the --seed flag shadows.
json resolve(const CommonArgs& common, const std::string& subcommand,
             fs::path& out_dir, const std::string& seed_key = "seed") {
  out_dir = common.out.empty()
                ? fs::path(default_out_root()) / subcommand
                : fs::path(common.out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("output: cannot create '" + out_dir.string() + "'");
  json cfg = json::object();
  if (!common.config_path.empty())
    cfg = unwrap_config(load_json_file(common.config_path), subcommand);
  if (common.seed_given && !seed_key.empty()) cfg[seed_key] = common.seed;
  return cfg;
}

void write_run_record(const fs::path& out_dir, const std::string& subcommand,
                      const json& resolved) {
  json run;
  run["subcommand"] = subcommand;
  run["config"] = resolved;
  write_json_file((out_dir / "run.json").string(), run);
}

// ---------------------------------------------------------------------------
// struct <-> json helpers (defaults come from the structs themselves)

MaskSpec mask_spec_from_json(const json& j) {
  MaskSpec s;
  s.region_h = j.value("region_h", s.region_h);
  s.region_w = j.value("region_w", s.region_w);
  s.pinhole_count = j.value("pinhole_count", s.pinhole_count);
  s.pinhole_size = j.value("pinhole_size", s.pinhole_size);
  s.grid_cells = j.value("grid_cells", s.grid_cells);
  s.thickness = j.value("thickness", s.thickness);
  s.seed = j.value("seed", s.seed);
  return s;
}

json mask_spec_to_json(const MaskSpec& s) {
  return {{"region_h", s.region_h},       {"region_w", s.region_w},
          {"pinhole_count", s.pinhole_count}, {"pinhole_size", s.pinhole_size},
          {"grid_cells", s.grid_cells},   {"thickness", s.thickness},
          {"seed", s.seed}};
}

PinholeGeometry geometry_from_json(const json& j) {
  PinholeGeometry g;
  g.wavelength = j.value("wavelength", g.wavelength);
  g.mask_sensor_distance = j.value("mask_sensor_distance", g.mask_sensor_distance);
  g.scene_distance = j.value("scene_distance", g.scene_distance);
  g.pinhole_size = j.value("pinhole_size", g.pinhole_size);
  return g;
}

json geometry_to_json(const PinholeGeometry& g) {
  return {{"wavelength", g.wavelength},
          {"mask_sensor_distance", g.mask_sensor_distance},
          {"scene_distance", g.scene_distance},
          {"pinhole_size", g.pinhole_size}};
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  n.gaussian_sigma = j.value("gaussian_sigma", n.gaussian_sigma);
  n.poisson = j.value("poisson", n.poisson);
  n.photons_per_unit = j.value("photons_per_unit", n.photons_per_unit);
  n.seed = j.value("seed", n.seed);
  return n;
}

json noise_to_json(const NoiseSpec& n) {
  return {{"gaussian_sigma", n.gaussian_sigma},
          {"poisson", n.poisson},
          {"photons_per_unit", n.photons_per_unit},
          {"seed", n.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.delta = j.value("delta", c.delta);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"delta", c.delta}};
}

ArchInput arch_from_json(const json& j) {
  ArchInput a;
  a.kind = block_kind_from_name(j.value("model", block_kind_name(a.kind)));
  a.H = j.value("H", a.H);
  a.W = j.value("W", a.W);
  a.C = j.value("C", a.C);
  a.P = j.value("patch", a.P);
  a.m = j.value("mlp_ratio", a.m);
  a.embed_dims = j.value("embed_dims", a.embed_dims);
  const std::string prec = j.value("precision", std::string("fp32"));
  if (prec == "fp32")
    a.precision = 4;
  else if (prec == "fp16")
    a.precision = 2;
  else
    throw ConfigError("precision: unknown value '" + prec + "'");
  a.device_tflops = j.value("device_tflops", a.device_tflops);
  return a;
}

json arch_to_json(const ArchInput& a) {
  return {{"model", block_kind_name(a.kind)},
          {"H", a.H},
          {"W", a.W},
          {"C", a.C},
          {"patch", a.P},
          {"mlp_ratio", a.m},
          {"embed_dims", a.embed_dims},
          {"precision", a.precision == 4 ? "fp32" : "fp16"},
          {"device_tflops", a.device_tflops}};
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_mask(const CommonArgs& common) {
  fs::path out;
  json cfg = resolve(common, "mask", out);
  MaskSpec spec = mask_spec_from_json(cfg.value("mask", json::object()));
  if (common.seed_given) spec.seed = common.seed;
  spec.validate();

  const ApertureMask mask = generate_coded_mask(spec);
  const std::string path = (out / "mask.pgm").string();
  save_mask(path, mask);

  json resolved;
  resolved["mask"] = mask_spec_to_json(spec);
  write_run_record(out, "mask", resolved);
  std::cout << "mask: " << path << " cells=" << mask.transmission.h << "x"
            << mask.transmission.w
            << " open_fraction=" << mask.open_fraction() << "\n";
  return 0;
}

int cmd_capture(const CommonArgs& common) {
  fs::path out;
  json cfg = resolve(common, "capture", out);
  const int count = cfg.value("count", 8);
  const int size = cfg.value("size", 64);
  const int channels = cfg.value("channels", 1);
  const double eval_fraction = cfg.value("eval_fraction", 0.2);
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});
  const std::string corpus_dir = cfg.value("corpus_dir", std::string());
  if (count < 1) throw ConfigError("count: must be >= 1");
  if (size < 2) throw ConfigError("size: must be >= 2");
  if (channels != 1 && channels != 3)
    throw ConfigError("channels: must be 1 or 3");

  MaskSpec mask_spec = mask_spec_from_json(cfg.value("mask", json::object()));
  mask_spec.validate();
  const PinholeGeometry geom =
      geometry_from_json(cfg.value("geometry", json::object()));
  geom.validate();
  const NoiseSpec noise = noise_from_json(cfg.value("noise", json::object()));

  std::vector<ImageGrid> refs;
  refs.reserve(count);
  if (!corpus_dir.empty()) {
    for (const std::string& file : sample_corpus(corpus_dir, count, seed)) {
      ImageGrid img = load_image(file).image;
      if (channels == 1 && img.c == 3) img = to_gray(img);
      if (img.c != channels)
        throw ConfigError("corpus_dir: '" + file + "' has " +
                          std::to_string(img.c) + " channels, want " +
                          std::to_string(channels));
      refs.push_back(preprocess(img, size));
    }
  } else {
    for (int i = 0; i < count; ++i)
      refs.push_back(generate_scene(size, size, channels,
                                    seed ^ fnv1a(&i, sizeof i)));
  }

  const ApertureMask mask = generate_coded_mask(mask_spec);
  PairedDataset ds =
      synth_capture_dataset(refs, mask, geom, noise, seed, eval_fraction);
  const std::string ds_dir = (out / "dataset").string();
  save_dataset(ds_dir, ds);

  json resolved;
  resolved["count"] = count;
  resolved["size"] = size;
  resolved["channels"] = channels;
  resolved["eval_fraction"] = eval_fraction;
  resolved["seed"] = seed;
  if (!corpus_dir.empty()) resolved["corpus_dir"] = corpus_dir;
  resolved["mask"] = mask_spec_to_json(mask_spec);
  resolved["geometry"] = geometry_to_json(geom);
  resolved["noise"] = noise_to_json(noise);
  write_run_record(out, "capture", resolved);
  std::cout << "capture: " << ds_dir << " records=" << ds.records.size()
            << " eval=" << ds.split_indices("eval").size() << "\n";
  return 0;
}

int cmd_deconv(const CommonArgs& common) {
  fs::path out;
  json cfg = resolve(common, "deconv", out, "");
  if (!cfg.contains("capture")) throw ConfigError("capture: path is required");
  if (!cfg.contains("psf")) throw ConfigError("psf: path is required");
  const std::string capture_path = cfg["capture"].get<std::string>();
  const std::string psf_path = cfg["psf"].get<std::string>();
  const double eps_rel = cfg.value("eps_rel", 1e-3);

  const ImageGrid capture = load_image(capture_path).image;
  const ImageGrid psf = load_image(psf_path).image;
  const FrequencyFilter filter = build_inverse_filter(psf, eps_rel);
  const ImageGrid restored = deconvolve(capture, filter);

  const std::string path =
      (out / (restored.c == 3 ? "restored.ppm" : "restored.pgm")).string();
  json meta;
  meta["source_capture"] = capture_path;
  meta["source_psf"] = psf_path;
  meta["eps_rel"] = eps_rel;
  save_image(path, restored, meta);

  json resolved;
  resolved["capture"] = capture_path;
  resolved["psf"] = psf_path;
  resolved["eps_rel"] = eps_rel;
  write_run_record(out, "deconv", resolved);
  std::cout << "deconv: " << path
            << " filter_max=" << filter.max_magnitude() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& common) {
  fs::path out;
  json cfg = resolve(common, "train", out);
  if (!cfg.contains("dataset")) throw ConfigError("dataset: path is required");
  const std::string ds_dir = cfg["dataset"].get<std::string>();
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});

  ModelSpec spec = ModelSpec::from_json(cfg.value("model", json::object()));
  TrainConfig tc = train_config_from_json(cfg.value("train", json::object()));
  tc.seed = cfg.value("train", json::object()).value("seed", seed);
  spec.validate();
  tc.validate();

  const PairedDataset ds = load_dataset(ds_dir);
  Model model(spec, seed);
  const TrainResult result = train(model, ds, tc, out.string());
  model.save((out / "model.ckpt").string());

  json resolved;
  resolved["dataset"] = ds_dir;
  resolved["seed"] = seed;
  resolved["model"] = spec.to_json();
  resolved["train"] = train_config_to_json(tc);
  write_run_record(out, "train", resolved);
  const EpochStats& last = result.history.back();
  std::cout << "train: " << (out / "model.ckpt").string()
            << " epochs=" << result.history.size()
            << " final_loss=" << last.train_loss
            << " eval_psnr=" << last.eval_psnr << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& common) {
  fs::path out;
  json cfg = resolve(common, "eval", out, "");
  if (!cfg.contains("checkpoint"))
    throw ConfigError("checkpoint: path is required");
  if (!cfg.contains("dataset")) throw ConfigError("dataset: path is required");
  const std::string ckpt = cfg["checkpoint"].get<std::string>();
  const std::string ds_dir = cfg["dataset"].get<std::string>();
  const std::string split = cfg.value("split", std::string("eval"));

  const Model model = Model::load(ckpt);
  const PairedDataset ds = load_dataset(ds_dir);
  const QualityReport report = evaluate(model, ds, split);

  std::ofstream csv(out / "report.csv");
  csv << report.to_csv();
  write_json_file((out / "report.json").string(), report.to_json());

  json resolved;
  resolved["checkpoint"] = ckpt;
  resolved["dataset"] = ds_dir;
  resolved["split"] = split;
  write_run_record(out, "eval", resolved);
  std::cout << "eval: " << (out / "report.csv").string()
            << " mean_psnr=" << report.mean_psnr()
            << " mean_ssim=" << report.mean_ssim() << "\n";
  return 0;
}

struct CostArgs {
  std::string arch_path;
  std::string table_path;
  std::string image;
  std::string precision;
  double tflops = 0.0;
};

int cmd_cost(const CommonArgs& common, const CostArgs& extra) {
  fs::path out;
  json cfg = resolve(common, "cost", out, "");
  if (!extra.arch_path.empty()) cfg["arch"] = load_json_file(extra.arch_path);
  if (!extra.table_path.empty()) cfg["table"] = extra.table_path;
  if (!extra.image.empty()) {
    const auto x = extra.image.find('x');
    if (x == std::string::npos)
      throw ConfigError("image: expected HxW, got '" + extra.image + "'");
    cfg["arch"]["H"] = std::stoi(extra.image.substr(0, x));
    cfg["arch"]["W"] = std::stoi(extra.image.substr(x + 1));
  }
  if (!extra.precision.empty()) cfg["arch"]["precision"] = extra.precision;
  if (extra.tflops > 0.0) cfg["arch"]["device_tflops"] = extra.tflops * 1e12;

  json resolved;
  if (cfg.contains("table")) {
    const std::string table_path = cfg["table"].get<std::string>();
    const json report = table3_report(load_json_file(table_path));
    write_json_file((out / "table3_report.json").string(), report);
    std::ofstream csv(out / "table3_report.csv");
    csv << table3_csv(report);
    std::cout << table3_text(report);
    resolved["table"] = table_path;
  } else if (cfg.contains("arch")) {
    const ArchInput arch = arch_from_json(cfg["arch"]);
    const CostEstimate est = estimate(arch);
    json j;
    j["mapping"] = stacked_mapping_note();
    j["arch"] = arch_to_json(arch);
    j["params"] = est.params;
    j["mults"] = est.mults;
    j["est_seconds"] = est.est_seconds;
    j["est_bytes"] = est.est_bytes;
    for (const StageCost& s : est.stages)
      j["stages"].push_back(
          {{"label", s.label}, {"params", s.params}, {"mults", s.mults}});
    write_json_file((out / "cost.json").string(), j);
    std::ofstream csv(out / "cost.csv");
    csv << "stage,params,mults\n";
    for (const StageCost& s : est.stages)
      csv << s.label << "," << s.params << "," << s.mults << "\n";
    csv << "total," << est.params << "," << est.mults << "\n";
    std::cout << "cost: params=" << est.params << " mults=" << est.mults
              << " seconds=" << est.est_seconds << " bytes=" << est.est_bytes
              << "\n";
    resolved["arch"] = arch_to_json(arch);
  } else {
    throw ConfigError("cost: provide --arch/--table or a config with one");
  }
  write_run_record(out, "cost", resolved);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"coded-aperture lensless imaging laboratory"};
  app.require_subcommand(1);

  CommonArgs mask_args, capture_args, deconv_args, train_args, eval_args,
      cost_args;
  CostArgs cost_extra;

  add_common(app.add_subcommand("mask", "generate a coded aperture mask"),
             mask_args);
  add_common(app.add_subcommand("capture", "synthesize a capture dataset"),
             capture_args);
  add_common(app.add_subcommand("deconv", "ridge-deconvolve one capture"),
             deconv_args);
  add_common(app.add_subcommand("train", "train a reconstruction model"),
             train_args);
  add_common(app.add_subcommand("eval", "score a checkpoint on a dataset"),
             eval_args);
  CLI::App* cost = app.add_subcommand("cost", "closed-form cost model");
  add_common(cost, cost_args);
  cost->add_option("--arch", cost_extra.arch_path, "architecture JSON");
  cost->add_option("--table", cost_extra.table_path, "comparison table JSON");
  cost->add_option("--image", cost_extra.image, "image size HxW");
  cost->add_option("--precision", cost_extra.precision, "fp32 | fp16");
  cost->add_option("--tflops", cost_extra.tflops, "device throughput, TFLOPs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand("mask")) return cmd_mask(mask_args);
    if (app.got_subcommand("capture")) return cmd_capture(capture_args);
    if (app.got_subcommand("deconv")) return cmd_deconv(deconv_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("cost")) return cmd_cost(cost_args, cost_extra);
    std::cerr << "error: no subcommand given\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const PackingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SingularityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace lenscam
