#include "lenscam/cost.hpp"

#include <cmath>
#include <sstream>

namespace lenscam {

namespace {

using u64 = std::uint64_t;

u64 mul_checked(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_mul_overflow(a, b, &r))
    throw NumericFault("multiplication count overflows 64 bits");
  return r;
}

u64 add_checked(u64 a, u64 b) {
  u64 r = 0;
  if (__builtin_add_overflow(a, b, &r))
    throw NumericFault("count overflows 64 bits");
  return r;
}

struct StageDims {
  u64 H, W, C, L, P, m;
  std::string label;
};

// Literal per-block closed forms.
u64 stage_params(BlockKind kind, const StageDims& s) {
  const u64 CP2 = s.C * s.P * s.P;
  switch (kind) {
    case BlockKind::vit_sa:
      // 2 CP^2 * CP^2 + CP^2 * L
      return add_checked(mul_checked(2 * CP2, CP2), mul_checked(CP2, s.L));
    case BlockKind::vit_aa: {
      // (H^2 + W^2)(CP)^2 + 2(H + W) CP L
      const u64 cp = s.C * s.P;
      return add_checked(mul_checked(s.H * s.H + s.W * s.W, cp * cp),
                         mul_checked(2 * (s.H + s.W), cp * s.L));
    }
    case BlockKind::gmlp: {
      // m CP^2 * CP^2 + m CP^2 (m CP^2 + 1) + m CP^2 * L
      const u64 h = s.m * CP2;
      return add_checked(
          add_checked(mul_checked(h, CP2), mul_checked(h, h + 1)),
          mul_checked(h, s.L));
    }
  }
  throw ConfigError("unknown block kind");
}

u64 stage_mults(BlockKind kind, const StageDims& s) {
  const u64 HW = mul_checked(s.H, s.W);
  switch (kind) {
    case BlockKind::vit_sa:
      // 2 HW C^2 + 2 (HW)^2 C L
      return add_checked(
          mul_checked(2 * HW, s.C * s.C),
          mul_checked(mul_checked(2, mul_checked(HW, HW)), s.C * s.L));
    case BlockKind::vit_aa:
      // 2 (H + W) C^2 + 2 (H^2 + W^2) C L
      return add_checked(
          mul_checked(2 * (s.H + s.W), s.C * s.C),
          mul_checked(2 * (s.H * s.H + s.W * s.W), s.C * s.L));
    case BlockKind::gmlp: {
      // m HW C * CP^2 + m HW C (2 m CP^2 + 1) + m HW C * L
      const u64 CP2 = s.C * s.P * s.P;
      const u64 base = mul_checked(mul_checked(s.m, HW), s.C);
      return add_checked(
          add_checked(mul_checked(base, CP2),
                      mul_checked(base, 2 * s.m * CP2 + 1)),
          mul_checked(base, s.L));
    }
  }
  throw ConfigError("unknown block kind");
}

std::vector<StageDims> stage_plan(const ArchInput& a) {
  std::vector<StageDims> plan;
  StageDims first{u64(a.H), u64(a.W), u64(a.C), u64(a.embed_dims[0]), u64(a.P),
                  u64(a.m), "stage1"};
  plan.push_back(first);
  const u64 gh = u64(a.H) / a.P, gw = u64(a.W) / a.P;
  for (std::size_t k = 1; k < a.embed_dims.size(); ++k)
    plan.push_back({gh, gw, u64(a.embed_dims[k - 1]), u64(a.embed_dims[k]), 1,
                    u64(a.m), "stage" + std::to_string(k + 1)});
  return plan;
}

}  // namespace

void ArchInput::validate() const {
  // zero-size inputs are legal and cost nothing; negatives are config errors
  if (H < 0 || W < 0 || C < 0)
    throw ConfigError("image dims must be non-negative");
  if (P < 1 || m < 1) throw ConfigError("patch and mlp_ratio must be >= 1");
  if (embed_dims.empty()) throw ConfigError("embed_dims must be non-empty");
  for (const int e : embed_dims)
    if (e < 1) throw ConfigError("embed dims must be positive");
  if (precision != 2 && precision != 4)
    throw ConfigError("precision must be 2 or 4 bytes");
  if (!(device_tflops > 0.0))
    throw ConfigError("device_tflops must be positive");
  if (H % P || W % P)
    throw ConfigError("patch " + std::to_string(P) + " must divide " +
                      std::to_string(H) + "x" + std::to_string(W));
}

std::uint64_t count_params(const ArchInput& arch) {
  arch.validate();
  u64 total = 0;
  for (const StageDims& s : stage_plan(arch))
    total = add_checked(total, stage_params(arch.kind, s));
  return total;
}

std::uint64_t count_mults(const ArchInput& arch) {
  arch.validate();
  u64 total = 0;
  for (const StageDims& s : stage_plan(arch))
    total = add_checked(total, stage_mults(arch.kind, s));
  return total;
}

CostEstimate estimate(const ArchInput& arch) {
  arch.validate();
  CostEstimate est;
  for (const StageDims& s : stage_plan(arch)) {
    StageCost sc{s.label, stage_params(arch.kind, s), stage_mults(arch.kind, s)};
    est.params = add_checked(est.params, sc.params);
    est.mults = add_checked(est.mults, sc.mults);
    est.stages.push_back(std::move(sc));
  }
  est.est_seconds = static_cast<double>(est.mults) / arch.device_tflops;
  est.est_bytes = (static_cast<double>(est.params) +
                   2.0 * static_cast<double>(est.mults)) *
                  arch.precision;
  return est;
}

std::string stacked_mapping_note() {
  return "stacked mapping: stage1 H,W=image C=input-channels P=patch "
         "L=embed[0]; stage k>=2 H,W=stage1 token grid, P=1, C=embed[k-2], "
         "L=embed[k-1]";
}

namespace {

double ratio_or_nan(double computed, double reported) {
  return reported > 0.0 ? computed / reported : std::nan("");
}

}  // namespace

nlohmann::json table3_report(const nlohmann::json& config) {
  const double tflops = config.value("device_tflops", 45e12);
  const int channels = config.value("channels", 3);
  const int patch = config.value("patch", 4);
  const int mlp_ratio = config.value("mlp_ratio", 6);
  const auto images = config.value("images", nlohmann::json::object());

  nlohmann::json report;
  report["mapping"] = stacked_mapping_note();
  report["device_tflops"] = tflops;
  report["memory_rule"] = "(params + 2*mults) * precision_bytes";
  report["feasible_if"] = "memory <= 15e9 bytes and time <= 1 s";
  nlohmann::json rows = nlohmann::json::array();

  for (const auto& row : config.value("rows", nlohmann::json::array())) {
    ArchInput arch;
    arch.kind = block_kind_from_name(row.at("model").get<std::string>());
    const std::string image = row.at("image").get<std::string>();
    if (!images.contains(image))
      throw ConfigError("image size '" + image + "' is not declared");
    arch.H = images[image][0].get<int>();
    arch.W = images[image][1].get<int>();
    arch.C = row.value("channels", channels);
    arch.P = row.value("patch", patch);
    arch.m = row.value("mlp_ratio", mlp_ratio);
    arch.embed_dims = row.at("embed_dims").get<std::vector<int>>();
    arch.device_tflops = tflops;

    for (const int precision : {4, 2}) {
      arch.precision = precision;
      const CostEstimate est = estimate(arch);
      nlohmann::json out;
      out["model"] = row.at("model");
      out["image"] = image;
      out["size"] = std::to_string(arch.H) + "x" + std::to_string(arch.W);
      out["variant"] = arch.embed_dims.size() > 1 ? "stacked" : "single";
      out["embed_dims"] = arch.embed_dims;
      out["precision"] = precision == 4 ? "fp32" : "fp16";
      out["params"] = est.params;
      out["mults"] = est.mults;
      out["computed_seconds"] = est.est_seconds;
      out["computed_bytes"] = est.est_bytes;
      out["over_memory"] = est.est_bytes > 15e9;
      out["over_time"] = est.est_seconds > 1.0;

      const std::string mem_key =
          precision == 4 ? "fp32_bytes" : "fp16_bytes";
      if (row.contains("reported")) {
        const auto& rep = row["reported"];
        if (rep.contains("time_s") && precision == 4) {
          const double t = rep["time_s"].get<double>();
          out["reported_seconds"] = t;
          out["seconds_ratio"] = ratio_or_nan(est.est_seconds, t);
        }
        if (rep.contains(mem_key)) {
          const double b = rep[mem_key].get<double>();
          out["reported_bytes"] = b;
          out["bytes_ratio"] = ratio_or_nan(est.est_bytes, b);
        }
      }
      rows.push_back(std::move(out));
    }
  }
  report["rows"] = rows;
  return report;
}

namespace {

std::string human_bytes(double b) {
  char buf[32];
  if (b >= 1e12)
    std::snprintf(buf, sizeof buf, "%.2fTB", b / 1e12);
  else if (b >= 1e9)
    std::snprintf(buf, sizeof buf, "%.2fGB", b / 1e9);
  else if (b >= 1e6)
    std::snprintf(buf, sizeof buf, "%.2fMB", b / 1e6);
  else
    std::snprintf(buf, sizeof buf, "%.0fB", b);
  return buf;
}

}  // namespace

std::string table3_text(const nlohmann::json& report) {
  std::ostringstream out;
  out << "memory rule: " << report.value("memory_rule", "") << "\n";
  out << report.value("mapping", "") << "\n";
  out << "flag * marks cells over budget (15 GB / 1 s)\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-7s %-9s %-8s %-5s %14s %14s %12s %12s %10s\n",
                "model", "image", "variant", "prec", "params", "mults",
                "time", "memory", "mem-ratio");
  out << line;
  for (const auto& r : report["rows"]) {
    const double ratio = r.value("bytes_ratio", std::nan(""));
    char ratio_buf[24];
    if (std::isnan(ratio))
      std::snprintf(ratio_buf, sizeof ratio_buf, "-");
    else
      std::snprintf(ratio_buf, sizeof ratio_buf, "%.3f", ratio);
    std::snprintf(
        line, sizeof line, "%-7s %-9s %-8s %-5s %14llu %14llu %11.3es%s %12s%s %10s\n",
        r["model"].get<std::string>().c_str(),
        r["image"].get<std::string>().c_str(),
        r["variant"].get<std::string>().c_str(),
        r["precision"].get<std::string>().c_str(),
        static_cast<unsigned long long>(r["params"].get<std::uint64_t>()),
        static_cast<unsigned long long>(r["mults"].get<std::uint64_t>()),
        r["computed_seconds"].get<double>(),
        r["over_time"].get<bool>() ? "*" : " ",
        human_bytes(r["computed_bytes"].get<double>()).c_str(),
        r["over_memory"].get<bool>() ? "*" : " ", ratio_buf);
    out << line;
  }
  return out.str();
}

std::string table3_csv(const nlohmann::json& report) {
  std::ostringstream out;
  out.precision(10);
  out << "model,image,size,variant,precision,params,mults,computed_seconds,"
         "computed_bytes,over_time,over_memory,reported_seconds,"
         "reported_bytes,seconds_ratio,bytes_ratio\n";
  for (const auto& r : report["rows"]) {
    out << r["model"].get<std::string>() << ","
        << r["image"].get<std::string>() << "," << r["size"].get<std::string>()
        << "," << r["variant"].get<std::string>() << ","
        << r["precision"].get<std::string>() << ","
        << r["params"].get<std::uint64_t>() << ","
        << r["mults"].get<std::uint64_t>() << ","
        << r["computed_seconds"].get<double>() << ","
        << r["computed_bytes"].get<double>() << ","
        << (r["over_time"].get<bool>() ? 1 : 0) << ","
        << (r["over_memory"].get<bool>() ? 1 : 0) << ",";
    if (r.contains("reported_seconds")) out << r["reported_seconds"].get<double>();
    out << ",";
    if (r.contains("reported_bytes")) out << r["reported_bytes"].get<double>();
    out << ",";
    if (r.contains("seconds_ratio")) out << r["seconds_ratio"].get<double>();
    out << ",";
    if (r.contains("bytes_ratio")) out << r["bytes_ratio"].get<double>();
    out << "\n";
  }
  return out.str();
}

}  // namespace lenscam
