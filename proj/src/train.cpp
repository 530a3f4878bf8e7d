#include "lenscam/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lenscam/deconv.hpp"

namespace fs = std::filesystem;

namespace lenscam {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay: must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    throw ConfigError("warmup_epochs: must lie in [0, epochs)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1/beta2: must lie in [0,1)");
  if (!(delta > 0.0)) throw ConfigError("delta: must be positive");
}

AdamWState init_adamw(const std::vector<NamedParam>& params) {
  AdamWState s;
  for (const NamedParam& p : params) {
    s.m.emplace_back(p.value.size(), 0.0f);
    s.v.emplace_back(p.value.size(), 0.0f);
  }
  return s;
}

void adamw_step(std::vector<NamedParam>& params,
                const std::vector<std::vector<float>>& grads, AdamWState& state,
                const TrainConfig& cfg, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("optimizer state does not match the parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const auto& g = grads[i];
    if (g.size() != p.size())
      throw ShapeError("gradient for '" + params[i].name +
                       "' does not match its parameter");
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = static_cast<float>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j]);
      v[j] = static_cast<float>(cfg.beta2 * v[j] +
                                (1.0 - cfg.beta2) * double(g[j]) * g[j]);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] = static_cast<float>(
          p[j] - lr * (mhat / (std::sqrt(vhat) + cfg.delta) +
                       cfg.weight_decay * p[j]));
    }
  }
}

double lr_schedule(long step, long warmup_steps, double base_lr) {
  if (step < 0) throw DomainError("schedule step must be non-negative");
  if (warmup_steps <= 0) return base_lr;
  const double ramp = static_cast<double>(step + 1) / warmup_steps;
  return base_lr * std::min(1.0, ramp);
}

std::string TrainResult::history_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,train_loss,eval_psnr,eval_ssim,lr_last\n";
  for (const EpochStats& e : history)
    out << e.epoch << "," << e.train_loss << "," << e.eval_psnr << ","
        << e.eval_ssim << "," << e.lr_last << "\n";
  return out.str();
}

namespace {

std::vector<float> to_float(const ImageGrid& img) {
  return std::vector<float>(img.data.begin(), img.data.end());
}

ImageGrid from_values(const std::vector<float>& v, int h, int w, int c,
                      bool clamp_unit) {
  ImageGrid img(h, w, c);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = clamp_unit ? std::clamp(double(v[i]), 0.0, 1.0) : v[i];
  return img;
}

}  // namespace

ImageGrid predict(const Model& model, const ImageGrid& capture) {
  const ModelSpec& sp = model.spec();
  if (capture.h != sp.in_h || capture.w != sp.in_w || capture.c != sp.in_c)
    throw ShapeError("capture does not match the model input size");
  Tape32 tape;
  auto x = tape.input({sp.in_h, sp.in_w, sp.in_c}, to_float(capture));
  auto y = model.forward(tape, x);
  return from_values(tape.value(y), sp.out_h, sp.out_w, sp.out_c, true);
}

QualityReport evaluate_with(
    const std::function<ImageGrid(const ImageGrid&)>& predict_fn,
    const PairedDataset& ds, const std::string& split, std::string model_name) {
  const auto idx = ds.split_indices(split);
  if (idx.empty())
    throw DomainError("dataset has no records in split '" + split + "'");
  QualityReport report;
  report.model_name = std::move(model_name);
  int out_h = 0;
  for (const int i : idx) {
    const DataRecord& rec = ds.records[i];
    const ImageGrid out = predict_fn(rec.capture);
    out_h = out.h;
    ImageGrid target = rec.reference;
    if (target.h != out.h || target.w != out.w)
      target = resize_bilinear(target, out.h, out.w);
    report.rows.push_back({rec.id, psnr(out, target, 1.0), ssim(out, target, 1.0)});
  }
  report.in_out = std::to_string(ds.records[idx[0]].capture.h) + "-" +
                  std::to_string(out_h);
  return report;
}

QualityReport evaluate(const Model& model, const PairedDataset& ds,
                       const std::string& split) {
  QualityReport report = evaluate_with(
      [&](const ImageGrid& cap) { return predict(model, cap); }, ds, split,
      block_kind_name(model.spec().block_kind));
  report.param_count = model.param_count();
  report.train_size = ds.split_indices("train").size();
  report.in_out = std::to_string(model.spec().in_h) + "-" +
                  std::to_string(model.spec().out_h);
  return report;
}

QualityReport mean_image_baseline(const PairedDataset& ds,
                                  const std::string& split) {
  const auto train_idx = ds.split_indices("train");
  if (train_idx.empty()) throw DomainError("dataset has no train records");
  const ImageGrid& first = ds.records[train_idx[0]].reference;
  ImageGrid mean(first.h, first.w, first.c);
  for (const int i : train_idx)
    for (std::size_t j = 0; j < mean.data.size(); ++j)
      mean.data[j] += ds.records[i].reference.data[j];
  for (double& v : mean.data) v /= train_idx.size();
  QualityReport report = evaluate_with(
      [&](const ImageGrid&) { return mean; }, ds, split, "mean-image");
  report.train_size = train_idx.size();
  return report;
}

QualityReport ridge_baseline(const PairedDataset& ds, double eps_rel,
                             const std::string& split) {
  const FrequencyFilter filter = build_inverse_filter(ds.psf, eps_rel);
  QualityReport report = evaluate_with(
      [&](const ImageGrid& cap) {
        ImageGrid out = deconvolve(cap, filter);
        for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
        return out;
      },
      ds, split, "ridge-deconv");
  report.train_size = ds.split_indices("train").size();
  return report;
}

TrainResult train(Model& model, const PairedDataset& ds, const TrainConfig& cfg,
                  const std::string& checkpoint_dir) {
  cfg.validate();
  const ModelSpec& sp = model.spec();
  const auto train_idx = ds.split_indices("train");
  if (train_idx.empty()) throw DomainError("dataset has no train records");
  for (const int i : train_idx) {
    const DataRecord& r = ds.records[i];
    if (r.reference.h != sp.out_h || r.reference.w != sp.out_w ||
        r.reference.c != sp.out_c)
      throw ShapeError("record " + r.id + " reference " +
                       std::to_string(r.reference.h) + "x" +
                       std::to_string(r.reference.w) +
                       " does not match the model output size");
    if (r.capture.h != sp.in_h || r.capture.w != sp.in_w ||
        r.capture.c != sp.in_c)
      throw ShapeError("record " + r.id + " capture does not match the model "
                       "input size");
  }

  AdamWState opt = init_adamw(model.params());
  const long steps_per_epoch =
      (static_cast<long>(train_idx.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const long warmup_steps = cfg.warmup_epochs * steps_per_epoch;

  TrainResult result;
  if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);

  long global_step = 0;
  std::vector<std::vector<float>> grads(model.params().size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded per-epoch shuffle.
    std::vector<int> order = train_idx;
    const std::uint64_t es = cfg.seed ^ fnv1a(&epoch, sizeof epoch);
    Rng rng(es);
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);

    double epoch_loss = 0.0;
    long batches = 0;
    double last_lr = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double inv_count = 1.0 / static_cast<double>(b1 - b0);
      for (auto& g : grads) g.clear();
      for (std::size_t i = 0; i < grads.size(); ++i)
        grads[i].assign(model.params()[i].value.size(), 0.0f);

      double batch_loss = 0.0;
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const DataRecord& rec = ds.records[order[bi]];
        result.batch_hashes.push_back(rec.hash);
        try {
          Tape32 tape;
          auto x = tape.input({sp.in_h, sp.in_w, sp.in_c}, to_float(rec.capture));
          std::vector<Tensor32> leaves;
          auto y = model.forward(tape, x, &leaves);
          auto target =
              tape.input({sp.out_h, sp.out_w, sp.out_c}, to_float(rec.reference));
          auto loss = tape.mse(y, target);
          tape.backward(loss);
          batch_loss += tape.value(loss)[0] * inv_count;
          for (std::size_t i = 0; i < leaves.size(); ++i) {
            const auto& g = tape.grad(leaves[i]);
            for (std::size_t j = 0; j < g.size(); ++j)
              grads[i][j] += static_cast<float>(g[j] * inv_count);
          }
        } catch (const NumericFault& e) {
          throw NumericFault("training diverged at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + ", last lr " +
                             std::to_string(last_lr) + ": " + e.what());
        }
      }
      if (!std::isfinite(batch_loss))
        throw NumericFault("non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ", last lr " +
                           std::to_string(last_lr));
      last_lr = lr_schedule(global_step, warmup_steps, cfg.learning_rate);
      adamw_step(model.params(), grads, opt, cfg, last_lr);
      ++global_step;
      epoch_loss += batch_loss;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / batches;
    stats.lr_last = last_lr;
    if (!ds.split_indices("eval").empty()) {
      const QualityReport eval_report = evaluate(model, ds, "eval");
      stats.eval_psnr = eval_report.mean_psnr();
      stats.eval_ssim = eval_report.mean_ssim();
    }
    result.history.push_back(stats);

    if (!checkpoint_dir.empty()) {
      model.save((fs::path(checkpoint_dir) /
                  ("epoch_" + std::to_string(epoch) + ".ckpt"))
                     .string());
      std::ofstream hist(fs::path(checkpoint_dir) / "history.csv");
      hist << result.history_csv();
    }
  }
  return result;
}

}  // namespace lenscam
