#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lenscam/data.hpp"
#include "lenscam/metrics.hpp"
#include "lenscam/nn.hpp"

namespace lenscam {

struct TrainConfig {
  double learning_rate = 6e-5;
  double weight_decay = 0.1;
  int batch_size = 4;
  int epochs = 50;
  int warmup_epochs = 3;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;  // numerical-stability term

  void validate() const;
};

// Decoupled-weight-decay Adam: p <- p - lr*(mhat/(sqrt(vhat)+delta) + wd*p).
struct AdamWState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  long step = 0;
};

AdamWState init_adamw(const std::vector<NamedParam>& params);

void adamw_step(std::vector<NamedParam>& params,
                const std::vector<std::vector<float>>& grads, AdamWState& state,
                const TrainConfig& cfg, double lr);

// Linear ramp 0 -> base_lr over warmup_steps, constant afterwards; step 0
// yields the first ramp value base_lr/warmup_steps.
double lr_schedule(long step, long warmup_steps, double base_lr);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_psnr = 0.0;
  double eval_ssim = 0.0;
  double lr_last = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::vector<std::uint64_t> batch_hashes;  // capture hashes seen in training
  std::string history_csv() const;
};

// Minimizes mean MSE over shuffled batches of the train split; evaluates the
// eval split each epoch. When checkpoint_dir is non-empty, writes
// epoch_<n>.ckpt plus history.csv there.
TrainResult train(Model& model, const PairedDataset& ds, const TrainConfig& cfg,
                  const std::string& checkpoint_dir = "");

QualityReport evaluate(const Model& model, const PairedDataset& ds,
                       const std::string& split = "eval");

// Scores an arbitrary capture->image predictor against the references of the
// given split (outputs clamped to [0,1] like the model path).
QualityReport evaluate_with(
    const std::function<ImageGrid(const ImageGrid&)>& predict,
    const PairedDataset& ds, const std::string& split, std::string model_name);

// Predicts the per-pixel mean of the train-split references for every image.
QualityReport mean_image_baseline(const PairedDataset& ds,
                                  const std::string& split = "eval");

// Classical restoration of each capture with the dataset's stored PSF.
QualityReport ridge_baseline(const PairedDataset& ds, double eps_rel,
                             const std::string& split = "eval");

// Runs the model on one capture (inference convenience).
ImageGrid predict(const Model& model, const ImageGrid& capture);

}  // namespace lenscam
