#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cmada/checkpoint.hpp"
#include "cmada/history.hpp"
#include "cmada/nets.hpp"
#include "cmada/volume.hpp"

namespace cmada {

struct SegLossConfig {
  std::vector<double> alpha{0.1, 0.4, 0.5};  // per-class dice weights, not renormalized
  double beta = 0.65;                        // dice vs cross-entropy mix
  double eps_smooth = 1e-6;
  double eps_log = 1e-7;
  void validate() const;
};

/// 1 - (2 Σ p·y + eps) / (Σ p + Σ y + eps), sums over every element.
torch::Tensor dice_term(const torch::Tensor& pred, const torch::Tensor& onehot, double eps_smooth);

/// beta Σ_c alpha_c dice_term_c + (1 - beta) BCE with
/// BCE = -Σ_c Σ_i [y log p + (1 - y) log(1 - p)] / (pixel count).
/// `probs` is N x C x H x W, `target` N x H x W integer labels.
torch::Tensor seg_loss(const torch::Tensor& probs, const torch::Tensor& target, const SegLossConfig& cfg);

struct SupervisedConfig {
  std::int64_t epochs = 500;
  std::int64_t batch_size = 4;
  std::int64_t max_steps = 0;            // 0: no cap
  std::int64_t checkpoint_interval = 0;  // steps between periodic checkpoints; 0: none
  double lr = 1e-3;
  SegLossConfig loss;
  UNetConfig unet;
  void validate() const;
};

struct SupervisedResult {
  UNet2D net{nullptr};
  LossHistory history;
  std::int64_t steps = 0;
  std::vector<Checkpoint> periodic;
  Checkpoint final_checkpoint;
};

/// Adam training on labeled slices; throws ValidationError on an unlabeled one.
SupervisedResult train_supervised(std::span<const SliceSample> slices, const SupervisedConfig& cfg,
                                  std::uint64_t seed, const std::string& config_hash = {});

Checkpoint unet_checkpoint(UNet2D& net, Phase phase, std::int64_t step, std::uint64_t seed,
                           const std::string& config_hash, const torch::optim::Adam* opt = nullptr);
UNet2D load_unet(const Checkpoint& ck);

struct VolumePrediction {
  LabelVolume labels;
  std::vector<Volume> probabilities;  // one per class
};

using ProbabilityFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// One forward pass per slice along `axis`; per-pixel argmax with ties
/// going to the lower class index.
VolumePrediction predict_volume(const ProbabilityFn& forward, const Volume& v, std::int64_t num_classes,
                                int axis = kAxialAxis);
VolumePrediction predict_volume(UNet2D& net, const Volume& v, int axis = kAxialAxis);

/// Argmax with ties toward the lower class over a C x H x W probability tensor.
Grid2<Label> argmax_labels(const torch::Tensor& probs);

}  // namespace cmada
