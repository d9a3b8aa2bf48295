#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cmada/checkpoint.hpp"
#include "cmada/history.hpp"
#include "cmada/nets.hpp"
#include "cmada/segmentation.hpp"
#include "cmada/translation.hpp"

namespace cmada {

/// Horizontal and vertical 3x3 Sobel responses of every channel of an
/// N x C x H x W map, replicate-padded. g_x uses (-1 0 1; -2 0 2; -1 0 1).
std::pair<torch::Tensor, torch::Tensor> sobel_gradients(const torch::Tensor& m);

/// sqrt(g_x² + g_y²); the gradient is taken as zero where the magnitude is zero.
torch::Tensor sobel_contour(const torch::Tensor& m);

enum class DiscInputMode {
  full,      // probabilities, probabilities x image, Sobel contours: 3C channels
  seg_only,  // probabilities only: C channels
};
std::string to_string(DiscInputMode m);
DiscInputMode disc_input_mode_from_string(const std::string& s);
std::int64_t disc_input_channels(DiscInputMode mode, std::int64_t num_classes);

/// Shape/texture/contour stack for the output-space discriminator.
/// probs: N x C x H x W, image: N x 1 x H x W.
torch::Tensor build_disc_input(const torch::Tensor& probs, const torch::Tensor& image,
                               DiscInputMode mode = DiscInputMode::full);

/// Mapped-source predictions are the real class, target predictions the fake one.
torch::Tensor adv_feature_loss_discriminator(const torch::Tensor& d_on_source_pred,
                                             const torch::Tensor& d_on_target_pred, double eps);
torch::Tensor adv_feature_loss_generator(const torch::Tensor& d_on_target_pred, GeneratorLossMode mode, double eps);

struct AdaptConfig {
  std::int64_t epochs = 100;
  std::int64_t batch_size = 4;
  std::int64_t max_steps = 0;          // 0: no cap
  std::int64_t snapshot_interval = 50;  // steps between candidate checkpoints
  double lr_generator = 1e-4;
  double lr_discriminator = 5e-5;
  double eps = 1e-7;
  bool supervised_step = true;
  GeneratorLossMode mode = GeneratorLossMode::non_saturating;
  DiscInputMode input_mode = DiscInputMode::full;
  SegLossConfig seg;
  DiscriminatorConfig discriminator;  // in_channels derived from input_mode
  void validate() const;
};

struct AdaptationResult {
  UNet2D net{nullptr};
  PatchDiscriminator discriminator{nullptr};
  LossHistory history;
  std::int64_t steps = 0;
  std::int64_t supervised_evaluations = 0;
  std::vector<Checkpoint> candidates;  // U-Net snapshots, ascending step
};

/// Per step: (1) discriminator update on detached predictions, (2) U-Net
/// adversarial update on a target batch, (3) optional supervised seg_loss
/// update on a mapped-source batch, sharing the U-Net optimizer with (2).
/// Candidates are emitted every `snapshot_interval` steps and at the end.
/// Target slices are consumed as images only; their masks are never read.
AdaptationResult train_adaptation(const Checkpoint& unet_ckpt, std::span<const SliceSample> mapped_source,
                                  std::span<const SliceSample> target, const AdaptConfig& cfg, std::uint64_t seed,
                                  const std::string& config_hash = {});

}  // namespace cmada
