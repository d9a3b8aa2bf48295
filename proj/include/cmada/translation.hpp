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

enum class GeneratorLossMode { saturating, non_saturating };
std::string to_string(GeneratorLossMode m);
GeneratorLossMode generator_loss_mode_from_string(const std::string& s);

struct TranslationObjectiveConfig {
  double cycle_weight = 10.0;  // lambda
  GeneratorLossMode mode = GeneratorLossMode::non_saturating;
  std::int64_t epochs = 40;
  std::int64_t batch_size = 1;
  std::int64_t max_steps = 0;  // 0: no cap
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-7;  // probability floor inside the logs
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  void validate() const;
};

/// Rejects NaN and values outside [0, 1]. Exact 0 and 1 are accepted: a
/// float32 sigmoid saturates there, and the eps clamp covers them.
void check_probabilities(const torch::Tensor& p, const char* who);

/// -mean(log d_real) - mean(log(1 - d_fake)), logs clamped to [eps, 1 - eps].
torch::Tensor gan_loss_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake, double eps);
/// saturating: mean(log(1 - d_fake)); non_saturating: -mean(log d_fake).
torch::Tensor gan_loss_generator(const torch::Tensor& d_fake, GeneratorLossMode mode, double eps);
/// mean|rec_s - x_s| + mean|rec_t - x_t|.
torch::Tensor cycle_loss(const torch::Tensor& x_s, const torch::Tensor& rec_s, const torch::Tensor& x_t,
                         const torch::Tensor& rec_t);

using TensorMap = std::function<torch::Tensor(const torch::Tensor&)>;

struct TranslationLosses {
  torch::Tensor adversarial_s;  // generator term against D_S (target side)
  torch::Tensor adversarial_t;  // generator term against D_T (source side)
  torch::Tensor cycle;
  torch::Tensor generator_total;
  torch::Tensor discriminator_s;  // on detached fakes
  torch::Tensor discriminator_t;
};

/// All per-player losses of the translation objective on one batch pair.
/// G_S maps source -> target and is judged by D_S; G_T maps target -> source
/// and is judged by D_T.
TranslationLosses translation_objective(const torch::Tensor& x_s, const torch::Tensor& x_t, const TensorMap& g_s,
                                        const TensorMap& g_t, const TensorMap& d_s, const TensorMap& d_t,
                                        const TranslationObjectiveConfig& cfg);

struct TranslationModel {
  ResNetGenerator g_s{nullptr};
  ResNetGenerator g_t{nullptr};
  PatchDiscriminator d_s{nullptr};
  PatchDiscriminator d_t{nullptr};
};

TranslationModel make_translation_model(const TranslationObjectiveConfig& cfg, std::uint64_t seed);

struct TranslationResult {
  TranslationModel model;
  LossHistory history;
  std::int64_t steps = 0;
  Checkpoint checkpoint;  // all four networks + optimizer state
};

/// Per step: D_S update, D_T update, then a joint G_S + G_T update. Steps per
/// epoch = ceil(max(|source|, |target|) / batch); the smaller domain cycles.
/// Learning rate decays linearly to zero over the second half of the epochs.
TranslationResult train_translation(std::span<const SliceSample> source, std::span<const SliceSample> target,
                                    const TranslationObjectiveConfig& cfg, std::uint64_t seed,
                                    const std::string& config_hash = {});

TranslationModel load_translation_model(const Checkpoint& ck);

/// One mapped slice per source slice, mask carried over, domain mapped_source.
std::vector<SliceSample> translate_dataset(ResNetGenerator& g_s, std::span<const SliceSample> source,
                                           std::int64_t batch_size = 8);

}  // namespace cmada
