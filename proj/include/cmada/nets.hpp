#pragma once

#include <cstdint>

#include <json.hpp>
#include <torch/torch.h>

namespace cmada {

// ResNet-style translation generator: 7x7 stem, two stride-2 downsamplings,
// `residual_blocks` residual blocks, two transposed-conv upsamplings, tanh.
// Instance normalization and reflection padding throughout.
struct GeneratorConfig {
  std::int64_t channels = 1;
  std::int64_t base_width = 16;
  std::int64_t residual_blocks = 6;
  void validate() const;
};

// PatchGAN: `downsamplings` stride-2 4x4 convolutions followed by a 3x3
// stride-1 convolution to one logit per patch and a sigmoid. The output grid
// is the input shape divided by 2^downsamplings.
struct DiscriminatorConfig {
  std::int64_t in_channels = 1;
  std::int64_t base_width = 16;
  std::int64_t downsamplings = 3;
  std::int64_t factor() const { return std::int64_t{1} << downsamplings; }
  void validate() const;
};

// 2D U-Net with `levels` resolutions (width base_width * 2^level), batch
// normalization, bilinear upsampling and softmax over `num_classes`.
// `residual` swaps the double-conv blocks for residual blocks.
struct UNetConfig {
  std::int64_t in_channels = 1;
  std::int64_t num_classes = 3;
  std::int64_t base_width = 16;
  std::int64_t levels = 4;
  bool residual = false;
  std::int64_t divisor() const { return std::int64_t{1} << (levels - 1); }
  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t width);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class ResNetGeneratorImpl : public torch::nn::Module {
 public:
  explicit ResNetGeneratorImpl(const GeneratorConfig& cfg);
  /// N x C x H x W -> N x C x H x W in (-1, 1); H, W divisible by 4.
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(ResNetGenerator);

class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscriminatorConfig& cfg);
  /// N x k x H x W -> N x 1 x H/f x W/f patch probabilities.
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor logits(const torch::Tensor& x);
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

class UNetBlockImpl : public torch::nn::Module {
 public:
  UNetBlockImpl(std::int64_t in, std::int64_t out, bool residual);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Conv2d projection_{nullptr};
  bool residual_;
};
TORCH_MODULE(UNetBlock);

class UNet2DImpl : public torch::nn::Module {
 public:
  explicit UNet2DImpl(const UNetConfig& cfg);
  /// N x 1 x H x W -> N x C x H x W class probabilities.
  torch::Tensor forward(const torch::Tensor& x);
  /// Pre-softmax scores.
  torch::Tensor logits(const torch::Tensor& x);
  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  torch::nn::ModuleList down_{nullptr};
  torch::nn::ModuleList up_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet2D);

/// Builds and initializes a network deterministically from `seed`.
/// Convolutions of the GAN networks draw N(0, 0.02) weights; the U-Net keeps
/// the default Kaiming-uniform initialization.
ResNetGenerator make_generator(const GeneratorConfig& cfg, std::uint64_t seed);
PatchDiscriminator make_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);
UNet2D make_unet(const UNetConfig& cfg, std::uint64_t seed);

void zero_parameters(torch::nn::Module& m);
/// Copies parameters and buffers from `src` into `dst` (same architecture).
void copy_state(const torch::nn::Module& src, torch::nn::Module& dst);
void set_requires_grad(torch::nn::Module& m, bool flag);

/// Single-threaded, deterministic CPU execution.
void configure_torch_runtime();

}  // namespace cmada
