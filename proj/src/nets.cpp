#include "cmada/nets.hpp"

#include <ATen/Parallel.h>

#include "cmada/error.hpp"

namespace cmada {

namespace nn = torch::nn;

void GeneratorConfig::validate() const {
  if (channels < 1 || base_width < 1 || residual_blocks < 0) {
    throw ConfigError("generator: channels and base_width must be >= 1, residual_blocks >= 0");
  }
}

void DiscriminatorConfig::validate() const {
  if (in_channels < 1 || base_width < 1 || downsamplings < 1) {
    throw ConfigError("discriminator: in_channels, base_width and downsamplings must be >= 1");
  }
}

void UNetConfig::validate() const {
  if (in_channels < 1 || num_classes < 2 || base_width < 1 || levels < 1) {
    throw ConfigError("unet: widths must be >= 1, num_classes >= 2, levels >= 1");
  }
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"channels", c.channels}, {"base_width", c.base_width}, {"residual_blocks", c.residual_blocks}};
}
void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.channels = j.value("channels", c.channels);
  c.base_width = j.value("base_width", c.base_width);
  c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
}
void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"in_channels", c.in_channels}, {"base_width", c.base_width}, {"downsamplings", c.downsamplings}};
}
void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.base_width = j.value("base_width", c.base_width);
  c.downsamplings = j.value("downsamplings", c.downsamplings);
}
void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"in_channels", c.in_channels}, {"num_classes", c.num_classes}, {"base_width", c.base_width},
       {"levels", c.levels}, {"residual", c.residual}};
}
void from_json(const nlohmann::json& j, UNetConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.base_width = j.value("base_width", c.base_width);
  c.levels = j.value("levels", c.levels);
  c.residual = j.value("residual", c.residual);
}

namespace {

void check_image_batch(const torch::Tensor& x, std::int64_t channels, std::int64_t divisor, const char* who) {
  if (x.dim() != 4) throw ShapeError(std::string(who) + ": expected an N x C x H x W batch");
  if (x.size(1) != channels) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(x.size(1)));
  }
  if (x.size(2) % divisor != 0 || x.size(3) % divisor != 0) {
    throw ShapeError(std::string(who) + ": spatial size must be divisible by " + std::to_string(divisor));
  }
}

// Convolutions feeding an instance norm carry no bias: the norm removes it.
nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                std::int64_t padding = 0, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(padding).bias(bias));
}

nn::InstanceNorm2d instance_norm(std::int64_t c) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c)); }

void gan_init(nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& child : m.modules(/*include_self=*/true)) {
    if (auto* c = child->as<nn::Conv2dImpl>()) {
      nn::init::normal_(c->weight, 0.0, 0.02);
      if (c->bias.defined()) nn::init::zeros_(c->bias);
    } else if (auto* t = child->as<nn::ConvTranspose2dImpl>()) {
      nn::init::normal_(t->weight, 0.0, 0.02);
      if (t->bias.defined()) nn::init::zeros_(t->bias);
    }
  }
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(std::int64_t width) {
  body_ = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1), conv(width, width, 3, 1, 0, false), instance_norm(width), nn::ReLU(),
                             nn::ReflectionPad2d(1), conv(width, width, 3, 1, 0, false), instance_norm(width)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

ResNetGeneratorImpl::ResNetGeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto w = cfg.base_width;
  nn::Sequential s;
  s->push_back(nn::ReflectionPad2d(3));
  s->push_back(conv(cfg.channels, w, 7, 1, 0, false));
  s->push_back(instance_norm(w));
  s->push_back(nn::ReLU());
  s->push_back(conv(w, 2 * w, 3, 2, 1, false));
  s->push_back(instance_norm(2 * w));
  s->push_back(nn::ReLU());
  s->push_back(conv(2 * w, 4 * w, 3, 2, 1, false));
  s->push_back(instance_norm(4 * w));
  s->push_back(nn::ReLU());
  for (std::int64_t b = 0; b < cfg.residual_blocks; ++b) s->push_back(ResidualBlock(4 * w));
  s->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(4 * w, 2 * w, 3).stride(2).padding(1).output_padding(1).bias(false)));
  s->push_back(instance_norm(2 * w));
  s->push_back(nn::ReLU());
  s->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * w, w, 3).stride(2).padding(1).output_padding(1).bias(false)));
  s->push_back(instance_norm(w));
  s->push_back(nn::ReLU());
  s->push_back(nn::ReflectionPad2d(3));
  s->push_back(conv(w, cfg.channels, 7));
  s->push_back(nn::Tanh());
  model_ = register_module("model", s);
}

torch::Tensor ResNetGeneratorImpl::forward(const torch::Tensor& x) {
  check_image_batch(x, cfg_.channels, 4, "generator");
  return model_->forward(x);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::Sequential s;
  std::int64_t width = cfg.base_width;
  s->push_back(conv(cfg.in_channels, width, 4, 2, 1));
  s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  for (std::int64_t n = 1; n < cfg.downsamplings; ++n) {
    s->push_back(conv(width, 2 * width, 4, 2, 1, false));
    s->push_back(instance_norm(2 * width));
    s->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    width *= 2;
  }
  s->push_back(conv(width, 1, 3, 1, 1));
  model_ = register_module("model", s);
}

torch::Tensor PatchDiscriminatorImpl::logits(const torch::Tensor& x) {
  check_image_batch(x, cfg_.in_channels, cfg_.factor(), "discriminator");
  return model_->forward(x);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

UNetBlockImpl::UNetBlockImpl(std::int64_t in, std::int64_t out, bool residual) : residual_(residual) {
  if (residual) {
    body_ = register_module("body", nn::Sequential(conv(in, out, 3, 1, 1, false), nn::BatchNorm2d(out), nn::ReLU(),
                                                   conv(out, out, 3, 1, 1, false), nn::BatchNorm2d(out)));
    if (in != out) projection_ = register_module("projection", conv(in, out, 1, 1, 0, false));
  } else {
    body_ = register_module("body", nn::Sequential(conv(in, out, 3, 1, 1, false), nn::BatchNorm2d(out), nn::ReLU(),
                                                   conv(out, out, 3, 1, 1, false), nn::BatchNorm2d(out), nn::ReLU()));
  }
}

torch::Tensor UNetBlockImpl::forward(const torch::Tensor& x) {
  if (!residual_) return body_->forward(x);
  auto skip = projection_ ? projection_->forward(x) : x;
  return torch::relu(body_->forward(x) + skip);
}

UNet2DImpl::UNet2DImpl(const UNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  down_ = register_module("down", nn::ModuleList());
  up_ = register_module("up", nn::ModuleList());
  std::int64_t in = cfg.in_channels;
  for (std::int64_t l = 0; l < cfg.levels; ++l) {
    const auto width = cfg.base_width << l;
    down_->push_back(UNetBlock(in, width, cfg.residual));
    in = width;
  }
  for (std::int64_t l = cfg.levels - 2; l >= 0; --l) {
    const auto width = cfg.base_width << l;
    up_->push_back(UNetBlock(in + width, width, cfg.residual));
    in = width;
  }
  head_ = register_module("head", conv(in, cfg.num_classes, 1));
}

torch::Tensor UNet2DImpl::logits(const torch::Tensor& x) {
  check_image_batch(x, cfg_.in_channels, cfg_.divisor(), "unet");
  std::vector<torch::Tensor> skips;
  torch::Tensor h = x;
  for (std::size_t l = 0; l < down_->size(); ++l) {
    if (l > 0) h = torch::max_pool2d(h, 2);
    h = down_[l]->as<UNetBlockImpl>()->forward(h);
    skips.push_back(h);
  }
  for (std::size_t u = 0; u < up_->size(); ++u) {
    const auto& skip = skips[skips.size() - 2 - u];
    h = torch::nn::functional::interpolate(
        h, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{skip.size(2), skip.size(3)})
               .mode(torch::kBilinear)
               .align_corners(true));
    h = up_[u]->as<UNetBlockImpl>()->forward(torch::cat({h, skip}, 1));
  }
  return head_->forward(h);
}

torch::Tensor UNet2DImpl::forward(const torch::Tensor& x) { return torch::softmax(logits(x), 1); }

ResNetGenerator make_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(seed);
  ResNetGenerator g(cfg);
  gan_init(*g);
  return g;
}

PatchDiscriminator make_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(seed);
  PatchDiscriminator d(cfg);
  gan_init(*d);
  return d;
}

UNet2D make_unet(const UNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  torch::manual_seed(seed);
  return UNet2D(cfg);
}

void zero_parameters(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.parameters()) p.zero_();
}

void copy_state(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard guard;
  auto sp = src.named_parameters();
  for (auto& item : dst.named_parameters()) item.value().copy_(sp[item.key()]);
  auto sb = src.named_buffers();
  for (auto& item : dst.named_buffers()) item.value().copy_(sb[item.key()]);
}

void set_requires_grad(torch::nn::Module& m, bool flag) {
  for (auto& p : m.parameters()) p.set_requires_grad(flag);
}

void configure_torch_runtime() {
  static const bool once = [] {
    at::set_num_threads(1);
    at::set_num_interop_threads(1);
    return true;
  }();
  (void)once;
}

}  // namespace cmada
