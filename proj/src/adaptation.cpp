#include "cmada/adaptation.hpp"

#include "cmada/rng.hpp"
#include "cmada/slices.hpp"
#include "cmada/tensors.hpp"

namespace cmada {

namespace F = torch::nn::functional;

std::pair<torch::Tensor, torch::Tensor> sobel_gradients(const torch::Tensor& m) {
  if (m.dim() != 4) throw ShapeError("sobel: expected an N x C x H x W map");
  using torch::indexing::Slice;
  const auto h = m.size(2), w = m.size(3);
  const auto p = F::pad(m, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  // differences first, so a flat neighbourhood gives an exact zero
  const auto dx = p.index({Slice(), Slice(), Slice(), Slice(2, torch::indexing::None)}) - p.index({Slice(), Slice(), Slice(), Slice(0, w)});
  const auto dy = p.index({Slice(), Slice(), Slice(2, torch::indexing::None), Slice()}) - p.index({Slice(), Slice(), Slice(0, h), Slice()});
  auto gx = dx.index({Slice(), Slice(), Slice(0, h)}) + 2 * dx.index({Slice(), Slice(), Slice(1, h + 1)}) +
            dx.index({Slice(), Slice(), Slice(2, h + 2)});
  auto gy = dy.index({Slice(), Slice(), Slice(), Slice(0, w)}) + 2 * dy.index({Slice(), Slice(), Slice(), Slice(1, w + 1)}) +
            dy.index({Slice(), Slice(), Slice(), Slice(2, w + 2)});
  return {gx, gy};
}

torch::Tensor sobel_contour(const torch::Tensor& m) {
  const auto [gx, gy] = sobel_gradients(m);
  const auto sq = gx * gx + gy * gy;
  const auto positive = sq > 0;
  return torch::where(positive, torch::sqrt(torch::where(positive, sq, torch::ones_like(sq))), torch::zeros_like(sq));
}

std::string to_string(DiscInputMode m) { return m == DiscInputMode::full ? "full" : "seg_only"; }

DiscInputMode disc_input_mode_from_string(const std::string& s) {
  if (s == "full") return DiscInputMode::full;
  if (s == "seg_only") return DiscInputMode::seg_only;
  throw ConfigError("unknown discriminator input mode '" + s + "'");
}

std::int64_t disc_input_channels(DiscInputMode mode, std::int64_t num_classes) {
  return mode == DiscInputMode::full ? 3 * num_classes : num_classes;
}

torch::Tensor build_disc_input(const torch::Tensor& probs, const torch::Tensor& image, DiscInputMode mode) {
  if (probs.dim() != 4 || image.dim() != 4 || image.size(1) != 1 || probs.size(0) != image.size(0) ||
      probs.size(2) != image.size(2) || probs.size(3) != image.size(3)) {
    throw ShapeError("build_disc_input: expected N x C x H x W probabilities and an N x 1 x H x W image");
  }
  if (mode == DiscInputMode::seg_only) return probs;
  return torch::cat({probs, probs * image, sobel_contour(probs)}, 1);
}

torch::Tensor adv_feature_loss_discriminator(const torch::Tensor& d_on_source_pred,
                                             const torch::Tensor& d_on_target_pred, double eps) {
  return gan_loss_discriminator(d_on_source_pred, d_on_target_pred, eps);
}

torch::Tensor adv_feature_loss_generator(const torch::Tensor& d_on_target_pred, GeneratorLossMode mode, double eps) {
  return gan_loss_generator(d_on_target_pred, mode, eps);
}

void AdaptConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || max_steps < 0) throw ConfigError("adaptation: epochs and batch size must be >= 1");
  if (snapshot_interval < 1) throw ConfigError("adaptation: snapshot interval must be >= 1");
  if (lr_generator <= 0.0 || lr_discriminator <= 0.0) throw ConfigError("adaptation: learning rates must be positive");
  if (!(eps > 0.0 && eps <= 1e-3)) throw ConfigError("adaptation: eps must be in (0, 1e-3]");
  seg.validate();
}

AdaptationResult train_adaptation(const Checkpoint& unet_ckpt, std::span<const SliceSample> mapped_source,
                                  std::span<const SliceSample> target, const AdaptConfig& cfg, std::uint64_t seed,
                                  const std::string& config_hash) {
  cfg.validate();
  if (unet_ckpt.phase != Phase::supervised) throw ValidationError("adaptation must start from a supervised checkpoint");
  if (mapped_source.empty() || target.empty()) throw ValidationError("train_adaptation: empty dataset");
  for (const auto& s : mapped_source) {
    if (!s.mask) throw ValidationError("train_adaptation: mapped-source slice without mask");
  }
  configure_torch_runtime();

  AdaptationResult r;
  r.net = load_unet(unet_ckpt);
  const auto classes = r.net->config().num_classes;
  auto dcfg = cfg.discriminator;
  dcfg.in_channels = disc_input_channels(cfg.input_mode, classes);
  r.discriminator = make_discriminator(dcfg, mix_seed(seed, 31));
  auto& net = r.net;
  auto& disc = r.discriminator;
  net->train();
  disc->train();

  torch::optim::Adam opt_g(net->parameters(), torch::optim::AdamOptions(cfg.lr_generator));
  torch::optim::Adam opt_d(disc->parameters(), torch::optim::AdamOptions(cfg.lr_discriminator));

  SliceIterator src_it(mapped_source, cfg.batch_size, mix_seed(seed, 32));
  SliceIterator tgt_it(target, cfg.batch_size, mix_seed(seed, 33));
  const auto steps_per_epoch = std::max(src_it.batches_per_epoch(), tgt_it.batches_per_epoch());

  auto record = [&](const char* name, const torch::Tensor& loss) {
    const double v = loss.item<double>();
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + name + " loss", r.steps);
    r.history.add(r.steps, name, v);
  };

  bool done = false;
  for (std::int64_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    src_it.start_epoch(epoch);
    tgt_it.start_epoch(epoch);
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      if (cfg.max_steps > 0 && r.steps >= cfg.max_steps) {
        done = true;
        break;
      }
      auto src_batch = src_it.next_in_epoch();
      if (!src_batch) src_batch = src_it.next();
      auto tgt_batch = tgt_it.next_in_epoch();
      if (!tgt_batch) tgt_batch = tgt_it.next();
      const auto x_src = images_to_tensor(*src_batch);
      const auto x_tgt = images_to_tensor(*tgt_batch);

      // (1) discriminator on detached predictions
      torch::Tensor y_src, y_tgt;
      {
        torch::NoGradGuard guard;
        y_src = net->forward(x_src);
        y_tgt = net->forward(x_tgt);
      }
      opt_d.zero_grad();
      const auto loss_d = adv_feature_loss_discriminator(disc->forward(build_disc_input(y_src, x_src, cfg.input_mode)),
                                                         disc->forward(build_disc_input(y_tgt, x_tgt, cfg.input_mode)),
                                                         cfg.eps);
      record("D", loss_d);
      loss_d.backward();
      opt_d.step();

      // (2) U-Net adversarial step on target slices
      set_requires_grad(*disc, false);
      opt_g.zero_grad();
      const auto y = net->forward(x_tgt);
      const auto loss_adv =
          adv_feature_loss_generator(disc->forward(build_disc_input(y, x_tgt, cfg.input_mode)), cfg.mode, cfg.eps);
      record("G_adv", loss_adv);
      loss_adv.backward();
      opt_g.step();
      set_requires_grad(*disc, true);

      // (3) supervised step on mapped-source slices
      if (cfg.supervised_step) {
        opt_g.zero_grad();
        const auto loss_seg = seg_loss(net->forward(x_src), masks_to_tensor(*src_batch), cfg.seg);
        ++r.supervised_evaluations;
        record("seg", loss_seg);
        loss_seg.backward();
        opt_g.step();
      }
      ++r.steps;
      if (r.steps % cfg.snapshot_interval == 0) {
        r.candidates.push_back(unet_checkpoint(net, Phase::adaptation, r.steps, seed, config_hash));
      }
    }
  }
  if (r.candidates.empty() || r.candidates.back().step != r.steps) {
    r.candidates.push_back(unet_checkpoint(net, Phase::adaptation, r.steps, seed, config_hash));
  }
  return r;
}

}  // namespace cmada
