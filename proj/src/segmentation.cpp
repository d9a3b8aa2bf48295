#include "cmada/segmentation.hpp"

#include "cmada/rng.hpp"
#include "cmada/slices.hpp"
#include "cmada/tensors.hpp"

namespace cmada {

void SegLossConfig::validate() const {
  for (double a : alpha) {
    if (a < 0.0) throw ConfigError("dice weights must be >= 0");
  }
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must be in [0, 1]");
  if (!(eps_smooth > 0.0 && eps_smooth <= 1e-3) || !(eps_log > 0.0 && eps_log <= 1e-3)) {
    throw ConfigError("loss eps terms must be in (0, 1e-3]");
  }
}

void SupervisedConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || max_steps < 0 || checkpoint_interval < 0) {
    throw ConfigError("supervised: epochs and batch size must be >= 1");
  }
  if (lr <= 0.0) throw ConfigError("supervised: learning rate must be positive");
  loss.validate();
  unet.validate();
  if (static_cast<std::int64_t>(loss.alpha.size()) != unet.num_classes) {
    throw ConfigError("supervised: one dice weight per class required");
  }
}

torch::Tensor dice_term(const torch::Tensor& pred, const torch::Tensor& onehot, double eps_smooth) {
  if (pred.sizes() != onehot.sizes()) throw ShapeError("dice_term: prediction and indicator shapes differ");
  const auto inter = (pred * onehot).sum();
  return 1.0 - (2.0 * inter + eps_smooth) / (pred.sum() + onehot.sum() + eps_smooth);
}

torch::Tensor seg_loss(const torch::Tensor& probs, const torch::Tensor& target, const SegLossConfig& cfg) {
  if (probs.dim() != 4 || target.dim() != 3 || probs.size(0) != target.size(0) || probs.size(2) != target.size(1) ||
      probs.size(3) != target.size(2)) {
    throw ShapeError("seg_loss: expected N x C x H x W probabilities and N x H x W labels");
  }
  const auto classes = probs.size(1);
  if (static_cast<std::int64_t>(cfg.alpha.size()) != classes) throw ShapeError("seg_loss: one alpha per class");
  if (target.numel() > 0 && (target.max().item<std::int64_t>() >= classes || target.min().item<std::int64_t>() < 0)) {
    throw ValidationError("seg_loss: label outside the class range");
  }
  const auto onehot = torch::one_hot(target, classes).permute({0, 3, 1, 2}).to(probs.scalar_type());

  auto dice = torch::zeros({}, probs.options());
  for (std::int64_t c = 0; c < classes; ++c) {
    dice = dice + cfg.alpha[static_cast<std::size_t>(c)] * dice_term(probs.select(1, c), onehot.select(1, c), cfg.eps_smooth);
  }
  const auto p = probs.clamp(cfg.eps_log, 1.0 - cfg.eps_log);
  const double pixels = static_cast<double>(target.numel());
  const auto bce = -(onehot * torch::log(p) + (1.0 - onehot) * torch::log(1.0 - p)).sum() / pixels;
  return cfg.beta * dice + (1.0 - cfg.beta) * bce;
}

Checkpoint unet_checkpoint(UNet2D& net, Phase phase, std::int64_t step, std::uint64_t seed,
                           const std::string& config_hash, const torch::optim::Adam* opt) {
  Checkpoint ck;
  ck.phase = phase;
  ck.step = step;
  ck.seed = seed;
  ck.config_hash = config_hash;
  ck.meta["unet"] = net->config();
  capture_module(ck, "unet", *net);
  if (opt) capture_adam(ck, "opt", *opt, *net);
  return ck;
}

UNet2D load_unet(const Checkpoint& ck) {
  UNet2D net(ck.meta.at("unet").get<UNetConfig>());
  restore_module(ck, "unet", *net);
  return net;
}

SupervisedResult train_supervised(std::span<const SliceSample> slices, const SupervisedConfig& cfg,
                                  std::uint64_t seed, const std::string& config_hash) {
  cfg.validate();
  if (slices.empty()) throw ValidationError("train_supervised: no slices");
  for (const auto& s : slices) {
    if (!s.mask) {
      throw ValidationError("train_supervised: slice " + std::to_string(s.slice_index) + " of volume " +
                            s.volume_id + " is unlabeled");
    }
  }
  configure_torch_runtime();
  SupervisedResult r;
  r.net = make_unet(cfg.unet, mix_seed(seed, 21));
  r.net->train();
  torch::optim::Adam opt(r.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  SliceIterator it(slices, cfg.batch_size, mix_seed(seed, 22));

  bool done = false;
  for (std::int64_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    it.start_epoch(epoch);
    while (auto batch = it.next_in_epoch()) {
      if (cfg.max_steps > 0 && r.steps >= cfg.max_steps) {
        done = true;
        break;
      }
      opt.zero_grad();
      const auto loss = seg_loss(r.net->forward(images_to_tensor(*batch)), masks_to_tensor(*batch), cfg.loss);
      const double v = loss.item<double>();
      if (!std::isfinite(v)) throw TrainingError("non-finite segmentation loss", r.steps);
      r.history.add(r.steps, "seg", v);
      loss.backward();
      opt.step();
      ++r.steps;
      if (cfg.checkpoint_interval > 0 && r.steps % cfg.checkpoint_interval == 0) {
        r.periodic.push_back(unet_checkpoint(r.net, Phase::supervised, r.steps, seed, config_hash));
      }
    }
  }
  r.final_checkpoint = unet_checkpoint(r.net, Phase::supervised, r.steps, seed, config_hash, &opt);
  return r;
}

Grid2<Label> argmax_labels(const torch::Tensor& probs) {
  const auto p = probs.detach().to(torch::kFloat64).contiguous();
  if (p.dim() != 3) throw ShapeError("argmax_labels: expected C x H x W");
  const auto classes = p.size(0), rows = p.size(1), cols = p.size(2);
  const auto* d = p.data_ptr<double>();
  Grid2<Label> g{rows, cols, std::vector<Label>(static_cast<std::size_t>(rows * cols), 0)};
  const auto plane = rows * cols;
  for (std::int64_t n = 0; n < plane; ++n) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < classes; ++c) {
      if (d[c * plane + n] > d[best * plane + n]) best = c;
    }
    g.data[static_cast<std::size_t>(n)] = static_cast<Label>(best);
  }
  return g;
}

VolumePrediction predict_volume(const ProbabilityFn& forward, const Volume& v, std::int64_t num_classes, int axis) {
  torch::NoGradGuard guard;
  VolumePrediction out;
  out.labels = LabelVolume{Grid3<Label>(v.shape(), 0), v.spacing, static_cast<int>(num_classes)};
  for (std::int64_t c = 0; c < num_classes; ++c) out.probabilities.push_back(Volume{Grid3<float>(v.shape()), v.spacing});
  const auto n = slice_count(v.shape(), axis);
  for (std::int64_t s = 0; s < n; ++s) {
    const auto img = extract_slice(v, axis, s);
    const auto x = torch::from_blob(const_cast<float*>(img.data.data()), {1, 1, img.rows, img.cols}, torch::kFloat32).clone();
    const auto probs = forward(x);
    if (probs.dim() != 4 || probs.size(1) != num_classes || probs.size(2) != img.rows || probs.size(3) != img.cols) {
      throw ShapeError("predict_volume: network output does not match the slice shape");
    }
    insert_slice(out.labels.data, axis, s, argmax_labels(probs[0]));
    for (std::int64_t c = 0; c < num_classes; ++c) {
      insert_slice(out.probabilities[static_cast<std::size_t>(c)].data, axis, s, tensor_to_grid(probs[0][c]));
    }
  }
  return out;
}

VolumePrediction predict_volume(UNet2D& net, const Volume& v, int axis) {
  configure_torch_runtime();
  net->eval();
  return predict_volume([&](const torch::Tensor& x) { return net->forward(x); }, v, net->config().num_classes, axis);
}

}  // namespace cmada
