#include "cmada/translation.hpp"

#include <algorithm>

#include "cmada/rng.hpp"
#include "cmada/slices.hpp"
#include "cmada/tensors.hpp"

namespace cmada {

std::string to_string(GeneratorLossMode m) {
  return m == GeneratorLossMode::saturating ? "saturating" : "non_saturating";
}

GeneratorLossMode generator_loss_mode_from_string(const std::string& s) {
  if (s == "saturating") return GeneratorLossMode::saturating;
  if (s == "non_saturating") return GeneratorLossMode::non_saturating;
  throw ConfigError("unknown generator loss mode '" + s + "'");
}

void TranslationObjectiveConfig::validate() const {
  if (cycle_weight < 0.0) throw ConfigError("cycle weight must be >= 0");
  if (!(eps > 0.0 && eps <= 1e-3)) throw ConfigError("log clamp eps must be in (0, 1e-3]");
  if (epochs < 1 || batch_size < 1 || max_steps < 0) throw ConfigError("epochs and batch size must be >= 1");
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  generator.validate();
  discriminator.validate();
}

void check_probabilities(const torch::Tensor& p, const char* who) {
  if (p.numel() == 0) throw ValidationError(std::string(who) + ": empty probability grid");
  const auto d = p.detach();
  const bool ok = (d >= 0).all().item<bool>() && (d <= 1).all().item<bool>();  // false for NaN
  if (!ok) throw ValidationError(std::string(who) + ": probabilities must lie in [0, 1]");
}

torch::Tensor gan_loss_discriminator(const torch::Tensor& d_real, const torch::Tensor& d_fake, double eps) {
  check_probabilities(d_real, "gan_loss_discriminator");
  check_probabilities(d_fake, "gan_loss_discriminator");
  return -torch::log(d_real.clamp(eps, 1.0 - eps)).mean() - torch::log(1.0 - d_fake.clamp(eps, 1.0 - eps)).mean();
}

torch::Tensor gan_loss_generator(const torch::Tensor& d_fake, GeneratorLossMode mode, double eps) {
  check_probabilities(d_fake, "gan_loss_generator");
  const auto p = d_fake.clamp(eps, 1.0 - eps);
  if (mode == GeneratorLossMode::saturating) return torch::log(1.0 - p).mean();
  return -torch::log(p).mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x_s, const torch::Tensor& rec_s, const torch::Tensor& x_t,
                         const torch::Tensor& rec_t) {
  if (x_s.sizes() != rec_s.sizes() || x_t.sizes() != rec_t.sizes()) {
    throw ShapeError("cycle_loss: reconstruction shape differs from its input");
  }
  return (rec_s - x_s).abs().mean() + (rec_t - x_t).abs().mean();
}

TranslationLosses translation_objective(const torch::Tensor& x_s, const torch::Tensor& x_t, const TensorMap& g_s,
                                        const TensorMap& g_t, const TensorMap& d_s, const TensorMap& d_t,
                                        const TranslationObjectiveConfig& cfg) {
  TranslationLosses l;
  const auto fake_t = g_s(x_s);
  const auto fake_s = g_t(x_t);
  l.adversarial_s = gan_loss_generator(d_s(fake_t), cfg.mode, cfg.eps);
  l.adversarial_t = gan_loss_generator(d_t(fake_s), cfg.mode, cfg.eps);
  l.cycle = cycle_loss(x_s, g_t(fake_t), x_t, g_s(fake_s));
  l.generator_total = l.adversarial_s + l.adversarial_t + cfg.cycle_weight * l.cycle;
  l.discriminator_s = gan_loss_discriminator(d_s(x_t), d_s(fake_t.detach()), cfg.eps);
  l.discriminator_t = gan_loss_discriminator(d_t(x_s), d_t(fake_s.detach()), cfg.eps);
  return l;
}

TranslationModel make_translation_model(const TranslationObjectiveConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto dcfg = cfg.discriminator;
  dcfg.in_channels = cfg.generator.channels;
  return {make_generator(cfg.generator, mix_seed(seed, 1)), make_generator(cfg.generator, mix_seed(seed, 2)),
          make_discriminator(dcfg, mix_seed(seed, 3)), make_discriminator(dcfg, mix_seed(seed, 4))};
}

namespace {

double decay_factor(std::int64_t epoch, std::int64_t epochs) {
  const std::int64_t constant = (epochs + 1) / 2;
  const std::int64_t decay = epochs - constant;
  const auto over = std::max<std::int64_t>(0, epoch + 1 - constant);
  return 1.0 - static_cast<double>(over) / static_cast<double>(decay + 1);
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups()) g.options().set_lr(lr);
}

std::vector<torch::Tensor> joint_parameters(TranslationModel& m) {
  auto p = m.g_s->parameters();
  auto q = m.g_t->parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

}  // namespace

TranslationResult train_translation(std::span<const SliceSample> source, std::span<const SliceSample> target,
                                    const TranslationObjectiveConfig& cfg, std::uint64_t seed,
                                    const std::string& config_hash) {
  cfg.validate();
  if (source.empty() || target.empty()) throw ValidationError("train_translation: empty dataset");
  configure_torch_runtime();

  TranslationResult r;
  r.model = make_translation_model(cfg, seed);
  auto& m = r.model;
  for (auto* mod : std::initializer_list<torch::nn::Module*>{m.g_s.get(), m.g_t.get(), m.d_s.get(), m.d_t.get()}) {
    mod->train();
  }
  const auto adam = torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2});
  torch::optim::Adam opt_g(joint_parameters(m), adam);
  torch::optim::Adam opt_ds(m.d_s->parameters(), adam);
  torch::optim::Adam opt_dt(m.d_t->parameters(), adam);

  SliceIterator src_it(source, cfg.batch_size, mix_seed(seed, 11));
  SliceIterator tgt_it(target, cfg.batch_size, mix_seed(seed, 12));
  const auto steps_per_epoch = std::max(src_it.batches_per_epoch(), tgt_it.batches_per_epoch());

  auto record = [&](const char* name, const torch::Tensor& loss) {
    const double v = loss.item<double>();
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + name + " loss", r.steps);
    r.history.add(r.steps, name, v);
  };

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * decay_factor(epoch, cfg.epochs);
    set_lr(opt_g, lr);
    set_lr(opt_ds, lr);
    set_lr(opt_dt, lr);
    src_it.start_epoch(epoch);
    tgt_it.start_epoch(epoch);
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      if (cfg.max_steps > 0 && r.steps >= cfg.max_steps) break;
      auto src_batch = src_it.next_in_epoch();
      if (!src_batch) src_batch = src_it.next();
      auto tgt_batch = tgt_it.next_in_epoch();
      if (!tgt_batch) tgt_batch = tgt_it.next();
      const auto x_s = images_to_tensor(*src_batch);
      const auto x_t = images_to_tensor(*tgt_batch);

      const auto fake_t = m.g_s->forward(x_s);
      const auto fake_s = m.g_t->forward(x_t);

      opt_ds.zero_grad();
      const auto loss_ds = gan_loss_discriminator(m.d_s->forward(x_t), m.d_s->forward(fake_t.detach()), cfg.eps);
      record("D_S", loss_ds);
      loss_ds.backward();
      opt_ds.step();

      opt_dt.zero_grad();
      const auto loss_dt = gan_loss_discriminator(m.d_t->forward(x_s), m.d_t->forward(fake_s.detach()), cfg.eps);
      record("D_T", loss_dt);
      loss_dt.backward();
      opt_dt.step();

      set_requires_grad(*m.d_s, false);
      set_requires_grad(*m.d_t, false);
      opt_g.zero_grad();
      const auto adv_s = gan_loss_generator(m.d_s->forward(fake_t), cfg.mode, cfg.eps);
      const auto adv_t = gan_loss_generator(m.d_t->forward(fake_s), cfg.mode, cfg.eps);
      const auto cyc = cycle_loss(x_s, m.g_t->forward(fake_t), x_t, m.g_s->forward(fake_s));
      const auto total = adv_s + adv_t + cfg.cycle_weight * cyc;
      record("G_adv_S", adv_s);
      record("G_adv_T", adv_t);
      record("cycle", cyc);
      record("G_total", total);
      total.backward();
      opt_g.step();
      set_requires_grad(*m.d_s, true);
      set_requires_grad(*m.d_t, true);
      ++r.steps;
    }
  }

  auto& ck = r.checkpoint;
  ck.phase = Phase::translation;
  ck.step = r.steps;
  ck.seed = seed;
  ck.config_hash = config_hash;
  ck.meta["generator"] = cfg.generator;
  auto dcfg = cfg.discriminator;
  dcfg.in_channels = cfg.generator.channels;
  ck.meta["discriminator"] = dcfg;
  capture_module(ck, "g_s", *m.g_s);
  capture_module(ck, "g_t", *m.g_t);
  capture_module(ck, "d_s", *m.d_s);
  capture_module(ck, "d_t", *m.d_t);
  capture_adam(ck, "opt_g/g_s", opt_g, *m.g_s);
  capture_adam(ck, "opt_g/g_t", opt_g, *m.g_t);
  capture_adam(ck, "opt_ds", opt_ds, *m.d_s);
  capture_adam(ck, "opt_dt", opt_dt, *m.d_t);
  return r;
}

TranslationModel load_translation_model(const Checkpoint& ck) {
  if (ck.phase != Phase::translation) throw ValidationError("not a translation checkpoint");
  const auto gcfg = ck.meta.at("generator").get<GeneratorConfig>();
  const auto dcfg = ck.meta.at("discriminator").get<DiscriminatorConfig>();
  TranslationModel m{ResNetGenerator(gcfg), ResNetGenerator(gcfg), PatchDiscriminator(dcfg), PatchDiscriminator(dcfg)};
  restore_module(ck, "g_s", *m.g_s);
  restore_module(ck, "g_t", *m.g_t);
  restore_module(ck, "d_s", *m.d_s);
  restore_module(ck, "d_t", *m.d_t);
  return m;
}

std::vector<SliceSample> translate_dataset(ResNetGenerator& g_s, std::span<const SliceSample> source,
                                           std::int64_t batch_size) {
  configure_torch_runtime();
  torch::NoGradGuard guard;
  g_s->eval();
  std::vector<SliceSample> out;
  out.reserve(source.size());
  for (std::size_t begin = 0; begin < source.size(); begin += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(source.size(), begin + static_cast<std::size_t>(batch_size));
    SliceBatch batch;
    for (auto i = begin; i < end; ++i) batch.push_back(&source[i]);
    const auto mapped = g_s->forward(images_to_tensor(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      SliceSample s = *batch[i];
      s.image = tensor_to_grid(mapped[static_cast<std::int64_t>(i)]);
      s.domain = Domain::mapped_source;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace cmada
