#include <doctest.h>

#include "cmada/adaptation.hpp"
#include "cmada/phantom.hpp"
#include "cmada/segmentation.hpp"
#include "cmada/slices.hpp"
#include "cmada/tensors.hpp"
#include "cmada/translation.hpp"

using namespace cmada;

namespace {

struct Toy {
  PhantomDataset data;
  std::vector<SliceSample> source;
  std::vector<SliceSample> target;
};

Toy toy(int volumes, std::uint64_t seed = 3) {
  PhantomSpec spec;
  spec.volumes_per_domain = volumes;
  spec.shape = {32, 32, 5};
  spec.tumor = {{0.4, 0.4, 0.4}, {0.6, 0.6, 0.6}, {4.0, 4.0, 1.0}, {6.0, 6.0, 1.5}};
  spec.cochlea = {{0.25, 0.25, 0.4}, {0.75, 0.75, 0.6}, {2.0, 2.0, 1.0}, {2.5, 2.5, 1.0}};
  spec.distractor = {{0.2, 0.2, 0.3}, {0.8, 0.8, 0.7}, {2.0, 2.0, 1.0}, {4.0, 4.0, 1.0}};
  spec.seed = seed;
  Toy t{make_phantom_dataset(spec), {}, {}};
  std::vector<VolumeRef> s, g;
  for (const auto& v : t.data.source) s.push_back({v.id, &v.image, &v.label, Domain::source});
  for (const auto& v : t.data.target) g.push_back({v.id, &v.image, nullptr, Domain::target});
  t.source = slice_volumes(s);
  t.target = slice_volumes(g);
  return t;
}

TranslationObjectiveConfig tiny_translation() {
  TranslationObjectiveConfig c;
  c.generator = {1, 4, 1};
  c.discriminator = {1, 4, 2};
  c.batch_size = 2;
  c.epochs = 1;
  return c;
}

SupervisedConfig tiny_supervised() {
  SupervisedConfig c;
  c.unet = {1, 3, 8, 3, false};
  c.batch_size = 4;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("translation step count, determinism and mapping contract") {
  auto t = toy(1);
  std::vector<SliceSample> s(t.source.begin(), t.source.begin() + 4), g(t.target.begin(), t.target.begin() + 4);
  const auto cfg = tiny_translation();
  auto a = train_translation(s, g, cfg, 11, "h");
  auto b = train_translation(s, g, cfg, 11, "h");
  CHECK(a.steps == 2);
  CHECK(a.checkpoint.step == 2);
  CHECK(a.checkpoint.config_hash == "h");
  CHECK(a.history == b.history);
  for (const auto& r : a.history.records()) CHECK(std::isfinite(r.value));

  const auto mapped = translate_dataset(a.model.g_s, s);
  REQUIRE(mapped.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(mapped[i].domain == Domain::mapped_source);
    CHECK(mapped[i].mask == s[i].mask);
    for (float x : mapped[i].image.data) CHECK(std::abs(x) < 1.0f);
  }

  auto restored = load_translation_model(a.checkpoint);
  const auto again = translate_dataset(restored.g_s, s);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(again[i].image == mapped[i].image);
}

TEST_CASE("cycle loss falls on identical domains and the cycle weight matters") {
  auto t = toy(1);
  std::vector<SliceSample> s(t.source.begin(), t.source.begin() + 4);
  auto cfg = tiny_translation();
  cfg.epochs = 100;  // 200 steps
  cfg.cycle_weight = 1e4;
  const auto strong = train_translation(s, s, cfg, 2);
  const auto cyc = strong.history.series("cycle");
  CHECK(strong.steps == 200);
  CHECK(cyc.back() < cyc.front());
  cfg.cycle_weight = 0.0;
  const auto none = train_translation(s, s, cfg, 2);
  const auto cyc0 = none.history.series("cycle");
  double tail_strong = 0, tail_none = 0;
  for (int i = 0; i < 20; ++i) {
    tail_strong += cyc[cyc.size() - 1 - i];
    tail_none += cyc0[cyc0.size() - 1 - i];
  }
  CHECK(tail_strong < tail_none);
}

TEST_CASE("supervised training contract") {
  auto t = toy(1);
  std::vector<SliceSample> eight(t.source.begin(), t.source.begin() + 5);
  eight.insert(eight.end(), t.source.begin(), t.source.begin() + 3);
  auto cfg = tiny_supervised();
  auto a = train_supervised(eight, cfg, 5, "h");
  CHECK(a.steps == 2);
  auto b = train_supervised(eight, cfg, 5, "h");
  CHECK(a.history == b.history);

  auto unlabeled = eight;
  unlabeled[3].mask.reset();
  CHECK_THROWS_AS(train_supervised(unlabeled, cfg, 5), ValidationError);

  cfg.epochs = 3;
  cfg.checkpoint_interval = 2;
  const auto p = train_supervised(eight, cfg, 5);
  REQUIRE(p.periodic.size() == 3);
  CHECK(p.periodic[0].step == 2);
  CHECK(p.periodic[2].step == 6);
  CHECK(p.final_checkpoint.step == 6);
}

TEST_CASE("supervised loss halves within 300 toy steps") {
  auto t = toy(2);
  std::vector<SliceSample> ten(t.source.begin(), t.source.begin() + 10);
  auto cfg = tiny_supervised();
  cfg.batch_size = 2;
  cfg.max_steps = 300;
  cfg.epochs = 1000;
  const auto r = train_supervised(ten, cfg, 1);
  const auto h = r.history.series("seg");
  REQUIRE(h.size() == 300);
  CHECK(h.back() < 0.5 * h.front());
}

TEST_CASE("predict_volume contracts") {
  auto t = toy(1);
  const auto& v = t.data.source[0].image;
  int calls = 0;
  const auto uniform = [&](const torch::Tensor& x) {
    ++calls;
    return torch::full({x.size(0), 3, x.size(2), x.size(3)}, 1.0 / 3);
  };
  const auto p = predict_volume(uniform, v, 3);
  CHECK(calls == v.shape()[2]);
  CHECK(p.labels.shape() == v.shape());
  CHECK(p.labels.spacing == v.spacing);
  for (auto x : p.labels.data.values()) CHECK(x == 0);

  auto probs = torch::tensor({0.2, 0.5, 0.3}).reshape({3, 1, 1});
  CHECK(argmax_labels(probs)(0, 0) == 1);
  auto tie = torch::tensor({0.2, 0.4, 0.4}).reshape({3, 1, 1});
  CHECK(argmax_labels(tie)(0, 0) == 1);

  auto net = make_unet({1, 3, 8, 3, false}, 1);
  const auto q = predict_volume(net, v);
  CHECK(q.probabilities.size() == 3);
  CHECK(q.labels.shape() == v.shape());
}

TEST_CASE("adaptation contract") {
  auto t = toy(1);
  auto sup = tiny_supervised();
  const auto s1 = train_supervised(t.source, sup, 1, "h");
  AdaptConfig cfg;
  cfg.discriminator = {9, 4, 2};
  cfg.batch_size = 2;
  cfg.epochs = 1;  // 3 steps for 5 slices
  cfg.snapshot_interval = 3;
  auto a = train_adaptation(s1.final_checkpoint, t.source, t.target, cfg, 4, "h");
  CHECK(a.steps == 3);
  REQUIRE(a.candidates.size() == 1);
  CHECK(a.candidates[0].step == 3);
  CHECK(a.supervised_evaluations == 3);
  auto loaded = load_unet(a.candidates[0]);
  const auto pred = predict_volume(loaded, t.data.target[0].image);
  for (const auto& pm : pred.probabilities)
    for (float x : pm.data.values()) CHECK(std::isfinite(x));

  cfg.snapshot_interval = 1;
  CHECK(train_adaptation(s1.final_checkpoint, t.source, t.target, cfg, 4, "h").candidates.size() == 3);

  cfg.supervised_step = false;
  auto off = train_adaptation(s1.final_checkpoint, t.source, t.target, cfg, 4, "h");
  CHECK(off.supervised_evaluations == 0);
  CHECK(off.history.series("seg").empty());

  cfg.supervised_step = true;
  cfg.input_mode = DiscInputMode::seg_only;
  const auto seg = train_adaptation(s1.final_checkpoint, t.source, t.target, cfg, 4, "h");
  CHECK(seg.discriminator->config().in_channels == 3);
  CHECK(a.discriminator->config().in_channels == 9);
}

TEST_CASE("target masks never enter adaptation") {
  auto t = toy(1);
  const auto s1 = train_supervised(t.source, tiny_supervised(), 1);
  AdaptConfig cfg;
  cfg.discriminator = {9, 4, 2};
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.snapshot_interval = 10;
  auto poisoned = t.target;
  for (auto& s : poisoned) s.mask = Grid2<Label>{s.image.rows, s.image.cols, std::vector<Label>(s.image.data.size(), 2)};
  const auto clean = train_adaptation(s1.final_checkpoint, t.source, t.target, cfg, 4);
  const auto dirty = train_adaptation(s1.final_checkpoint, t.source, poisoned, cfg, 4);
  CHECK(clean.history == dirty.history);
  CHECK_THROWS_AS(train_adaptation(train_translation(t.source, t.target, tiny_translation(), 1).checkpoint, t.source,
                                   t.target, cfg, 4),
                  ValidationError);
}
