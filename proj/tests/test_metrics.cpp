#include <doctest.h>

#include "cmada/metrics.hpp"
#include "cmada/selection.hpp"
#include "oracles.hpp"

using namespace cmada;

namespace {

BinaryMask box(Shape3 s, std::array<std::int64_t, 3> lo, std::array<std::int64_t, 3> hi) {
  BinaryMask m(s, 0);
  for (auto k = lo[2]; k < hi[2]; ++k)
    for (auto j = lo[1]; j < hi[1]; ++j)
      for (auto i = lo[0]; i < hi[0]; ++i) m(i, j, k) = 1;
  return m;
}

BinaryMask shifted(const BinaryMask& m, std::array<std::int64_t, 3> o) {
  BinaryMask out(m.shape(), 0);
  const auto s = m.shape();
  for (std::int64_t k = 0; k < s[2]; ++k)
    for (std::int64_t j = 0; j < s[1]; ++j)
      for (std::int64_t i = 0; i < s[0]; ++i)
        if (m(i, j, k)) out(i + o[0], j + o[1], k + o[2]) = 1;
  return out;
}

}  // namespace

TEST_CASE("dice fixtures") {
  const auto a = box({4, 4, 2}, {0, 0, 0}, {2, 2, 1});
  CHECK(dice_coefficient(a, a) == 1.0);
  CHECK(dice_coefficient(a, box({4, 4, 2}, {2, 2, 1}, {4, 4, 2})) == 0.0);
  BinaryMask p({3, 3, 1}, 0), g({3, 3, 1}, 0);
  p(0, 0, 0) = p(1, 0, 0) = p(2, 0, 0) = p(0, 1, 0) = 1;
  g(1, 0, 0) = g(2, 0, 0) = g(1, 1, 0) = g(2, 2, 0) = 1;
  CHECK(dice_coefficient(p, g) == 0.5);
  CHECK(dice_coefficient(BinaryMask({2, 2, 2}, 0), BinaryMask({2, 2, 2}, 0)) == 1.0);
  CHECK_THROWS_AS(dice_coefficient(p, BinaryMask({3, 3, 2}, 0)), ShapeError);
}

TEST_CASE("surface fixtures") {
  BinaryMask one({3, 3, 3}, 0);
  one(1, 1, 1) = 1;
  CHECK(extract_surface(one) == std::vector<std::int64_t>{one.index(1, 1, 1)});
  const auto cube = box({3, 3, 3}, {0, 0, 0}, {3, 3, 3});
  const auto s = extract_surface(cube);
  CHECK(s.size() == 26);
  CHECK(std::find(s.begin(), s.end(), cube.index(1, 1, 1)) == s.end());
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto m = oracle::random_mask(rng, {5, 5, 5});
    CHECK(extract_surface(m) == oracle::surface(m));
  }
}

TEST_CASE("assd fixtures") {
  const auto a = box({6, 6, 6}, {1, 1, 1}, {4, 4, 4});
  CHECK(assd(a, a, {1, 1, 1}) == 0.0);
  BinaryMask p({1, 1, 8}, 0), g({1, 1, 8}, 0);
  p(0, 0, 1) = 1;
  g(0, 0, 4) = 1;
  CHECK(assd(p, g, {1.0, 1.0, 1.5}) == 4.5);
  CHECK_FALSE(assd(p, BinaryMask({1, 1, 8}, 0), {1, 1, 1}).has_value());
}

TEST_CASE("assd equals the all-pairs oracle exactly on random masks") {
  Rng rng(2024);
  const Spacing3 aniso{0.468, 0.468, 1.5};
  for (int t = 0; t < 20; ++t) {
    const Shape3 s{static_cast<std::int64_t>(4 + rng.below(13)), static_cast<std::int64_t>(4 + rng.below(13)),
                   static_cast<std::int64_t>(2 + rng.below(15))};
    const auto p = oracle::random_mask(rng, s);
    const auto g = oracle::random_mask(rng, s);
    const auto expect = oracle::assd(p, g, aniso);
    const auto got = assd(p, g, aniso);
    REQUIRE(got.has_value());
    CHECK(*got == *expect);
  }
}

TEST_CASE("assd symmetry, spacing homogeneity and translation invariance") {
  Rng rng(77);
  for (int t = 0; t < 10; ++t) {
    const Shape3 s{12, 12, 8};
    auto p = oracle::random_mask(rng, {8, 8, 5});
    auto g = oracle::random_mask(rng, {8, 8, 5});
    BinaryMask pp(s, 0), gg(s, 0);
    for (std::int64_t k = 0; k < 5; ++k)
      for (std::int64_t j = 0; j < 8; ++j)
        for (std::int64_t i = 0; i < 8; ++i) {
          pp(i, j, k) = p(i, j, k);
          gg(i, j, k) = g(i, j, k);
        }
    const Spacing3 sp{0.7, 1.1, 2.5};
    const auto ab = assd(pp, gg, sp), ba = assd(gg, pp, sp);
    CHECK(*ab == doctest::Approx(*ba).epsilon(1e-12));
    CHECK(*assd(pp, gg, {1.4, 2.2, 5.0}) == doctest::Approx(2.0 * *ab).epsilon(1e-12));
    const auto ps = shifted(pp, {3, 2, 2}), gs = shifted(gg, {3, 2, 2});
    CHECK(*assd(ps, gs, sp) == *ab);
    CHECK(dice_coefficient(ps, gs) == dice_coefficient(pp, gg));
  }
}

TEST_CASE("evaluate composes the per-volume metrics") {
  LabelVolume t{Grid3<Label>({8, 8, 4}), {1, 1, 2}, 3};
  for (std::int64_t i = 2; i < 5; ++i) t.data(i, 3, 1) = 1;
  t.data(6, 6, 2) = 2;
  LabelVolume p = t;
  p.data(2, 3, 1) = 0;
  p.data(6, 6, 2) = 0;
  const std::vector<LabelVolume> preds{t, p}, truths{t, t};
  const std::vector<std::string> ids{"x", "y"};
  const auto r = evaluate(preds, truths, t.spacing, ids, "m");
  REQUIRE(r.dice.size() == 2);
  CHECK(r.volumes[1].dice[0] == dice_coefficient(class_mask(p, 1), class_mask(t, 1)));
  CHECK(r.volumes[1].assd[0] == assd(class_mask(p, 1), class_mask(t, 1), t.spacing));
  CHECK(r.dice[0].mean == doctest::Approx((1.0 + r.volumes[1].dice[0]) / 2));
  CHECK(r.assd[1].excluded == 1);
  CHECK(r.assd[1].defined == 1);
  CHECK(r.assd[1].stddev == 0.0);

  const auto same = evaluate(std::vector<LabelVolume>{t}, std::vector<LabelVolume>{t}, t.spacing);
  CHECK(same.dice[0].mean == 1.0);
  CHECK(same.dice[0].stddev == 0.0);
  CHECK(same.assd[0].mean == 0.0);
  CHECK_THROWS_AS(evaluate(preds, std::vector<LabelVolume>{t}, t.spacing), ValidationError);
  CHECK(format_table(std::vector<EvalReport>{r}).find("(1x)") != std::string::npos);
}

TEST_CASE("area stats count every slice") {
  std::vector<Grid2<Label>> masks(4, Grid2<Label>{2, 2, std::vector<Label>(4, 0)});
  masks[0].data = {1, 1, 2, 0};
  masks[1].data = {1, 0, 0, 0};
  const auto st = source_area_stats(masks);
  CHECK(st.slice_count == 4);
  CHECK(st.avg_pixels[0] == 0.75);
  CHECK(st.avg_pixels[1] == 0.25);
  const auto r = area_ratio(masks, st);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 1.0);
  std::vector<Grid2<Label>> none(2, Grid2<Label>{2, 2, std::vector<Label>(4, 0)});
  const auto zero = source_area_stats(none);
  CHECK_THROWS_AS(area_ratio(none, zero), ValidationError);
  const std::vector<int> skip{1, 2};
  CHECK(area_ratio(none, zero, skip) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("validation loss and selection") {
  CHECK(validation_loss(std::vector<double>{0.5, 2.0}, std::vector<double>{0.0, 0.0}) == 1.5);
  std::vector<CandidateScore> c{{"a", 10, {}, {}, 0.4}, {"b", 20, {}, {}, 0.3}, {"c", 30, {}, {}, 0.3},
                                {"d", 40, {}, {}, 0.9}};
  CHECK(select_checkpoint(c).id == "c");
  CHECK_THROWS(select_checkpoint(std::vector<CandidateScore>{}));
}
