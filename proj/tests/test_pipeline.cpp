#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmada/pipeline.hpp"

using namespace cmada;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cmada_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

EvalReport fake_report(const std::string& method, double dice) {
  EvalReport r;
  r.method = method;
  r.volumes.push_back({"t0", {dice, dice}, {1.0, std::nullopt}});
  r.dice = {{dice, 0.0, 1, 0}, {dice, 0.0, 1, 0}};
  r.assd = {{1.0, 0.0, 1, 0}, {0.0, 0.0, 0, 1}};
  return r;
}

void write_fake_evaluation(const RunConfig& cfg, const std::string& hash) {
  const auto dir = evaluation_dir(cfg);
  fs::create_directories(dir);
  auto j = report_to_json(fake_report(method_label(cfg), 0.5));
  j["config_hash"] = hash;
  std::ofstream(dir / "report.json") << j.dump();
  std::ofstream(dir / "stage.json") << nlohmann::json{{"stage", "evaluate"}, {"config_hash", hash}}.dump();
}

}  // namespace

TEST_CASE("presets") {
  const auto desk = preset_config("desk");
  CHECK(desk.preprocessing.shape == Shape3{64, 64, 16});
  CHECK(desk.adaptation.discriminator.in_channels == 9);
  const auto cm = preset_config("crossmoda");
  CHECK(cm.preprocessing.spacing == Spacing3{0.468, 0.468, 1.5});
  CHECK(cm.preprocessing.shape == Shape3{448, 448, 120});
  CHECK(cm.translation.epochs == 40);
  CHECK(cm.translation.cycle_weight == 10.0);
  CHECK(cm.translation.generator.residual_blocks == 9);
  CHECK(cm.supervised.train.epochs == 500);
  CHECK(cm.adaptation.epochs == 100);
  CHECK_NOTHROW(desk.validate());
  CHECK_NOTHROW(cm.validate());
  CHECK_THROWS_AS(preset_config("laptop"), ConfigError);
}

TEST_CASE("config json round trip, overrides and unknown keys") {
  const auto base = preset_config("desk");
  const auto back = apply_json(preset_config("crossmoda"), to_json(base));
  CHECK(to_json(back) == to_json(base));
  const auto c = apply_json(base, nlohmann::json::parse(R"({"seed": 3, "translation": {"cycle_weight": 2.5}})"));
  CHECK(c.seed == 3);
  CHECK(c.translation.cycle_weight == 2.5);
  CHECK(c.translation.epochs == base.translation.epochs);
  CHECK_THROWS_AS(apply_json(base, nlohmann::json::parse(R"({"sed": 3})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, nlohmann::json::parse(R"({"translation": {"lamda": 1}})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, nlohmann::json::parse(R"({"variant": "both"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(base, nlohmann::json::parse(R"({"seed": "x"})")), ConfigError);

  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"preset": "crossmoda", "seed": 9})";
  const auto loaded = load_run_config(dir / "c.json");
  CHECK(loaded.seed == 9);
  CHECK(loaded.preprocessing.shape == Shape3{448, 448, 120});
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("ablation variants") {
  const auto base = preset_config("desk");
  CHECK(ablation_variant(base, Variant::full).adaptation.discriminator.in_channels == 9);
  const auto seg = ablation_variant(base, Variant::seg_only_disc);
  CHECK(seg.adaptation.input_mode == DiscInputMode::seg_only);
  CHECK(seg.adaptation.discriminator.in_channels == 3);
  auto has = [](const RunConfig& c, Stage s) {
    const auto p = stage_plan(c);
    return std::find(p.begin(), p.end(), s) != p.end();
  };
  CHECK(has(ablation_variant(base, Variant::full), Stage::adapt));
  CHECK_FALSE(has(ablation_variant(base, Variant::s1_only), Stage::adapt));
  CHECK(has(ablation_variant(base, Variant::s1_only), Stage::translate));
  CHECK_FALSE(has(ablation_variant(base, Variant::no_adapt), Stage::adapt));
  CHECK_FALSE(has(ablation_variant(base, Variant::no_adapt), Stage::translate));
  CHECK_THROWS_AS(variant_from_string("partial"), ConfigError);

  CHECK(config_hash(ablation_variant(base, Variant::no_adapt)) == config_hash(base));
  auto other = base;
  other.seed = 8;
  CHECK(config_hash(other) != config_hash(base));
  auto res = base;
  res.supervised.architecture = Architecture::residual_unet;
  res = ablation_variant(res, Variant::s1_only);
  CHECK(res.supervised.train.unet.residual);
  CHECK(method_label(res) == "S1+residualU-Net");
  CHECK(method_label(ablation_variant(base, Variant::s1_only)) == "S1+U-Net");
  CHECK(method_label(seg) == "C-MADA([seg])");
  CHECK(method_label(base) == "C-MADA");
}

TEST_CASE("holdout split") {
  auto [train, hold] = holdout_split({"c", "a", "e", "b", "d"}, 0.2);
  CHECK(train == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(hold == std::vector<std::string>{"e"});
  auto [t2, h2] = holdout_split({"a"}, 0.2);
  CHECK(t2.size() == 1);
  CHECK(h2.empty());
  auto [t3, h3] = holdout_split({"a", "b", "c"}, 0.0);
  CHECK(h3.empty());
}

TEST_CASE("stages refuse to run without their predecessors") {
  auto cfg = preset_config("desk");
  cfg.output_dir = scratch("missing");
  CHECK_THROWS_AS(run_stage(Stage::evaluate, cfg), MissingArtifactError);
  CHECK_THROWS_AS(run_stage(Stage::translate, cfg), MissingArtifactError);
  CHECK_THROWS_AS(run_stage(Stage::report, cfg), MissingArtifactError);
  try {
    run_stage(Stage::evaluate, cfg);
  } catch (const MissingArtifactError& e) {
    CHECK(std::string(e.what()).find("select") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(cfg.output_dir / ".lock"));
}

TEST_CASE("the lock file excludes a second writer") {
  auto cfg = preset_config("desk");
  cfg.output_dir = scratch("lock");
  {
    OutputLock held(cfg.output_dir);
    CHECK_THROWS_AS(run_stage(Stage::synth, cfg), Error);
  }
  CHECK_FALSE(fs::exists(cfg.output_dir / ".lock"));
}

TEST_CASE("synth and preprocess write hashed artifacts and refuse mismatches") {
  auto cfg = preset_config("desk");
  cfg.output_dir = scratch("stages");
  cfg.dataset.phantom.volumes_per_domain = 2;
  run_stage(Stage::synth, cfg);
  run_stage(Stage::preprocess, cfg);
  const auto stage = nlohmann::json::parse(slurp(cfg.output_dir / "preprocessed" / "stage.json"));
  CHECK(stage.at("config_hash") == config_hash(cfg));
  CHECK(stage.at("stage") == "preprocess");
  const auto meta = nlohmann::json::parse(slurp(cfg.output_dir / "preprocessed" / "metadata.json"));
  CHECK(meta.at("shape").get<Shape3>() == Shape3{64, 64, 16});

  const auto first = slurp(cfg.output_dir / "preprocessed" / "source" / "src000_image.cvol");
  run_stage(Stage::preprocess, cfg);
  CHECK(slurp(cfg.output_dir / "preprocessed" / "source" / "src000_image.cvol") == first);

  auto changed = cfg;
  changed.seed = 123;
  CHECK_THROWS_AS(run_stage(Stage::preprocess, changed), ConfigError);
  CHECK_NOTHROW(run_stage(Stage::preprocess, changed, {true}));
}

TEST_CASE("report orders rows as in the ablation table and refuses mixed hashes") {
  auto base = preset_config("desk");
  base.output_dir = scratch("report");
  const auto hash = config_hash(base);
  auto residual = base;
  residual.supervised.architecture = Architecture::residual_unet;
  for (const auto& c : {ablation_variant(base, Variant::s1_only), ablation_variant(base, Variant::no_adapt),
                        ablation_variant(residual, Variant::s1_only), ablation_variant(base, Variant::full),
                        ablation_variant(base, Variant::seg_only_disc)}) {
    write_fake_evaluation(c, hash);
  }
  const auto r = run_stage(Stage::report, base);
  const auto text = slurp(base.output_dir / "report" / "report.txt");
  const auto a = text.find("C-MADA  "), b = text.find("C-MADA([seg])"), c = text.find("S1+residualU-Net"),
             d = text.find("S1+U-Net"), e = text.find("U-Net(source-only)");
  REQUIRE(a != std::string::npos);
  REQUIRE(e != std::string::npos);
  CHECK(a < b);
  CHECK(b < c);
  CHECK(c < d);
  CHECK(d < e);
  CHECK(text.find("±") != std::string::npos);

  write_fake_evaluation(ablation_variant(base, Variant::full), "0000000000000000");
  CHECK_THROWS_AS(run_stage(Stage::report, base), ConfigError);
}

TEST_CASE("eval report json round trip") {
  const auto r = fake_report("m", 0.25);
  const auto back = report_from_json(report_to_json(r));
  CHECK(back.method == "m");
  CHECK(back.volumes[0].assd[1] == std::nullopt);
  CHECK(back.dice[1].mean == 0.25);
  CHECK(back.assd[1].excluded == 1);
}

TEST_CASE("a capped full run completes and reports finite values") {
  auto cfg = preset_config("desk");
  cfg.output_dir = scratch("smoke");
  cfg.dataset.phantom.volumes_per_domain = 3;
  cfg.translation.max_steps = 3;
  cfg.supervised.train.max_steps = 4;
  cfg.supervised.train.checkpoint_interval = 2;
  cfg.adaptation.max_steps = 4;
  cfg.adaptation.snapshot_interval = 2;
  for (auto stage : stage_plan(cfg)) run_stage(stage, cfg);
  const auto report = report_from_json(nlohmann::json::parse(slurp(evaluation_dir(cfg) / "report.json")));
  CHECK(report.method == "C-MADA");
  CHECK(std::isfinite(report.mean_foreground_dice()));
  const auto text = slurp(report_dir(cfg) / "report.txt");
  CHECK(text.find("C-MADA") != std::string::npos);
  CHECK(text.find(config_hash(cfg)) != std::string::npos);
}
