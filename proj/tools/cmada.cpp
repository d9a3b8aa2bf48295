#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cmada/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string preset = "desk";
  std::string variant;
  std::string out;
  bool allow_hash_mismatch = false;
};

cmada::RunConfig resolve(const Flags& f) {
  auto cfg = f.config.empty() ? cmada::preset_config(f.preset) : cmada::load_run_config(f.config, f.preset);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.variant.empty()) cfg = cmada::ablation_variant(cfg, cmada::variant_from_string(f.variant));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C-MADA: cycle-consistent translation + output-space adversarial adaptation for segmentation"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> stages{
      {"synth", "write the phantom dataset"},
      {"preprocess", "resample, conform, clip and normalize every volume"},
      {"translate", "train the source/target translation and map the source volumes"},
      {"train-seg", "train the U-Net on (mapped) source slices"},
      {"adapt", "adversarial output-space adaptation from the trained U-Net"},
      {"select", "pick an adaptation candidate by the unsupervised validation loss"},
      {"evaluate", "dice and ASSD of the selected model on the target volumes"},
      {"report", "collect every evaluated method into one table"},
      {"run", "run all stages of the selected variant in order"},
      {"show-config", "print the resolved config and its hash"}};
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run config");
    sub->add_option("--seed", flags.seed, "global seed");
    sub->add_option("--preset", flags.preset, "desk or crossmoda")->check(CLI::IsMember({"desk", "crossmoda"}));
    sub->add_option("--variant", flags.variant, "full, seg_only_disc, s1_only or no_adapt")
        ->check(CLI::IsMember({"full", "seg_only_disc", "s1_only", "no_adapt"}));
    sub->add_option("--out", flags.out, "output directory");
    sub->add_flag("--allow-hash-mismatch", flags.allow_hash_mismatch,
                  "accept artifacts produced under a different config");
  }
  CLI11_PARSE(app, argc, argv);

  const auto name = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(flags);
    const cmada::StageOptions opt{flags.allow_hash_mismatch};
    if (name == "show-config") {
      std::cout << cmada::to_json(cfg).dump(2) << "\n" << "config_hash " << cmada::config_hash(cfg) << "\n";
      return 0;
    }
    std::vector<cmada::Stage> plan;
    if (name == "run") {
      plan = cmada::stage_plan(cfg);
    } else {
      plan.push_back(cmada::stage_from_string(name));
    }
    for (auto stage : plan) {
      const auto r = cmada::run_stage(stage, cfg, opt);
      std::cout << fmt::format("[{}] {}\n", cmada::to_string(stage), r.summary);
    }
  } catch (const cmada::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cmada::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
