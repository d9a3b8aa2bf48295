#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmada/adaptation.hpp"
#include "cmada/phantom.hpp"
#include "cmada/preprocess.hpp"
#include "cmada/segmentation.hpp"
#include "cmada/translation.hpp"

namespace cmada {

enum class Variant {
  full,           // translation + supervised + adaptation with 3C-channel discriminator input
  seg_only_disc,  // discriminator sees the predicted segmentation only
  s1_only,        // translation + supervised, no adaptation
  no_adapt,       // supervised on raw source only
};
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class Architecture { unet, residual_unet };
std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

enum class Stage { synth, preprocess, translate, train_seg, adapt, select, evaluate, report };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct DatasetSection {
  std::filesystem::path manifest;  // empty: synthesize phantoms
  PhantomSpec phantom;
};

struct SupervisedSection {
  SupervisedConfig train;
  Architecture architecture = Architecture::unet;
};

struct SelectionSection {
  double holdout_fraction = 0.2;
  std::vector<int> excluded_classes;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 7;
  std::filesystem::path output_dir = "runs/desk";
  Variant variant = Variant::full;
  DatasetSection dataset;
  PreprocessConfig preprocessing;
  TranslationObjectiveConfig translation;
  SupervisedSection supervised;
  AdaptConfig adaptation;
  SelectionSection selection;

  void validate() const;
};

/// Desk-scale defaults or the full-resolution protocol ("crossmoda").
RunConfig preset_config(const std::string& name);

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep the values already in `base`; unknown keys are errors.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, const std::string& preset = "desk");

/// Hash of everything that determines the shared artifacts. The method
/// selectors (variant, supervised architecture) and the output directory are
/// left out so every ablation of one run shares a hash.
std::string config_hash(const RunConfig& c);

/// The config for one ablation variant of `base`.
RunConfig ablation_variant(const RunConfig& base, Variant variant);

/// Stages the variant runs, in order.
std::vector<Stage> stage_plan(const RunConfig& c);

/// Table row label, e.g. "C-MADA", "S1+U-Net".
std::string method_label(const RunConfig& c);
/// Directory-safe method key, e.g. "full-unet".
std::string method_key(const RunConfig& c);

}  // namespace cmada
