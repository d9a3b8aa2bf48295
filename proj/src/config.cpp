#include "cmada/config.hpp"

#include <fstream>

#include <fmt/format.h>

namespace cmada {

NLOHMANN_JSON_SERIALIZE_ENUM(GeneratorLossMode, {{GeneratorLossMode::saturating, "saturating"},
                                                 {GeneratorLossMode::non_saturating, "non_saturating"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DiscInputMode, {{DiscInputMode::full, "full"}, {DiscInputMode::seg_only, "seg_only"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StructureSpec, center_min, center_max, radius_min, radius_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DomainAppearance, class_means, distractor_mean, invert, noise,
                                                bias_amplitude, air)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PhantomSpec, volumes_per_domain, shape, spacing, tumor, cochlea,
                                                distractor, distractors_per_volume, head_radius, source, target, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessConfig, spacing, shape, clip)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TranslationObjectiveConfig, cycle_weight, mode, epochs, batch_size,
                                                max_steps, lr, beta1, beta2, eps, generator, discriminator)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SegLossConfig, alpha, beta, eps_smooth, eps_log)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdaptConfig, epochs, batch_size, max_steps, snapshot_interval,
                                                lr_generator, lr_discriminator, eps, supervised_step, mode,
                                                input_mode, seg, discriminator)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectionSection, holdout_fraction, excluded_classes)

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::seg_only_disc: return "seg_only_disc";
    case Variant::s1_only: return "s1_only";
    case Variant::no_adapt: return "no_adapt";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "seg_only_disc") return Variant::seg_only_disc;
  if (s == "s1_only") return Variant::s1_only;
  if (s == "no_adapt") return Variant::no_adapt;
  throw ConfigError("unknown variant '" + s + "' (expected full, seg_only_disc, s1_only or no_adapt)");
}

std::string to_string(Architecture a) { return a == Architecture::unet ? "unet" : "residual_unet"; }

Architecture architecture_from_string(const std::string& s) {
  if (s == "unet") return Architecture::unet;
  if (s == "residual_unet") return Architecture::residual_unet;
  throw ConfigError("unknown architecture '" + s + "' (expected unet or residual_unet)");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::preprocess: return "preprocess";
    case Stage::translate: return "translate";
    case Stage::train_seg: return "train-seg";
    case Stage::adapt: return "adapt";
    case Stage::select: return "select";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& s) {
  for (auto st : {Stage::synth, Stage::preprocess, Stage::translate, Stage::train_seg, Stage::adapt, Stage::select,
                  Stage::evaluate, Stage::report}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

void RunConfig::validate() const {
  if (dataset.manifest.empty()) dataset.phantom.validate();
  validate_spacing(preprocessing.spacing);
  for (auto n : preprocessing.shape) {
    if (n < 1) throw ConfigError("preprocessing shape components must be >= 1");
  }
  translation.validate();
  supervised.train.validate();
  adaptation.validate();
  if (selection.holdout_fraction < 0.0 || selection.holdout_fraction >= 1.0) {
    throw ConfigError("selection.holdout_fraction must be in [0, 1)");
  }
  const auto divisor = std::max<std::int64_t>({4, supervised.train.unet.divisor(), adaptation.discriminator.factor(),
                                                translation.discriminator.factor()});
  if (preprocessing.shape[0] % divisor != 0 || preprocessing.shape[1] % divisor != 0) {
    throw ConfigError(fmt::format("preprocessed slice shape must be divisible by {}", divisor));
  }
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.output_dir = "runs/desk";
    c.preprocessing = {{3.276, 3.276, 11.25}, {64, 64, 16}, true};

    c.translation.epochs = 100;
    c.translation.batch_size = 4;
    c.translation.generator = {1, 8, 6};
    c.translation.discriminator = {1, 16, 3};

    c.supervised.train.epochs = 63;
    c.supervised.train.batch_size = 8;
    c.supervised.train.checkpoint_interval = 100;
    c.supervised.train.unet = {1, 3, 16, 4, false};

    c.adaptation.epochs = 20;
    c.adaptation.batch_size = 8;
    c.adaptation.snapshot_interval = 50;
    c.adaptation.lr_generator = 1e-4;
    c.adaptation.lr_discriminator = 5e-5;
    c.adaptation.discriminator = {9, 16, 3};
  } else if (name == "crossmoda") {
    c.output_dir = "runs/crossmoda";
    c.preprocessing = {{0.468, 0.468, 1.5}, {448, 448, 120}, true};

    c.translation.epochs = 40;
    c.translation.batch_size = 1;
    c.translation.generator = {1, 64, 9};
    c.translation.discriminator = {1, 64, 3};

    c.supervised.train.epochs = 500;
    c.supervised.train.batch_size = 8;
    c.supervised.train.checkpoint_interval = 5000;
    c.supervised.train.unet = {1, 3, 32, 4, false};

    c.adaptation.epochs = 100;
    c.adaptation.batch_size = 8;
    c.adaptation.snapshot_interval = 1000;
    c.adaptation.lr_generator = 1e-4;
    c.adaptation.lr_discriminator = 5e-5;
    c.adaptation.discriminator = {9, 64, 3};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or crossmoda)");
  }
  return ablation_variant(c, c.variant);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json sup = c.supervised.train.loss;
  nlohmann::json supervised = {{"architecture", to_string(c.supervised.architecture)},
                               {"epochs", c.supervised.train.epochs},
                               {"batch_size", c.supervised.train.batch_size},
                               {"max_steps", c.supervised.train.max_steps},
                               {"checkpoint_interval", c.supervised.train.checkpoint_interval},
                               {"lr", c.supervised.train.lr},
                               {"loss", sup},
                               {"unet", c.supervised.train.unet}};
  return {{"preset", c.preset},
          {"seed", c.seed},
          {"output_dir", c.output_dir.generic_string()},
          {"variant", to_string(c.variant)},
          {"dataset", {{"manifest", c.dataset.manifest.generic_string()}, {"phantom", c.dataset.phantom}}},
          {"preprocessing", c.preprocessing},
          {"translation", c.translation},
          {"supervised", supervised},
          {"adaptation", c.adaptation},
          {"selection", c.selection}};
}

namespace {

void check_keys(const nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    if (value.is_object() && base.at(key).is_object()) check_keys(base.at(key), value, where + key + ".");
  }
}

RunConfig from_json_config(const nlohmann::json& j) {
  RunConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.dataset.manifest = j.at("dataset").at("manifest").get<std::string>();
  c.dataset.phantom = j.at("dataset").at("phantom").get<PhantomSpec>();
  c.preprocessing = j.at("preprocessing").get<PreprocessConfig>();
  c.translation = j.at("translation").get<TranslationObjectiveConfig>();
  const auto& s = j.at("supervised");
  c.supervised.architecture = architecture_from_string(s.at("architecture").get<std::string>());
  c.supervised.train.epochs = s.at("epochs").get<std::int64_t>();
  c.supervised.train.batch_size = s.at("batch_size").get<std::int64_t>();
  c.supervised.train.max_steps = s.at("max_steps").get<std::int64_t>();
  c.supervised.train.checkpoint_interval = s.at("checkpoint_interval").get<std::int64_t>();
  c.supervised.train.lr = s.at("lr").get<double>();
  c.supervised.train.loss = s.at("loss").get<SegLossConfig>();
  c.supervised.train.unet = s.at("unet").get<UNetConfig>();
  c.adaptation = j.at("adaptation").get<AdaptConfig>();
  c.selection = j.at("selection").get<SelectionSection>();
  return c;
}

}  // namespace

RunConfig apply_json(RunConfig base, const nlohmann::json& j) {
  auto merged = to_json(base);
  check_keys(merged, j, "");
  merged.merge_patch(j);
  try {
    auto c = from_json_config(merged);
    return ablation_variant(c, c.variant);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::string& preset) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto p = j.contains("preset") ? j.at("preset").get<std::string>() : preset;
  return apply_json(preset_config(p), j);
}

std::string config_hash(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("variant");
  j["supervised"].erase("architecture");
  j["supervised"]["unet"].erase("residual");
  j["adaptation"].erase("input_mode");
  j["adaptation"]["discriminator"].erase("in_channels");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

RunConfig ablation_variant(const RunConfig& base, Variant variant) {
  RunConfig c = base;
  c.variant = variant;
  c.adaptation.input_mode = variant == Variant::seg_only_disc ? DiscInputMode::seg_only : DiscInputMode::full;
  c.supervised.train.unet.residual = c.supervised.architecture == Architecture::residual_unet;
  c.adaptation.discriminator.in_channels =
      disc_input_channels(c.adaptation.input_mode, c.supervised.train.unet.num_classes);
  return c;
}

std::vector<Stage> stage_plan(const RunConfig& c) {
  std::vector<Stage> plan{Stage::synth, Stage::preprocess};
  if (!c.dataset.manifest.empty()) plan.erase(plan.begin());
  if (c.variant != Variant::no_adapt) plan.push_back(Stage::translate);
  plan.push_back(Stage::train_seg);
  if (c.variant == Variant::full || c.variant == Variant::seg_only_disc) plan.push_back(Stage::adapt);
  plan.insert(plan.end(), {Stage::select, Stage::evaluate, Stage::report});
  return plan;
}

std::string method_label(const RunConfig& c) {
  const bool residual = c.supervised.architecture == Architecture::residual_unet;
  const std::string net = residual ? "residualU-Net" : "U-Net";
  switch (c.variant) {
    case Variant::full: return residual ? "C-MADA(residualU-Net)" : "C-MADA";
    case Variant::seg_only_disc: return residual ? "C-MADA([seg],residualU-Net)" : "C-MADA([seg])";
    case Variant::s1_only: return "S1+" + net;
    case Variant::no_adapt: return net + "(source-only)";
  }
  return "unknown";
}

std::string method_key(const RunConfig& c) { return to_string(c.variant) + "-" + to_string(c.supervised.architecture); }

}  // namespace cmada
