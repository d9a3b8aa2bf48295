#include "cmada/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "cmada/checkpoint.hpp"
#include "cmada/phantom.hpp"
#include "cmada/rng.hpp"
#include "cmada/selection.hpp"
#include "cmada/slices.hpp"
#include "cmada/volume_io.hpp"

namespace cmada {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTranslationSeedTag = 100;
constexpr std::uint64_t kSupervisedSeedTag = 200;
constexpr std::uint64_t kAdaptationSeedTag = 300;

struct DomainData {
  std::vector<std::string> ids;
  std::vector<Volume> images;
  std::vector<LabelVolume> labels;  // empty entries when unlabeled
  std::vector<bool> labeled;

  std::size_t find(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ValidationError("unknown volume id " + id);
    return static_cast<std::size_t>(it - ids.begin());
  }
};

fs::path out(const RunConfig& cfg) { return cfg.output_dir; }
fs::path data_dir(const RunConfig& cfg) { return out(cfg) / "data"; }
fs::path preprocessed_dir(const RunConfig& cfg) { return out(cfg) / "preprocessed"; }
fs::path translation_dir(const RunConfig& cfg) { return out(cfg) / "translation"; }

bool uses_translation(const RunConfig& cfg) { return cfg.variant != Variant::no_adapt; }
bool uses_adaptation(const RunConfig& cfg) {
  return cfg.variant == Variant::full || cfg.variant == Variant::seg_only_disc;
}

fs::path segmentation_dir(const RunConfig& cfg) {
  return out(cfg) / "segmentation" /
         (to_string(cfg.supervised.architecture) + (uses_translation(cfg) ? "-mapped" : "-source"));
}
fs::path adaptation_dir(const RunConfig& cfg) { return out(cfg) / "adaptation" / method_key(cfg); }
fs::path selection_dir(const RunConfig& cfg) { return out(cfg) / "selection" / method_key(cfg); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_stage(const fs::path& dir, Stage stage, const RunConfig& cfg, nlohmann::json extra = {}) {
  nlohmann::json j = {{"stage", to_string(stage)},
                      {"config_hash", config_hash(cfg)},
                      {"preset", cfg.preset},
                      {"seed", cfg.seed}};
  if (extra.is_object()) j.update(extra);
  write_text(dir / "stage.json", j.dump(2) + "\n");
}

void check_hash(const std::string& found, const std::string& expected, const std::string& what,
                const StageOptions& opt) {
  if (found == expected || opt.allow_hash_mismatch) return;
  throw ConfigError(fmt::format("{} was produced with config hash {} but the current config hashes to {}; "
                                "re-run the producing stage or pass --allow-hash-mismatch",
                                what, found, expected));
}

nlohmann::json require_stage(const fs::path& dir, Stage stage, const RunConfig& cfg, const StageOptions& opt) {
  const auto path = dir / "stage.json";
  if (!fs::exists(path)) {
    throw MissingArtifactError(fmt::format("{} (run the '{}' stage first)", path.string(), to_string(stage)));
  }
  auto j = read_json(path);
  if (j.value("stage", "") != to_string(stage)) {
    throw ValidationError(fmt::format("{} belongs to stage '{}', expected '{}'", path.string(),
                                      j.value("stage", ""), to_string(stage)));
  }
  check_hash(j.value("config_hash", ""), config_hash(cfg), path.string(), opt);
  return j;
}

void require_file(const fs::path& path, Stage producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError(fmt::format("{} (run the '{}' stage first)", path.string(), to_string(producer)));
  }
}

DomainData load_domain(const std::vector<ManifestEntry>& entries) {
  DomainData d;
  for (const auto& e : entries) {
    d.ids.push_back(e.id);
    d.images.push_back(load_volume(e.image));
    if (e.label) {
      d.labels.push_back(load_label_volume(*e.label));
      d.labeled.push_back(true);
    } else {
      d.labels.emplace_back();
      d.labeled.push_back(false);
    }
  }
  return d;
}

std::pair<DomainData, DomainData> load_preprocessed(const RunConfig& cfg, const StageOptions& opt) {
  require_stage(preprocessed_dir(cfg), Stage::preprocess, cfg, opt);
  const auto m = load_manifest(preprocessed_dir(cfg) / "manifest.txt");
  return {load_domain(m.source), load_domain(m.target)};
}

std::vector<SliceSample> volume_slices(const DomainData& d, const std::vector<std::string>& ids, Domain domain,
                                       bool with_labels) {
  std::vector<VolumeRef> refs;
  for (const auto& id : ids) {
    const auto i = d.find(id);
    refs.push_back({id, &d.images[i], with_labels && d.labeled[i] ? &d.labels[i] : nullptr, domain});
  }
  return slice_volumes(refs);
}

// Source images seen by the segmenter: translated for the S1 variants, raw for no_adapt.
DomainData training_source(const RunConfig& cfg, const DomainData& source, const StageOptions& opt) {
  if (!uses_translation(cfg)) return source;
  require_stage(translation_dir(cfg), Stage::translate, cfg, opt);
  DomainData mapped = source;
  for (std::size_t i = 0; i < mapped.ids.size(); ++i) {
    const auto path = translation_dir(cfg) / "mapped" / (mapped.ids[i] + ".cvol");
    require_file(path, Stage::translate);
    mapped.images[i] = load_volume(path);
  }
  return mapped;
}

std::vector<std::string> labeled_ids(const DomainData& d) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    if (d.labeled[i]) ids.push_back(d.ids[i]);
  }
  return ids;
}

std::string step_name(std::int64_t step) { return fmt::format("step_{:06d}.ckpt", step); }

// ---- stages ----

StageResult stage_synth(const RunConfig& cfg) {
  if (!cfg.dataset.manifest.empty()) {
    throw ConfigError("dataset.manifest is set; there is nothing to synthesize");
  }
  const auto dir = data_dir(cfg);
  const auto ds = make_phantom_dataset(cfg.dataset.phantom);
  DatasetManifest m;
  auto save = [&](const std::vector<LabeledVolume>& vols, const std::string& domain,
                  std::vector<ManifestEntry>& entries) {
    for (const auto& v : vols) {
      const auto image = dir / domain / (v.id + "_image.cvol");
      const auto label = dir / domain / (v.id + "_label.cvol");
      save_volume(v.image, image);
      save_label_volume(v.label, label);
      entries.push_back({v.id, image, label});
    }
  };
  save(ds.source, "source", m.source);
  save(ds.target, "target", m.target);
  save_manifest(m, dir / "manifest.txt");
  write_stage(dir, Stage::synth, cfg, {{"volumes_per_domain", cfg.dataset.phantom.volumes_per_domain}});
  return {Stage::synth, dir,
          fmt::format("synthesized {} source and {} target phantoms", ds.source.size(), ds.target.size())};
}

StageResult stage_preprocess(const RunConfig& cfg, const StageOptions& opt) {
  fs::path manifest_path = cfg.dataset.manifest;
  if (manifest_path.empty()) {
    require_stage(data_dir(cfg), Stage::synth, cfg, opt);
    manifest_path = data_dir(cfg) / "manifest.txt";
  }
  require_file(manifest_path, Stage::synth);
  const auto in = load_manifest(manifest_path);
  const auto dir = preprocessed_dir(cfg);
  DatasetManifest m;
  nlohmann::json volumes = nlohmann::json::array();
  auto run = [&](const std::vector<ManifestEntry>& entries, const std::string& domain,
                 std::vector<ManifestEntry>& outs) {
    for (const auto& e : entries) {
      const auto img = preprocess(load_volume(e.image), cfg.preprocessing);
      const auto image = dir / domain / (e.id + "_image.cvol");
      save_volume(img, image);
      ManifestEntry o{e.id, image, std::nullopt};
      if (e.label) {
        const auto lab = preprocess(load_label_volume(*e.label), cfg.preprocessing);
        o.label = dir / domain / (e.id + "_label.cvol");
        save_label_volume(lab, *o.label);
      }
      volumes.push_back({{"domain", domain},
                         {"id", e.id},
                         {"spacing", img.spacing},
                         {"shape", img.shape()}});
      outs.push_back(o);
    }
  };
  run(in.source, "source", m.source);
  run(in.target, "target", m.target);
  save_manifest(m, dir / "manifest.txt");
  nlohmann::json meta = {{"spacing", cfg.preprocessing.spacing},
                         {"shape", cfg.preprocessing.shape},
                         {"clip", cfg.preprocessing.clip},
                         {"volumes", volumes}};
  write_text(dir / "metadata.json", meta.dump(2) + "\n");
  write_stage(dir, Stage::preprocess, cfg);
  return {Stage::preprocess, dir,
          fmt::format("preprocessed {} volumes to {}x{}x{}", volumes.size(), cfg.preprocessing.shape[0],
                      cfg.preprocessing.shape[1], cfg.preprocessing.shape[2])};
}

StageResult stage_translate(const RunConfig& cfg, const StageOptions& opt) {
  auto [source, target] = load_preprocessed(cfg, opt);
  const auto dir = translation_dir(cfg);
  const auto src_slices = volume_slices(source, source.ids, Domain::source, false);
  const auto tgt_slices = volume_slices(target, target.ids, Domain::target, false);
  const auto hash = config_hash(cfg);
  auto result = train_translation(src_slices, tgt_slices, cfg.translation, mix_seed(cfg.seed, kTranslationSeedTag),
                                  hash);
  result.checkpoint.save(dir / "translation.ckpt");
  result.history.save(dir / "history.tsv");

  const auto mapped = translate_dataset(result.model.g_s, src_slices);
  std::map<std::string, Volume> volumes;
  for (std::size_t i = 0; i < source.ids.size(); ++i) {
    volumes[source.ids[i]] = Volume{Grid3<float>(source.images[i].shape()), source.images[i].spacing};
  }
  for (const auto& s : mapped) insert_slice(volumes.at(s.volume_id).data, kAxialAxis, s.slice_index, s.image);
  for (const auto& [id, v] : volumes) save_volume(v, dir / "mapped" / (id + ".cvol"));
  write_stage(dir, Stage::translate, cfg, {{"steps", result.steps}});
  return {Stage::translate, dir, fmt::format("translation trained for {} steps", result.steps)};
}

StageResult stage_train_seg(const RunConfig& cfg, const StageOptions& opt) {
  auto [raw_source, target] = load_preprocessed(cfg, opt);
  const auto source = training_source(cfg, raw_source, opt);
  const auto [train_ids, holdout_ids] = holdout_split(labeled_ids(source), cfg.selection.holdout_fraction);
  if (train_ids.empty()) throw ValidationError("no labeled source volumes to train on");
  const auto domain = uses_translation(cfg) ? Domain::mapped_source : Domain::source;
  const auto slices = volume_slices(source, train_ids, domain, true);
  const auto hash = config_hash(cfg);
  const auto seed = mix_seed(cfg.seed, kSupervisedSeedTag);
  auto result = train_supervised(slices, cfg.supervised.train, seed, hash);

  const auto dir = segmentation_dir(cfg);
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  for (const auto& ck : result.periodic) ck.save(dir / step_name(ck.step));
  result.final_checkpoint.save(dir / "final.ckpt");
  result.history.save(dir / "history.tsv");
  write_stage(dir, Stage::train_seg, cfg,
              {{"steps", result.steps},
               {"architecture", to_string(cfg.supervised.architecture)},
               {"train_volumes", train_ids},
               {"holdout_volumes", holdout_ids}});
  return {Stage::train_seg, dir, fmt::format("segmenter trained for {} steps", result.steps)};
}

StageResult stage_adapt(const RunConfig& cfg, const StageOptions& opt) {
  if (!uses_adaptation(cfg)) {
    throw ConfigError(fmt::format("variant {} has no adaptation stage", to_string(cfg.variant)));
  }
  auto [raw_source, target] = load_preprocessed(cfg, opt);
  const auto source = training_source(cfg, raw_source, opt);
  const auto seg = segmentation_dir(cfg);
  require_stage(seg, Stage::train_seg, cfg, opt);
  require_file(seg / "final.ckpt", Stage::train_seg);
  const auto hash = config_hash(cfg);
  const auto unet = Checkpoint::load(seg / "final.ckpt", hash, opt.allow_hash_mismatch);

  const auto [train_ids, holdout_ids] = holdout_split(labeled_ids(source), cfg.selection.holdout_fraction);
  const auto mapped = volume_slices(source, train_ids, Domain::mapped_source, true);
  const auto tgt = volume_slices(target, target.ids, Domain::target, false);
  auto result = train_adaptation(unet, mapped, tgt, cfg.adaptation, mix_seed(cfg.seed, kAdaptationSeedTag), hash);

  const auto dir = adaptation_dir(cfg);
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir / "candidates");
  for (const auto& ck : result.candidates) ck.save(dir / "candidates" / step_name(ck.step));
  result.history.save(dir / "history.tsv");
  write_stage(dir, Stage::adapt, cfg,
              {{"steps", result.steps},
               {"variant", to_string(cfg.variant)},
               {"candidates", result.candidates.size()}});
  return {Stage::adapt, dir,
          fmt::format("adaptation ran {} steps, {} candidates", result.steps, result.candidates.size())};
}

std::vector<fs::path> candidate_paths(const RunConfig& cfg, const StageOptions& opt) {
  std::vector<fs::path> paths;
  if (uses_adaptation(cfg)) {
    require_stage(adaptation_dir(cfg), Stage::adapt, cfg, opt);
    for (const auto& e : fs::directory_iterator(adaptation_dir(cfg) / "candidates")) {
      if (e.path().extension() == ".ckpt") paths.push_back(e.path());
    }
  } else {
    const auto seg = segmentation_dir(cfg);
    require_stage(seg, Stage::train_seg, cfg, opt);
    for (const auto& e : fs::directory_iterator(seg)) {
      if (e.path().extension() == ".ckpt") paths.push_back(e.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw MissingArtifactError("candidate checkpoints for " + method_key(cfg));
  return paths;
}

std::vector<LabelVolume> predict_all(UNet2D& net, const DomainData& d, const std::vector<std::string>& ids) {
  std::vector<LabelVolume> preds;
  for (const auto& id : ids) preds.push_back(predict_volume(net, d.images[d.find(id)]).labels);
  return preds;
}

StageResult stage_select(const RunConfig& cfg, const StageOptions& opt) {
  auto [raw_source, target] = load_preprocessed(cfg, opt);
  const auto source = training_source(cfg, raw_source, opt);
  const auto paths = candidate_paths(cfg, opt);
  const auto hash = config_hash(cfg);
  const int num_classes = static_cast<int>(cfg.supervised.train.unet.num_classes);

  const auto labeled = labeled_ids(source);
  const auto [train_ids, holdout_ids] = holdout_split(labeled, cfg.selection.holdout_fraction);
  const auto& dice_ids = holdout_ids.empty() ? train_ids : holdout_ids;

  std::vector<Grid2<Label>> source_masks;
  for (const auto& id : labeled) {
    const auto& lab = source.labels[source.find(id)];
    for (std::int64_t k = 0; k < slice_count(lab.shape(), kAxialAxis); ++k) {
      source_masks.push_back(extract_slice(lab, kAxialAxis, k));
    }
  }
  const auto stats = source_area_stats(source_masks, num_classes);

  std::vector<CandidateScore> scores;
  for (const auto& path : paths) {
    const auto ck = Checkpoint::load(path, hash, opt.allow_hash_mismatch);
    auto net = load_unet(ck);
    std::vector<Grid2<Label>> target_masks;
    for (const auto& pred : predict_all(net, target, target.ids)) {
      for (std::int64_t k = 0; k < slice_count(pred.shape(), kAxialAxis); ++k) {
        target_masks.push_back(extract_slice(pred, kAxialAxis, k));
      }
    }
    CandidateScore s;
    s.id = path.filename().string();
    s.step = ck.step;
    s.ratios = area_ratio(target_masks, stats, cfg.selection.excluded_classes);
    std::vector<LabelVolume> truths;
    for (const auto& id : dice_ids) truths.push_back(source.labels[source.find(id)]);
    const auto preds = predict_all(net, source, dice_ids);
    const auto report = evaluate(preds, truths, source.images.front().spacing, dice_ids);
    for (const auto& d : report.dice) s.source_dice_losses.push_back(1.0 - d.mean);
    s.loss = validation_loss(s.ratios, s.source_dice_losses);
    scores.push_back(std::move(s));
  }
  const auto& best = select_checkpoint(scores);
  const auto dir = selection_dir(cfg);
  write_text(dir / "candidates.tsv", format_candidate_tsv(scores));
  const auto best_path = std::find_if(paths.begin(), paths.end(),
                                      [&](const fs::path& p) { return p.filename().string() == best.id; });
  nlohmann::json sel = {{"checkpoint", fs::relative(*best_path, out(cfg)).generic_string()},
                        {"step", best.step},
                        {"loss", best.loss},
                        {"ratios", best.ratios},
                        {"source_dice_losses", best.source_dice_losses},
                        {"dice_volumes", dice_ids}};
  write_text(dir / "selected.json", sel.dump(2) + "\n");
  write_stage(dir, Stage::select, cfg, {{"method", method_label(cfg)}});
  return {Stage::select, dir,
          fmt::format("selected {} (validation loss {:.4f}) of {} candidates", best.id, best.loss, scores.size())};
}

StageResult stage_evaluate(const RunConfig& cfg, const StageOptions& opt) {
  const auto sel_dir = selection_dir(cfg);
  require_stage(sel_dir, Stage::select, cfg, opt);
  const auto sel = read_json(sel_dir / "selected.json");
  const auto ck_path = out(cfg) / sel.at("checkpoint").get<std::string>();
  require_file(ck_path, uses_adaptation(cfg) ? Stage::adapt : Stage::train_seg);
  const auto hash = config_hash(cfg);
  auto net = load_unet(Checkpoint::load(ck_path, hash, opt.allow_hash_mismatch));

  auto [source, target] = load_preprocessed(cfg, opt);
  const auto ids = labeled_ids(target);
  if (ids.empty()) throw ValidationError("no labeled target volumes to evaluate against");
  std::vector<LabelVolume> truths;
  for (const auto& id : ids) truths.push_back(target.labels[target.find(id)]);
  const auto preds = predict_all(net, target, ids);
  const auto report = evaluate(preds, truths, target.images.front().spacing, ids, method_label(cfg));

  const auto dir = evaluation_dir(cfg);
  const std::vector<EvalReport> one{report};
  write_text(dir / "summary.tsv", format_summary_tsv(one));
  write_text(dir / "volumes.tsv", format_volume_tsv(one));
  nlohmann::json j = report_to_json(report);
  j["config_hash"] = hash;
  j["checkpoint"] = sel.at("checkpoint");
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_stage(dir, Stage::evaluate, cfg, {{"method", method_label(cfg)}});
  return {Stage::evaluate, dir,
          fmt::format("{}: mean foreground dice {:.4f} over {} volumes", report.method,
                      report.mean_foreground_dice(), ids.size())};
}

StageResult stage_report(const RunConfig& cfg, const StageOptions& opt) {
  const auto root = out(cfg) / "evaluation";
  const auto hash = config_hash(cfg);
  std::vector<EvalReport> reports;
  if (fs::exists(root)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / "report.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      require_stage(d, Stage::evaluate, cfg, opt);
      const auto j = read_json(d / "report.json");
      check_hash(j.value("config_hash", ""), hash, (d / "report.json").string(), opt);
      reports.push_back(report_from_json(j));
    }
  }
  if (reports.empty()) {
    throw MissingArtifactError(fmt::format("{}/<method>/report.json (run the 'evaluate' stage first)",
                                           root.string()));
  }
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return report_row_rank(a.method) < report_row_rank(b.method);
  });
  std::vector<EvalReport> table;
  std::vector<EvalReport> extra;
  for (const auto& r : reports) (report_row_rank(r.method) < 4 ? table : extra).push_back(r);

  std::ostringstream text;
  text << fmt::format("Target-domain segmentation (config {})\n\n", hash);
  if (!table.empty()) text << format_table(table);
  if (!extra.empty()) text << "\nAdditional runs\n" << format_table(extra);
  text << "\nMean foreground dice\n";
  for (const auto& r : reports) text << fmt::format("{:<28}{:.4f}\n", r.method, r.mean_foreground_dice());

  const auto dir = report_dir(cfg);
  write_text(dir / "report.txt", text.str());
  write_text(dir / "report.tsv", format_summary_tsv(reports));
  write_stage(dir, Stage::report, cfg, {{"methods", reports.size()}});
  return {Stage::report, dir, text.str()};
}

}  // namespace

fs::path evaluation_dir(const RunConfig& cfg) { return out(cfg) / "evaluation" / method_key(cfg); }
fs::path report_dir(const RunConfig& cfg) { return out(cfg) / "report"; }

std::pair<std::vector<std::string>, std::vector<std::string>> holdout_split(std::vector<std::string> ids,
                                                                              double fraction) {
  std::sort(ids.begin(), ids.end());
  std::size_t n_hold = 0;
  if (fraction > 0.0 && ids.size() >= 2) {
    n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * ids.size())));
    n_hold = std::min(n_hold, ids.size() - 1);
  }
  std::vector<std::string> hold(ids.end() - static_cast<std::ptrdiff_t>(n_hold), ids.end());
  ids.resize(ids.size() - n_hold);
  return {ids, hold};
}

int report_row_rank(const std::string& method) {
  static const std::vector<std::string> order{"C-MADA", "C-MADA([seg])", "S1+residualU-Net", "S1+U-Net"};
  auto it = std::find(order.begin(), order.end(), method);
  return it == order.end() ? 4 : static_cast<int>(it - order.begin());
}

nlohmann::json report_to_json(const EvalReport& r) {
  auto summary = [](const std::vector<MetricSummary>& v) {
    auto a = nlohmann::json::array();
    for (const auto& m : v) {
      a.push_back({{"mean", m.mean}, {"stddev", m.stddev}, {"defined", m.defined}, {"excluded", m.excluded}});
    }
    return a;
  };
  auto vols = nlohmann::json::array();
  for (const auto& v : r.volumes) {
    auto assd = nlohmann::json::array();
    for (const auto& a : v.assd) assd.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
    vols.push_back({{"id", v.id}, {"dice", v.dice}, {"assd", assd}});
  }
  return {{"method", r.method},
          {"num_classes", r.num_classes},
          {"dice", summary(r.dice)},
          {"assd", summary(r.assd)},
          {"volumes", vols}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  auto summary = [](const nlohmann::json& a) {
    std::vector<MetricSummary> v;
    for (const auto& m : a) {
      auto num = [](const nlohmann::json& x) {
        return x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>();
      };
      v.push_back({num(m.at("mean")), num(m.at("stddev")), m.at("defined").get<int>(), m.at("excluded").get<int>()});
    }
    return v;
  };
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.num_classes = j.at("num_classes").get<int>();
  r.dice = summary(j.at("dice"));
  r.assd = summary(j.at("assd"));
  for (const auto& v : j.at("volumes")) {
    VolumeScores s;
    s.id = v.at("id").get<std::string>();
    s.dice = v.at("dice").get<std::vector<double>>();
    for (const auto& a : v.at("assd")) {
      s.assd.push_back(a.is_null() ? std::nullopt : std::optional<double>(a.get<double>()));
    }
    r.volumes.push_back(std::move(s));
  }
  return r;
}

OutputLock::OutputLock(const fs::path& output_dir) : path_(output_dir / ".lock") {
  fs::create_directories(output_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error(fmt::format("{} exists: another stage is writing to {} (delete the lock file if it is stale)",
                            path_.string(), output_dir.string()));
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

StageResult run_stage(Stage stage, const RunConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  configure_torch_runtime();
  OutputLock lock(cfg.output_dir);
  switch (stage) {
    case Stage::synth: return stage_synth(cfg);
    case Stage::preprocess: return stage_preprocess(cfg, opt);
    case Stage::translate: return stage_translate(cfg, opt);
    case Stage::train_seg: return stage_train_seg(cfg, opt);
    case Stage::adapt: return stage_adapt(cfg, opt);
    case Stage::select: return stage_select(cfg, opt);
    case Stage::evaluate: return stage_evaluate(cfg, opt);
    case Stage::report: return stage_report(cfg, opt);
  }
  throw ConfigError("unknown stage");
}

std::vector<StageResult> run_pipeline(const RunConfig& cfg, const StageOptions& opt) {
  std::vector<StageResult> results;
  for (auto s : stage_plan(cfg)) results.push_back(run_stage(s, cfg, opt));
  return results;
}

}  // namespace cmada
