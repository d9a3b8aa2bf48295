#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmada/config.hpp"
#include "cmada/metrics.hpp"

namespace cmada {

// Output layout (relative to RunConfig::output_dir):
//   data/                      synthesized phantoms + manifest.txt
//   preprocessed/              conformed volumes, manifest.txt, metadata.json
//   translation/               translation.ckpt, history.tsv, mapped/<id>.cvol
//   segmentation/<arch>-<src>/ final.ckpt, step_<n>.ckpt, history.tsv
//   adaptation/<method>/       candidates/step_<n>.ckpt, history.tsv
//   selection/<method>/        candidates.tsv, selected.json
//   evaluation/<method>/       summary.tsv, volumes.tsv, report.json
//   report/                    report.txt, report.tsv
// Every stage directory carries a stage.json with the stage name and config hash.

struct StageOptions {
  bool allow_hash_mismatch = false;
};

struct StageResult {
  Stage stage = Stage::synth;
  std::filesystem::path directory;
  std::string summary;  // one line for the console
};

/// Runs one stage. Throws MissingArtifactError when a predecessor is absent
/// and ConfigError on a config-hash mismatch unless overridden.
StageResult run_stage(Stage stage, const RunConfig& cfg, const StageOptions& opt = {});

/// Every stage of `stage_plan(cfg)` in order.
std::vector<StageResult> run_pipeline(const RunConfig& cfg, const StageOptions& opt = {});

/// Exclusive per-output-directory lock held for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& output_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Sorted source ids split into (training, held-out); the held-out part is
/// the last max(1, round(fraction * n)) ids, or none when fraction is 0 or n < 2.
std::pair<std::vector<std::string>, std::vector<std::string>> holdout_split(std::vector<std::string> ids,
                                                                              double fraction);

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// Table row order: C-MADA, C-MADA([seg]), S1+residualU-Net, S1+U-Net, then the rest.
int report_row_rank(const std::string& method);

std::filesystem::path evaluation_dir(const RunConfig& cfg);
std::filesystem::path report_dir(const RunConfig& cfg);

}  // namespace cmada
