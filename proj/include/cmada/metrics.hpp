#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmada/volume.hpp"

namespace cmada {

using BinaryMask = Grid3<std::uint8_t>;

/// 2|P∩G| / (|P| + |G|); defined as 1 when both masks are empty.
double dice_coefficient(const BinaryMask& pred, const BinaryMask& gt);

/// Linear indices (ascending) of foreground voxels with at least one
/// 6-neighbour that is background or outside the grid.
std::vector<std::int64_t> extract_surface(const BinaryMask& mask);

/// Squared Euclidean distance (mm²) from every voxel centre to the nearest
/// seed voxel centre; +inf everywhere when there are no seeds. Computed as a
/// separable minimum, which is exact: rounding is monotone, so
/// min(fl(a + b_i)) = fl(a + min b_i).
Grid3<double> squared_distance_to(const BinaryMask& seeds, const Spacing3& spacing);

/// Average symmetric surface distance in mm over voxel-centre surfaces.
/// nullopt when either mask is empty (distance undefined).
std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, const Spacing3& spacing);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population convention
  int defined = 0;
  int excluded = 0;     // volumes whose value was undefined
};

struct VolumeScores {
  std::string id;
  std::vector<double> dice;                 // per foreground class
  std::vector<std::optional<double>> assd;  // per foreground class
};

struct EvalReport {
  std::string method;
  int num_classes = kDefaultClassCount;
  std::vector<VolumeScores> volumes;
  std::vector<MetricSummary> dice;  // per foreground class
  std::vector<MetricSummary> assd;

  /// Mean over foreground classes of the per-class mean dice.
  double mean_foreground_dice() const;
};

MetricSummary summarize(std::span<const std::optional<double>> values);

/// Scores every predicted volume against its truth, per foreground class.
EvalReport evaluate(std::span<const LabelVolume> predictions, std::span<const LabelVolume> truths,
                    const Spacing3& spacing, std::span<const std::string> ids = {},
                    std::string method = {});

/// Class display names used in report headers (index = class).
inline const std::vector<std::string> kClassNames{"Background", "VS", "Cochlea"};

/// Delimited summary table: method, class, metric, mean, std, defined, excluded.
std::string format_summary_tsv(std::span<const EvalReport> reports);
/// Per-volume table: method, volume, class, dice, assd ("undefined" marker).
std::string format_volume_tsv(std::span<const EvalReport> reports);
/// Human-readable block, one row per method: "mean±std" per class and metric.
std::string format_table(std::span<const EvalReport> reports);

}  // namespace cmada
