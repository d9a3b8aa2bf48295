#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmada/volume.hpp"

namespace cmada {

/// Mean number of pixels of each foreground class per slice of the source
/// ground truth. Index 0 of `avg_pixels` is class 1.
struct AreaStats {
  std::vector<double> avg_pixels;
  std::int64_t slice_count = 0;
};

/// Every slice counts in the denominator, including slices without the class.
AreaStats source_area_stats(std::span<const Grid2<Label>> source_masks, int num_classes = kDefaultClassCount);

/// r_c = (mean predicted class-c pixels per target slice) / SAvgPix_c.
/// `excluded` lists classes (1-based) to skip; skipped ratios are reported
/// as 1. A scored class with SAvgPix_c = 0 is a ValidationError.
std::vector<double> area_ratio(std::span<const Grid2<Label>> predicted_target_masks, const AreaStats& stats,
                               std::span<const int> excluded = {});

/// Σ_c |r_c - 1| + Σ_c dice_loss_c over foreground classes.
double validation_loss(std::span<const double> ratios, std::span<const double> source_dice_losses);

struct CandidateScore {
  std::string id;
  std::int64_t step = 0;
  std::vector<double> ratios;
  std::vector<double> source_dice_losses;
  double loss = 0.0;
};

/// Argmin of the validation loss; equal losses go to the larger step.
const CandidateScore& select_checkpoint(std::span<const CandidateScore> candidates);

/// Delimited audit table: id, step, r_c..., diceLoss_c..., validation loss.
std::string format_candidate_tsv(std::span<const CandidateScore> candidates);

}  // namespace cmada
