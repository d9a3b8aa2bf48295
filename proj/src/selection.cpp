#include "cmada/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace cmada {

namespace {

std::vector<std::int64_t> class_totals(std::span<const Grid2<Label>> masks, int num_classes) {
  std::vector<std::int64_t> totals(static_cast<std::size_t>(num_classes), 0);
  for (const auto& m : masks) {
    for (Label l : m.data) {
      if (l >= num_classes) throw ValidationError("mask value exceeds class count");
      ++totals[l];
    }
  }
  return totals;
}

}  // namespace

AreaStats source_area_stats(std::span<const Grid2<Label>> source_masks, int num_classes) {
  if (source_masks.empty()) throw ValidationError("source_area_stats: no mask slices");
  const auto totals = class_totals(source_masks, num_classes);
  AreaStats s;
  s.slice_count = static_cast<std::int64_t>(source_masks.size());
  for (int c = 1; c < num_classes; ++c) {
    s.avg_pixels.push_back(static_cast<double>(totals[c]) / static_cast<double>(s.slice_count));
  }
  return s;
}

std::vector<double> area_ratio(std::span<const Grid2<Label>> predicted_target_masks, const AreaStats& stats,
                               std::span<const int> excluded) {
  if (predicted_target_masks.empty()) throw ValidationError("area_ratio: no predicted slices");
  const int num_classes = static_cast<int>(stats.avg_pixels.size()) + 1;
  const auto totals = class_totals(predicted_target_masks, num_classes);
  const double n = static_cast<double>(predicted_target_masks.size());
  std::vector<double> r;
  for (int c = 1; c < num_classes; ++c) {
    if (std::find(excluded.begin(), excluded.end(), c) != excluded.end()) {
      r.push_back(1.0);
      continue;
    }
    const double anchor = stats.avg_pixels[c - 1];
    if (anchor <= 0.0) {
      throw ValidationError(fmt::format("area_ratio: class {} never occurs in the source ground truth", c));
    }
    r.push_back(static_cast<double>(totals[c]) / n / anchor);
  }
  return r;
}

double validation_loss(std::span<const double> ratios, std::span<const double> source_dice_losses) {
  double loss = 0.0;
  for (double r : ratios) loss += std::fabs(r - 1.0);
  for (double d : source_dice_losses) loss += d;
  return loss;
}

const CandidateScore& select_checkpoint(std::span<const CandidateScore> candidates) {
  if (candidates.empty()) throw ValidationError("select_checkpoint: no candidates");
  const CandidateScore* best = &candidates[0];
  for (const auto& c : candidates.subspan(1)) {
    if (c.loss < best->loss || (c.loss == best->loss && c.step > best->step)) best = &c;
  }
  return *best;
}

std::string format_candidate_tsv(std::span<const CandidateScore> candidates) {
  std::ostringstream out;
  std::size_t classes = 0;
  for (const auto& c : candidates) classes = std::max(classes, c.ratios.size());
  out << "checkpoint\tstep";
  for (std::size_t c = 1; c <= classes; ++c) out << "\tr_" << c;
  for (std::size_t c = 1; c <= classes; ++c) out << "\tdiceLoss_" << c;
  out << "\tvalidation_loss\n";
  for (const auto& c : candidates) {
    out << c.id << '\t' << c.step;
    for (double r : c.ratios) out << fmt::format("\t{:.9g}", r);
    for (double d : c.source_dice_losses) out << fmt::format("\t{:.9g}", d);
    out << fmt::format("\t{:.9g}\n", c.loss);
  }
  return out.str();
}

}  // namespace cmada
