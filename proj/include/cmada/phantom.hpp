#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmada/volume.hpp"

namespace cmada {

/// Ellipsoid placement distribution in voxel units. Centres are drawn
/// uniformly from [center_min, center_max] given as fractions of the grid
/// extent; radii uniformly from [radius_min, radius_max].
struct StructureSpec {
  std::array<double, 3> center_min{0.3, 0.3, 0.3};
  std::array<double, 3> center_max{0.7, 0.7, 0.7};
  std::array<double, 3> radius_min{2.0, 2.0, 1.0};
  std::array<double, 3> radius_max{4.0, 4.0, 2.0};
};

/// Intensity model of one imaging domain. Inside the head each class is
/// rendered at its mean and unlabeled distractor blobs at `distractor_mean`;
/// with `invert` every such mean m becomes 1 - m. Outside the head the
/// volume holds `air`, which is never inverted.
struct DomainAppearance {
  std::array<double, 3> class_means{0.45, 0.95, 0.75};
  double distractor_mean = 0.62;
  bool invert = false;
  double noise = 0.0;           // sd of additive gaussian noise
  double bias_amplitude = 0.0;  // peak of the smooth multiplicative bias field
  double air = 0.0;

  double class_intensity(int cls) const;
  double distractor_intensity() const;
};

struct PhantomSpec {
  int volumes_per_domain = 10;
  Shape3 shape{64, 64, 16};
  Spacing3 spacing{3.276, 3.276, 11.25};
  StructureSpec tumor{{0.35, 0.35, 0.35}, {0.65, 0.65, 0.65}, {5.0, 5.0, 1.5}, {9.0, 9.0, 2.5}};
  StructureSpec cochlea{{0.25, 0.25, 0.35}, {0.75, 0.75, 0.65}, {2.5, 2.5, 1.0}, {4.0, 4.0, 1.5}};
  StructureSpec distractor{{0.15, 0.15, 0.2}, {0.85, 0.85, 0.8}, {3.0, 3.0, 1.0}, {7.0, 7.0, 2.5}};
  int distractors_per_volume = 2;
  /// Head ellipsoid centred in the grid; radii as fractions of the grid size.
  std::array<double, 3> head_radius{0.44, 0.44, 0.8};
  DomainAppearance source{{0.45, 0.95, 0.75}, 0.62, false, 0.03, 0.0, 0.0};
  DomainAppearance target{{0.45, 0.9, 0.72}, 0.6, true, 0.04, 0.1, 0.0};
  std::uint64_t seed = 1;

  /// Throws ValidationError when a structure cannot fit inside the grid.
  void validate() const;
};

struct LabeledVolume {
  std::string id;
  Volume image;
  LabelVolume label;
};

struct PhantomDataset {
  std::vector<LabeledVolume> source;
  std::vector<LabeledVolume> target;  // label: evaluation-only ground truth
};

/// Deterministic in `spec.seed`. Both domains draw anatomy from the same
/// distribution; only the appearance model differs.
PhantomDataset make_phantom_dataset(const PhantomSpec& spec);

}  // namespace cmada
