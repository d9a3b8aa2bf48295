#pragma once

#include "cmada/volume.hpp"

namespace cmada {

enum class Interpolation { linear, nearest };

/// Resamples onto a grid with `target_spacing`, keeping the first voxel
/// centre fixed. Output shape is round(shape * spacing / target_spacing),
/// at least 1 per axis; samples beyond the last input voxel replicate the edge.
Volume resample(const Volume& v, const Spacing3& target_spacing,
                Interpolation interp = Interpolation::linear);
/// Labels are always resampled with nearest-neighbour lookup.
LabelVolume resample(const LabelVolume& v, const Spacing3& target_spacing);

/// Centre-crops axes that are too large and symmetrically pads axes that are
/// too small (extra voxel of an odd pad goes after the data).
Volume conform_shape(const Volume& v, const Shape3& target_shape, float fill);
LabelVolume conform_shape(const LabelVolume& v, const Shape3& target_shape, Label fill = 0);

struct IntensityStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

IntensityStats intensity_stats(const Volume& v);

/// Clamps every voxel into [mean - 3 sd, mean + 3 sd] of the input volume.
Volume clip_intensities(const Volume& v);

/// Affine map of [min, max] onto [-1, 1]; a constant volume maps to 0.
Volume normalize(const Volume& v);

struct PreprocessConfig {
  Spacing3 spacing{1.0, 1.0, 1.0};
  Shape3 shape{1, 1, 1};
  bool clip = true;
};

/// resample -> conform_shape (fill = volume minimum) -> clip -> normalize.
Volume preprocess(const Volume& v, const PreprocessConfig& cfg);
LabelVolume preprocess(const LabelVolume& v, const PreprocessConfig& cfg);

}  // namespace cmada
