#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmada/volume.hpp"

namespace cmada {

struct VolumeRef {
  std::string id;
  const Volume* image = nullptr;
  const LabelVolume* label = nullptr;  // optional
  Domain domain = Domain::source;
};

/// All slices along `axis`, ordered by (volume id, slice index).
std::vector<SliceSample> slice_volumes(std::span<const VolumeRef> volumes, int axis = kAxialAxis);

using SliceBatch = std::vector<const SliceSample*>;

/// Epoch-wise batching over a fixed slice set. Every slice appears exactly
/// once per epoch; the last batch may be short. Without a seed the order is
/// the order of `slices`; with a seed each epoch is a seeded permutation.
class SliceIterator {
 public:
  SliceIterator(std::span<const SliceSample> slices, std::int64_t batch_size,
                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

  std::int64_t batches_per_epoch() const;
  std::int64_t epoch() const { return epoch_; }

  /// Next batch; rolls over into the next epoch when the current one is exhausted.
  SliceBatch next();
  /// Next batch of the current epoch, or nullopt at its end.
  std::optional<SliceBatch> next_in_epoch();
  void start_epoch(std::int64_t epoch);

 private:
  std::span<const SliceSample> slices_;
  std::int64_t batch_size_;
  std::optional<std::uint64_t> seed_;
  std::int64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace cmada
