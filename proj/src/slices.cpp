#include "cmada/slices.hpp"

#include <algorithm>
#include <numeric>

#include "cmada/rng.hpp"

namespace cmada {

std::vector<SliceSample> slice_volumes(std::span<const VolumeRef> volumes, int axis) {
  std::vector<const VolumeRef*> sorted;
  for (const auto& v : volumes) sorted.push_back(&v);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<SliceSample> out;
  for (const auto* v : sorted) {
    if (v->label && v->label->shape() != v->image->shape()) {
      throw ShapeError("label shape differs from image shape for volume " + v->id);
    }
    const auto n = slice_count(v->image->shape(), axis);
    for (std::int64_t s = 0; s < n; ++s) {
      SliceSample sample;
      sample.image = extract_slice(*v->image, axis, s);
      if (v->label) sample.mask = extract_slice(*v->label, axis, s);
      sample.domain = v->domain;
      sample.volume_id = v->id;
      sample.slice_index = s;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

SliceIterator::SliceIterator(std::span<const SliceSample> slices, std::int64_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed)
    : slices_(slices), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (slices.empty()) throw ValidationError("slice iterator needs at least one slice");
  start_epoch(0);
}

std::int64_t SliceIterator::batches_per_epoch() const {
  const auto n = static_cast<std::int64_t>(slices_.size());
  return (n + batch_size_ - 1) / batch_size_;
}

void SliceIterator::start_epoch(std::int64_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  order_.resize(slices_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (seed_) {
    Rng rng(mix_seed(*seed_, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order_);
  }
}

std::optional<SliceBatch> SliceIterator::next_in_epoch() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  SliceBatch batch;
  for (; cursor_ < end; ++cursor_) batch.push_back(&slices_[order_[cursor_]]);
  return batch;
}

SliceBatch SliceIterator::next() {
  auto b = next_in_epoch();
  if (!b) {
    start_epoch(epoch_ + 1);
    b = next_in_epoch();
  }
  return *b;
}

}  // namespace cmada
