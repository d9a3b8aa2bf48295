#include "cmada/tensors.hpp"

#include <cmath>

namespace cmada {

torch::Tensor images_to_tensor(const SliceBatch& batch) {
  if (batch.empty()) throw ValidationError("empty slice batch");
  const auto rows = batch[0]->image.rows, cols = batch[0]->image.cols;
  auto out = torch::empty({static_cast<std::int64_t>(batch.size()), 1, rows, cols}, torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  for (const auto* s : batch) {
    if (s->image.rows != rows || s->image.cols != cols) throw ShapeError("slices in a batch differ in shape");
    std::copy(s->image.data.begin(), s->image.data.end(), dst);
    dst += rows * cols;
  }
  return out;
}

torch::Tensor masks_to_tensor(const SliceBatch& batch) {
  if (batch.empty()) throw ValidationError("empty slice batch");
  const auto rows = batch[0]->image.rows, cols = batch[0]->image.cols;
  auto out = torch::empty({static_cast<std::int64_t>(batch.size()), rows, cols}, torch::kInt64);
  auto* dst = out.data_ptr<std::int64_t>();
  for (const auto* s : batch) {
    if (!s->mask) {
      throw ValidationError("slice " + std::to_string(s->slice_index) + " of volume " + s->volume_id +
                            " has no mask");
    }
    if (s->mask->rows != rows || s->mask->cols != cols) throw ShapeError("mask shape differs from image shape");
    for (Label l : s->mask->data) *dst++ = l;
  }
  return out;
}

Grid2<float> tensor_to_grid(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  if (c.dim() == 3 && c.size(0) == 1) c = c.squeeze(0);
  if (c.dim() != 2) throw ShapeError("expected a 2D tensor");
  Grid2<float> g;
  g.rows = c.size(0);
  g.cols = c.size(1);
  g.data.assign(c.data_ptr<float>(), c.data_ptr<float>() + g.rows * g.cols);
  return g;
}

SliceBatch all_slices(std::span<const SliceSample> slices) {
  SliceBatch b;
  for (const auto& s : slices) b.push_back(&s);
  return b;
}

bool finite(const torch::Tensor& loss) { return std::isfinite(loss.item<double>()); }

}  // namespace cmada
