#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "cmada/slices.hpp"

namespace cmada {

/// Stacks slice images into an N x 1 x H x W float tensor.
torch::Tensor images_to_tensor(const SliceBatch& batch);
/// Stacks slice masks into an N x H x W int64 tensor; throws when a mask is absent.
torch::Tensor masks_to_tensor(const SliceBatch& batch);
/// H x W (or 1 x H x W) tensor to a grid.
Grid2<float> tensor_to_grid(const torch::Tensor& t);

SliceBatch all_slices(std::span<const SliceSample> slices);

/// True when every element of a scalar loss is finite.
bool finite(const torch::Tensor& loss);

}  // namespace cmada
