#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmada/error.hpp"

namespace cmada {

using Shape3 = std::array<std::int64_t, 3>;
using Spacing3 = std::array<double, 3>;

/// Dense 3D grid stored x-fastest: index(i, j, k) = i + nx * (j + ny * k).
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Shape3 shape, T fill = T{}) : shape_(shape) {
    for (auto n : shape) {
      if (n < 1) throw ValidationError("grid shape components must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(shape[0] * shape[1] * shape[2]), fill);
  }

  const Shape3& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i + shape_[0] * (j + shape_[1] * k);
  }
  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[index(i, j, k)]; }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[index(i, j, k)];
  }
  T& operator[](std::int64_t n) { return data_[n]; }
  const T& operator[](std::int64_t n) const { return data_[n]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Grid3&) const = default;

 private:
  Shape3 shape_{0, 0, 0};
  std::vector<T> data_;
};

using Label = std::uint8_t;
inline constexpr int kDefaultClassCount = 3;

void validate_spacing(const Spacing3& spacing);

/// Scalar intensity volume with physical voxel spacing in mm.
struct Volume {
  Grid3<float> data;
  Spacing3 spacing{1.0, 1.0, 1.0};

  const Shape3& shape() const { return data.shape(); }
  /// Throws ValidationError naming the first non-finite voxel or bad spacing.
  void validate() const;
  bool operator==(const Volume&) const = default;
};

struct LabelVolume {
  Grid3<Label> data;
  Spacing3 spacing{1.0, 1.0, 1.0};
  int num_classes = kDefaultClassCount;

  const Shape3& shape() const { return data.shape(); }
  void validate() const;
  bool operator==(const LabelVolume&) const = default;
};

/// Row-major 2D grid (rows = y, cols = x).
template <typename T>
struct Grid2 {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<T> data;

  T& operator()(std::int64_t r, std::int64_t c) { return data[r * cols + c]; }
  const T& operator()(std::int64_t r, std::int64_t c) const { return data[r * cols + c]; }
  bool operator==(const Grid2&) const = default;
};

enum class Domain { source, mapped_source, target };
std::string to_string(Domain d);

struct SliceSample {
  Grid2<float> image;
  std::optional<Grid2<Label>> mask;
  Domain domain = Domain::source;
  std::string volume_id;
  std::int64_t slice_index = 0;
};

/// The slicing axis; axial is the third grid axis.
inline constexpr int kAxialAxis = 2;

Grid2<float> extract_slice(const Volume& v, int axis, std::int64_t index);
Grid2<Label> extract_slice(const LabelVolume& v, int axis, std::int64_t index);
std::int64_t slice_count(const Shape3& shape, int axis);

/// Writes a 2D slice back into the grid along `axis`.
void insert_slice(Grid3<float>& g, int axis, std::int64_t index, const Grid2<float>& s);
void insert_slice(Grid3<Label>& g, int axis, std::int64_t index, const Grid2<Label>& s);

/// Binary mask of one class as a 3D grid of 0/1.
Grid3<std::uint8_t> class_mask(const LabelVolume& v, int cls);

}  // namespace cmada
