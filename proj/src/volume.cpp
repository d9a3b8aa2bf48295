#include "cmada/volume.hpp"

#include <cmath>

namespace cmada {

void validate_spacing(const Spacing3& spacing) {
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ValidationError("voxel spacing must be strictly positive and finite");
    }
  }
}

void Volume::validate() const {
  validate_spacing(spacing);
  const auto& s = data.shape();
  for (std::int64_t n = 0; n < data.size(); ++n) {
    if (!std::isfinite(data[n])) {
      const std::int64_t i = n % s[0];
      const std::int64_t j = (n / s[0]) % s[1];
      const std::int64_t k = n / (s[0] * s[1]);
      throw ValidationError("non-finite voxel at index (" + std::to_string(i) + ", " +
                            std::to_string(j) + ", " + std::to_string(k) + ")");
    }
  }
}

void LabelVolume::validate() const {
  validate_spacing(spacing);
  if (num_classes < 1 || num_classes > 255) throw ValidationError("invalid class count");
  for (std::int64_t n = 0; n < data.size(); ++n) {
    if (data[n] >= num_classes) {
      throw ValidationError("label value " + std::to_string(data[n]) + " at linear index " +
                            std::to_string(n) + " exceeds class count");
    }
  }
}

std::string to_string(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::mapped_source: return "mapped_source";
    case Domain::target: return "target";
  }
  return "unknown";
}

namespace {

struct SliceAxes {
  int col_axis;
  int row_axis;
};

SliceAxes slice_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
    default: throw ValidationError("slice axis must be 0, 1 or 2");
  }
}

template <typename T>
Grid2<T> extract(const Grid3<T>& g, int axis, std::int64_t index) {
  const auto [ca, ra] = slice_axes(axis);
  const auto& s = g.shape();
  if (index < 0 || index >= s[axis]) throw ValidationError("slice index out of range");
  Grid2<T> out;
  out.rows = s[ra];
  out.cols = s[ca];
  out.data.resize(static_cast<std::size_t>(out.rows * out.cols));
  std::array<std::int64_t, 3> p{};
  p[axis] = index;
  for (std::int64_t r = 0; r < out.rows; ++r) {
    p[ra] = r;
    for (std::int64_t c = 0; c < out.cols; ++c) {
      p[ca] = c;
      out(r, c) = g(p[0], p[1], p[2]);
    }
  }
  return out;
}

template <typename T>
void insert(Grid3<T>& g, int axis, std::int64_t index, const Grid2<T>& sl) {
  const auto [ca, ra] = slice_axes(axis);
  const auto& s = g.shape();
  if (index < 0 || index >= s[axis]) throw ValidationError("slice index out of range");
  if (sl.rows != s[ra] || sl.cols != s[ca]) throw ShapeError("slice shape does not match grid");
  std::array<std::int64_t, 3> p{};
  p[axis] = index;
  for (std::int64_t r = 0; r < sl.rows; ++r) {
    p[ra] = r;
    for (std::int64_t c = 0; c < sl.cols; ++c) {
      p[ca] = c;
      g(p[0], p[1], p[2]) = sl(r, c);
    }
  }
}

}  // namespace

Grid2<float> extract_slice(const Volume& v, int axis, std::int64_t index) {
  return extract(v.data, axis, index);
}

Grid2<Label> extract_slice(const LabelVolume& v, int axis, std::int64_t index) {
  return extract(v.data, axis, index);
}

std::int64_t slice_count(const Shape3& shape, int axis) {
  slice_axes(axis);
  return shape[axis];
}

void insert_slice(Grid3<float>& g, int axis, std::int64_t index, const Grid2<float>& s) {
  insert(g, axis, index, s);
}

void insert_slice(Grid3<Label>& g, int axis, std::int64_t index, const Grid2<Label>& s) {
  insert(g, axis, index, s);
}

Grid3<std::uint8_t> class_mask(const LabelVolume& v, int cls) {
  Grid3<std::uint8_t> m(v.shape(), 0);
  for (std::int64_t n = 0; n < v.data.size(); ++n) m[n] = v.data[n] == cls ? 1 : 0;
  return m;
}

}  // namespace cmada
