#include "cmada/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmada {

namespace {

Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target) {
  Shape3 out{};
  for (int d = 0; d < 3; ++d) {
    const double n = std::round(static_cast<double>(shape[d]) * spacing[d] / target[d]);
    out[d] = std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
  }
  return out;
}

// Source coordinate of every output index along one axis, split into the
// lower neighbour and the interpolation weight of the upper neighbour.
struct AxisSamples {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> frac;
};

AxisSamples axis_samples(std::int64_t n_out, std::int64_t n_in, double scale) {
  AxisSamples s;
  s.lo.resize(n_out);
  s.hi.resize(n_out);
  s.frac.resize(n_out);
  for (std::int64_t i = 0; i < n_out; ++i) {
    double x = static_cast<double>(i) * scale;
    x = std::min(x, static_cast<double>(n_in - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(x));
    s.lo[i] = lo;
    s.hi[i] = std::min(lo + 1, n_in - 1);
    s.frac[i] = x - static_cast<double>(lo);
  }
  return s;
}

template <typename T>
Grid3<T> conform(const Grid3<T>& g, const Shape3& target, T fill) {
  for (auto n : target) {
    if (n < 1) throw ValidationError("target shape components must be >= 1");
  }
  Grid3<T> out(target, fill);
  const auto& s = g.shape();
  // offset maps output index -> input index (negative when padding)
  std::array<std::int64_t, 3> offset{};
  for (int d = 0; d < 3; ++d) offset[d] = s[d] >= target[d] ? (s[d] - target[d]) / 2 : -((target[d] - s[d]) / 2);
  for (std::int64_t k = 0; k < target[2]; ++k) {
    const std::int64_t sk = k + offset[2];
    if (sk < 0 || sk >= s[2]) continue;
    for (std::int64_t j = 0; j < target[1]; ++j) {
      const std::int64_t sj = j + offset[1];
      if (sj < 0 || sj >= s[1]) continue;
      for (std::int64_t i = 0; i < target[0]; ++i) {
        const std::int64_t si = i + offset[0];
        if (si < 0 || si >= s[0]) continue;
        out(i, j, k) = g(si, sj, sk);
      }
    }
  }
  return out;
}

}  // namespace

Volume resample(const Volume& v, const Spacing3& target_spacing, Interpolation interp) {
  validate_spacing(v.spacing);
  validate_spacing(target_spacing);
  if (v.spacing == target_spacing) return v;
  const auto& in = v.shape();
  const auto out_shape = resampled_shape(in, v.spacing, target_spacing);
  Volume out{Grid3<float>(out_shape), target_spacing};

  std::array<AxisSamples, 3> ax;
  for (int d = 0; d < 3; ++d) ax[d] = axis_samples(out_shape[d], in[d], target_spacing[d] / v.spacing[d]);

  if (interp == Interpolation::nearest) {
    for (std::int64_t k = 0; k < out_shape[2]; ++k) {
      const auto sk = ax[2].frac[k] >= 0.5 ? ax[2].hi[k] : ax[2].lo[k];
      for (std::int64_t j = 0; j < out_shape[1]; ++j) {
        const auto sj = ax[1].frac[j] >= 0.5 ? ax[1].hi[j] : ax[1].lo[j];
        for (std::int64_t i = 0; i < out_shape[0]; ++i) {
          const auto si = ax[0].frac[i] >= 0.5 ? ax[0].hi[i] : ax[0].lo[i];
          out.data(i, j, k) = v.data(si, sj, sk);
        }
      }
    }
    return out;
  }

  for (std::int64_t k = 0; k < out_shape[2]; ++k) {
    const double fz = ax[2].frac[k];
    for (std::int64_t j = 0; j < out_shape[1]; ++j) {
      const double fy = ax[1].frac[j];
      for (std::int64_t i = 0; i < out_shape[0]; ++i) {
        const double fx = ax[0].frac[i];
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
          const double wx = (c & 1) ? fx : 1.0 - fx;
          const double wy = (c & 2) ? fy : 1.0 - fy;
          const double wz = (c & 4) ? fz : 1.0 - fz;
          const double w = wx * wy * wz;
          if (w == 0.0) continue;
          const auto si = (c & 1) ? ax[0].hi[i] : ax[0].lo[i];
          const auto sj = (c & 2) ? ax[1].hi[j] : ax[1].lo[j];
          const auto sk = (c & 4) ? ax[2].hi[k] : ax[2].lo[k];
          acc += w * static_cast<double>(v.data(si, sj, sk));
        }
        out.data(i, j, k) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

LabelVolume resample(const LabelVolume& v, const Spacing3& target_spacing) {
  validate_spacing(v.spacing);
  validate_spacing(target_spacing);
  if (v.spacing == target_spacing) return v;
  const auto& in = v.shape();
  const auto out_shape = resampled_shape(in, v.spacing, target_spacing);
  LabelVolume out{Grid3<Label>(out_shape), target_spacing, v.num_classes};
  std::array<AxisSamples, 3> ax;
  for (int d = 0; d < 3; ++d) ax[d] = axis_samples(out_shape[d], in[d], target_spacing[d] / v.spacing[d]);
  for (std::int64_t k = 0; k < out_shape[2]; ++k) {
    const auto sk = ax[2].frac[k] >= 0.5 ? ax[2].hi[k] : ax[2].lo[k];
    for (std::int64_t j = 0; j < out_shape[1]; ++j) {
      const auto sj = ax[1].frac[j] >= 0.5 ? ax[1].hi[j] : ax[1].lo[j];
      for (std::int64_t i = 0; i < out_shape[0]; ++i) {
        const auto si = ax[0].frac[i] >= 0.5 ? ax[0].hi[i] : ax[0].lo[i];
        out.data(i, j, k) = v.data(si, sj, sk);
      }
    }
  }
  return out;
}

Volume conform_shape(const Volume& v, const Shape3& target_shape, float fill) {
  return {conform(v.data, target_shape, fill), v.spacing};
}

LabelVolume conform_shape(const LabelVolume& v, const Shape3& target_shape, Label fill) {
  return {conform(v.data, target_shape, fill), v.spacing, v.num_classes};
}

IntensityStats intensity_stats(const Volume& v) {
  const auto vals = v.data.values();
  double sum = 0.0;
  for (float x : vals) sum += x;
  const double mean = sum / static_cast<double>(vals.size());
  double ss = 0.0;
  for (float x : vals) {
    const double d = x - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / static_cast<double>(vals.size()))};
}

Volume clip_intensities(const Volume& v) {
  const auto st = intensity_stats(v);
  if (st.stddev == 0.0) return v;
  const double lo = st.mean - 3.0 * st.stddev;
  const double hi = st.mean + 3.0 * st.stddev;
  // Round the bounds inward so the float result never leaves [lo, hi].
  float lo_f = static_cast<float>(lo);
  if (static_cast<double>(lo_f) < lo) lo_f = std::nextafter(lo_f, std::numeric_limits<float>::infinity());
  float hi_f = static_cast<float>(hi);
  if (static_cast<double>(hi_f) > hi) hi_f = std::nextafter(hi_f, -std::numeric_limits<float>::infinity());
  Volume out = v;
  for (auto& x : out.data.values()) {
    if (x < lo) x = lo_f;
    else if (x > hi) x = hi_f;
  }
  return out;
}

Volume normalize(const Volume& v) {
  const auto vals = v.data.values();
  const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *mn, hi = *mx;
  Volume out = v;
  if (hi == lo) {
    std::fill(out.data.values().begin(), out.data.values().end(), 0.0f);
    return out;
  }
  const double scale = 2.0 / (hi - lo);
  for (auto& x : out.data.values()) x = static_cast<float>((x - lo) * scale - 1.0);
  return out;
}

Volume preprocess(const Volume& v, const PreprocessConfig& cfg) {
  Volume r = resample(v, cfg.spacing, Interpolation::linear);
  const auto vals = r.data.values();
  const float fill = *std::min_element(vals.begin(), vals.end());
  r = conform_shape(r, cfg.shape, fill);
  if (cfg.clip) r = clip_intensities(r);
  return normalize(r);
}

LabelVolume preprocess(const LabelVolume& v, const PreprocessConfig& cfg) {
  return conform_shape(resample(v, cfg.spacing), cfg.shape, 0);
}

}  // namespace cmada
