#include "cmada/phantom.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cmada/rng.hpp"

namespace cmada {

double DomainAppearance::class_intensity(int cls) const {
  const double m = class_means.at(static_cast<std::size_t>(cls));
  return invert ? 1.0 - m : m;
}

double DomainAppearance::distractor_intensity() const {
  return invert ? 1.0 - distractor_mean : distractor_mean;
}

namespace {

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radius;

  bool contains(double i, double j, double k) const {
    const double a = (i - center[0]) / radius[0];
    const double b = (j - center[1]) / radius[1];
    const double c = (k - center[2]) / radius[2];
    return a * a + b * b + c * c <= 1.0;
  }
};

void validate_structure(const StructureSpec& s, const Shape3& shape, const char* name) {
  for (int d = 0; d < 3; ++d) {
    const double extent = static_cast<double>(shape[d] - 1);
    if (s.radius_min[d] <= 0.0 || s.radius_min[d] > s.radius_max[d] ||
        s.center_min[d] > s.center_max[d] || s.center_min[d] < 0.0 || s.center_max[d] > 1.0) {
      throw ValidationError(fmt::format("invalid {} placement ranges on axis {}", name, d));
    }
    if (s.center_min[d] * extent - s.radius_max[d] < 0.0 ||
        s.center_max[d] * extent + s.radius_max[d] > extent) {
      throw ValidationError(fmt::format("{} cannot fit inside the grid along axis {}", name, d));
    }
  }
}

Ellipsoid draw(const StructureSpec& s, const Shape3& shape, Rng& rng) {
  Ellipsoid e{};
  for (int d = 0; d < 3; ++d) {
    const double extent = static_cast<double>(shape[d] - 1);
    e.center[d] = rng.uniform(s.center_min[d], s.center_max[d]) * extent;
    e.radius[d] = rng.uniform(s.radius_min[d], s.radius_max[d]);
  }
  return e;
}

bool separated(const Ellipsoid& a, const Ellipsoid& b) {
  double q = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double t = (a.center[d] - b.center[d]) / (a.radius[d] + b.radius[d]);
    q += t * t;
  }
  return q >= 1.0;
}

struct Anatomy {
  LabelVolume label;
  Grid3<std::uint8_t> distractor;
  Grid3<std::uint8_t> head;
};

Anatomy draw_anatomy(const PhantomSpec& spec, Rng& rng) {
  Anatomy a{LabelVolume{Grid3<Label>(spec.shape, 0), spec.spacing, kDefaultClassCount},
            Grid3<std::uint8_t>(spec.shape, 0), Grid3<std::uint8_t>(spec.shape, 0)};
  Ellipsoid head{};
  for (int d = 0; d < 3; ++d) {
    head.center[d] = static_cast<double>(spec.shape[d] - 1) / 2.0;
    head.radius[d] = spec.head_radius[d] * static_cast<double>(spec.shape[d]);
  }
  std::vector<Ellipsoid> distractors;
  for (int n = 0; n < spec.distractors_per_volume; ++n) distractors.push_back(draw(spec.distractor, spec.shape, rng));
  const Ellipsoid tumor = draw(spec.tumor, spec.shape, rng);
  Ellipsoid cochlea = draw(spec.cochlea, spec.shape, rng);
  int attempts = 0;
  while (!separated(tumor, cochlea)) {
    if (++attempts > 1000) throw ValidationError("cannot place cochlea apart from tumor");
    cochlea = draw(spec.cochlea, spec.shape, rng);
  }
  const auto& s = spec.shape;
  for (std::int64_t k = 0; k < s[2]; ++k) {
    for (std::int64_t j = 0; j < s[1]; ++j) {
      for (std::int64_t i = 0; i < s[0]; ++i) {
        const double x = static_cast<double>(i), y = static_cast<double>(j), z = static_cast<double>(k);
        if (head.contains(x, y, z)) a.head(i, j, k) = 1;
        for (const auto& e : distractors) {
          if (e.contains(x, y, z)) a.distractor(i, j, k) = 1;
        }
        if (tumor.contains(x, y, z)) a.label.data(i, j, k) = 1;
        if (cochlea.contains(x, y, z)) a.label.data(i, j, k) = 2;
      }
    }
  }
  return a;
}

Volume render(const Anatomy& a, const DomainAppearance& app, const PhantomSpec& spec, Rng& rng) {
  Volume v{Grid3<float>(spec.shape), spec.spacing};
  const auto& s = spec.shape;
  const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::int64_t k = 0; k < s[2]; ++k) {
    for (std::int64_t j = 0; j < s[1]; ++j) {
      for (std::int64_t i = 0; i < s[0]; ++i) {
        const Label c = a.label.data(i, j, k);
        double value = app.air;
        if (c != 0 || a.head(i, j, k)) {
          value = (c == 0 && a.distractor(i, j, k)) ? app.distractor_intensity() : app.class_intensity(c);
        }
        if (app.bias_amplitude != 0.0) {
          const double bx = std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(s[0]) + phase_x);
          const double by = std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(s[1]) + phase_y);
          value *= 1.0 + app.bias_amplitude * bx * by;
        }
        if (app.noise != 0.0) value += app.noise * rng.normal();
        v.data(i, j, k) = static_cast<float>(value);
      }
    }
  }
  return v;
}

}  // namespace

void PhantomSpec::validate() const {
  if (volumes_per_domain < 1) throw ValidationError("volumes_per_domain must be >= 1");
  for (auto n : shape) {
    if (n < 1) throw ValidationError("phantom shape components must be >= 1");
  }
  validate_spacing(spacing);
  for (double r : head_radius) {
    if (r <= 0.0) throw ValidationError("head radii must be positive");
  }
  if (distractors_per_volume < 0) throw ValidationError("distractors_per_volume must be >= 0");
  validate_structure(tumor, shape, "tumor");
  validate_structure(cochlea, shape, "cochlea");
  if (distractors_per_volume > 0) validate_structure(distractor, shape, "distractor");
  for (const auto* app : {&source, &target}) {
    if (app->noise < 0.0 || app->bias_amplitude < 0.0 || app->bias_amplitude >= 1.0) {
      throw ValidationError("noise must be >= 0 and bias amplitude in [0, 1)");
    }
  }
}

PhantomDataset make_phantom_dataset(const PhantomSpec& spec) {
  spec.validate();
  PhantomDataset ds;
  for (int domain = 0; domain < 2; ++domain) {
    const auto& app = domain == 0 ? spec.source : spec.target;
    auto& out = domain == 0 ? ds.source : ds.target;
    for (int n = 0; n < spec.volumes_per_domain; ++n) {
      Rng anatomy_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(domain * 100003 + n)));
      Rng appearance_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(domain * 100003 + n) + (1ULL << 40)));
      auto anatomy = draw_anatomy(spec, anatomy_rng);
      auto image = render(anatomy, app, spec, appearance_rng);
      out.push_back({fmt::format("{}{:03d}", domain == 0 ? "src" : "tgt", n), std::move(image),
                     std::move(anatomy.label)});
    }
  }
  return ds;
}

}  // namespace cmada
