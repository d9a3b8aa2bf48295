#include "cmada/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace cmada {

double dice_coefficient(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.shape() != gt.shape()) throw ShapeError("dice: mask shapes differ");
  std::int64_t p = 0, g = 0, both = 0;
  for (std::int64_t n = 0; n < pred.size(); ++n) {
    const bool a = pred[n] != 0, b = gt[n] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<std::int64_t> extract_surface(const BinaryMask& mask) {
  const auto& s = mask.shape();
  std::vector<std::int64_t> out;
  auto background = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    if (i < 0 || j < 0 || k < 0 || i >= s[0] || j >= s[1] || k >= s[2]) return true;
    return mask(i, j, k) == 0;
  };
  for (std::int64_t k = 0; k < s[2]; ++k) {
    for (std::int64_t j = 0; j < s[1]; ++j) {
      for (std::int64_t i = 0; i < s[0]; ++i) {
        if (mask(i, j, k) == 0) continue;
        if (background(i - 1, j, k) || background(i + 1, j, k) || background(i, j - 1, k) ||
            background(i, j + 1, k) || background(i, j, k - 1) || background(i, j, k + 1)) {
          out.push_back(mask.index(i, j, k));
        }
      }
    }
  }
  return out;
}

namespace {

// In-place 1D pass: f[x] <- min_q ((x - q) * h)^2 + f[q].
void min_plus_line(std::vector<double>& f, std::vector<double>& scratch, double h) {
  const auto n = static_cast<std::int64_t>(f.size());
  scratch.assign(f.size(), std::numeric_limits<double>::infinity());
  for (std::int64_t q = 0; q < n; ++q) {
    const double fq = f[q];
    if (std::isinf(fq)) continue;
    for (std::int64_t x = 0; x < n; ++x) {
      const double d = static_cast<double>(x - q) * h;
      const double v = d * d + fq;
      if (v < scratch[x]) scratch[x] = v;
    }
  }
  f.swap(scratch);
}

}  // namespace

Grid3<double> squared_distance_to(const BinaryMask& seeds, const Spacing3& spacing) {
  validate_spacing(spacing);
  const auto& s = seeds.shape();
  const double inf = std::numeric_limits<double>::infinity();
  Grid3<double> dist(s, inf);
  std::vector<double> line, scratch;

  // x pass: seeds contribute (dx * sx)^2.
  for (std::int64_t k = 0; k < s[2]; ++k) {
    for (std::int64_t j = 0; j < s[1]; ++j) {
      line.assign(static_cast<std::size_t>(s[0]), inf);
      for (std::int64_t i = 0; i < s[0]; ++i) {
        if (seeds(i, j, k)) line[i] = 0.0;
      }
      min_plus_line(line, scratch, spacing[0]);
      for (std::int64_t i = 0; i < s[0]; ++i) dist(i, j, k) = line[i];
    }
  }
  for (std::int64_t k = 0; k < s[2]; ++k) {
    for (std::int64_t i = 0; i < s[0]; ++i) {
      line.resize(static_cast<std::size_t>(s[1]));
      for (std::int64_t j = 0; j < s[1]; ++j) line[j] = dist(i, j, k);
      min_plus_line(line, scratch, spacing[1]);
      for (std::int64_t j = 0; j < s[1]; ++j) dist(i, j, k) = line[j];
    }
  }
  for (std::int64_t j = 0; j < s[1]; ++j) {
    for (std::int64_t i = 0; i < s[0]; ++i) {
      line.resize(static_cast<std::size_t>(s[2]));
      for (std::int64_t k = 0; k < s[2]; ++k) line[k] = dist(i, j, k);
      min_plus_line(line, scratch, spacing[2]);
      for (std::int64_t k = 0; k < s[2]; ++k) dist(i, j, k) = line[k];
    }
  }
  return dist;
}

std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, const Spacing3& spacing) {
  if (pred.shape() != gt.shape()) throw ShapeError("assd: mask shapes differ");
  const auto sp = extract_surface(pred);
  const auto sg = extract_surface(gt);
  if (sp.empty() || sg.empty()) return std::nullopt;

  BinaryMask seeds_p(pred.shape(), 0), seeds_g(gt.shape(), 0);
  for (auto n : sp) seeds_p[n] = 1;
  for (auto n : sg) seeds_g[n] = 1;
  const auto to_g = squared_distance_to(seeds_g, spacing);
  const auto to_p = squared_distance_to(seeds_p, spacing);

  double sum = 0.0;
  for (auto n : sp) sum += std::sqrt(to_g[n]);
  for (auto n : sg) sum += std::sqrt(to_p[n]);
  return sum / static_cast<double>(sp.size() + sg.size());
}

MetricSummary summarize(std::span<const std::optional<double>> values) {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++s.defined;
    } else {
      ++s.excluded;
    }
  }
  if (s.defined == 0) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    s.stddev = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = sum / s.defined;
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - s.mean) * (*v - s.mean);
  }
  s.stddev = std::sqrt(ss / s.defined);
  return s;
}

double EvalReport::mean_foreground_dice() const {
  if (dice.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& d : dice) sum += d.mean;
  return sum / static_cast<double>(dice.size());
}

EvalReport evaluate(std::span<const LabelVolume> predictions, std::span<const LabelVolume> truths,
                    const Spacing3& spacing, std::span<const std::string> ids, std::string method) {
  if (predictions.size() != truths.size()) {
    throw ValidationError(fmt::format("evaluate: {} predictions for {} truth volumes",
                                      predictions.size(), truths.size()));
  }
  if (!ids.empty() && ids.size() != truths.size()) throw ValidationError("evaluate: id count mismatch");
  if (truths.empty()) throw ValidationError("evaluate: no volumes");
  EvalReport r;
  r.method = std::move(method);
  r.num_classes = truths[0].num_classes;
  const int fg = r.num_classes - 1;
  for (std::size_t v = 0; v < truths.size(); ++v) {
    if (predictions[v].shape() != truths[v].shape()) throw ShapeError("evaluate: prediction/truth shapes differ");
    VolumeScores vs;
    vs.id = ids.empty() ? fmt::format("{:03d}", v) : ids[v];
    for (int c = 1; c <= fg; ++c) {
      const auto p = class_mask(predictions[v], c);
      const auto g = class_mask(truths[v], c);
      vs.dice.push_back(dice_coefficient(p, g));
      vs.assd.push_back(assd(p, g, spacing));
    }
    r.volumes.push_back(std::move(vs));
  }
  for (int c = 0; c < fg; ++c) {
    std::vector<std::optional<double>> d, a;
    for (const auto& vs : r.volumes) {
      d.emplace_back(vs.dice[c]);
      a.push_back(vs.assd[c]);
    }
    r.dice.push_back(summarize(d));
    r.assd.push_back(summarize(a));
  }
  return r;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : "undefined"; }

std::string class_name(int c) {
  return c < static_cast<int>(kClassNames.size()) ? kClassNames[c] : fmt::format("class{}", c);
}

}  // namespace

std::string format_summary_tsv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << "method\tclass\tmetric\tmean\tstd\tdefined\texcluded\n";
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < r.dice.size(); ++c) {
      const auto name = class_name(static_cast<int>(c) + 1);
      const auto& d = r.dice[c];
      const auto& a = r.assd[c];
      out << fmt::format("{}\t{}\tdice\t{}\t{}\t{}\t{}\n", r.method, name, num(d.mean), num(d.stddev), d.defined, d.excluded);
      out << fmt::format("{}\t{}\tassd_mm\t{}\t{}\t{}\t{}\n", r.method, name, num(a.mean), num(a.stddev), a.defined, a.excluded);
    }
  }
  return out.str();
}

std::string format_volume_tsv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << "method\tvolume\tclass\tdice\tassd_mm\n";
  for (const auto& r : reports) {
    for (const auto& v : r.volumes) {
      for (std::size_t c = 0; c < v.dice.size(); ++c) {
        out << fmt::format("{}\t{}\t{}\t{}\t{}\n", r.method, v.id, class_name(static_cast<int>(c) + 1),
                           num(v.dice[c]), v.assd[c] ? num(*v.assd[c]) : "undefined");
      }
    }
  }
  return out.str();
}

std::string format_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  std::size_t fg = 0;
  for (const auto& r : reports) fg = std::max(fg, r.dice.size());
  out << fmt::format("{:<20}", "Method");
  for (std::size_t c = 0; c < fg; ++c) {
    const auto name = class_name(static_cast<int>(c) + 1);
    out << fmt::format("{:<18}{:<18}", name + " Dice", name + " ASSD");
  }
  out << "\n";
  auto cell = [](const MetricSummary& m) {
    if (m.defined == 0) return std::string("undefined");
    auto s = fmt::format("{:.3f}±{:.3f}", m.mean, m.stddev);
    if (m.excluded > 0) s += fmt::format(" ({}x)", m.excluded);
    return s;
  };
  for (const auto& r : reports) {
    out << fmt::format("{:<20}", r.method);
    for (std::size_t c = 0; c < r.dice.size(); ++c) {
      out << fmt::format("{:<18}{:<18}", cell(r.dice[c]), cell(r.assd[c]));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace cmada
