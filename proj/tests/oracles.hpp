#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cmada/metrics.hpp"
#include "cmada/rng.hpp"

namespace oracle {

using cmada::BinaryMask;
using cmada::Spacing3;

// Direct 6-neighbour scan.
inline std::vector<std::int64_t> surface(const BinaryMask& m) {
  const auto s = m.shape();
  std::vector<std::int64_t> out;
  for (std::int64_t k = 0; k < s[2]; ++k)
    for (std::int64_t j = 0; j < s[1]; ++j)
      for (std::int64_t i = 0; i < s[0]; ++i) {
        if (!m(i, j, k)) continue;
        const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        bool edge = false;
        for (const auto& o : d) {
          const auto a = i + o[0], b = j + o[1], c = k + o[2];
          if (a < 0 || b < 0 || c < 0 || a >= s[0] || b >= s[1] || c >= s[2] || !m(a, b, c)) edge = true;
        }
        if (edge) out.push_back(m.index(i, j, k));
      }
  return out;
}

// O(|S_P| |S_G|) all-pairs minimum, accumulated in the same order as the
// definition: surface points of P first, then of G.
inline std::optional<double> assd(const BinaryMask& p, const BinaryMask& g, const Spacing3& sp) {
  const auto sp_ = surface(p), sg = surface(g);
  if (sp_.empty() || sg.empty()) return std::nullopt;
  const auto s = p.shape();
  auto coord = [&](std::int64_t n) {
    return std::array<std::int64_t, 3>{n % s[0], (n / s[0]) % s[1], n / (s[0] * s[1])};
  };
  auto d2 = [&](std::int64_t a, std::int64_t b) {
    const auto x = coord(a), y = coord(b);
    double dx = static_cast<double>(x[0] - y[0]) * sp[0];
    double dy = static_cast<double>(x[1] - y[1]) * sp[1];
    double dz = static_cast<double>(x[2] - y[2]) * sp[2];
    return dx * dx + dy * dy + dz * dz;
  };
  double sum = 0.0;
  for (auto a : sp_) {
    double best = std::numeric_limits<double>::infinity();
    for (auto b : sg) best = std::min(best, d2(a, b));
    sum += std::sqrt(best);
  }
  for (auto b : sg) {
    double best = std::numeric_limits<double>::infinity();
    for (auto a : sp_) best = std::min(best, d2(b, a));
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(sp_.size() + sg.size());
}

// Random blobby mask: a few random boxes plus salt.
inline BinaryMask random_mask(cmada::Rng& rng, cmada::Shape3 s) {
  BinaryMask m(s, 0);
  const int boxes = 1 + static_cast<int>(rng.below(3));
  for (int b = 0; b < boxes; ++b) {
    std::array<std::int64_t, 3> lo{}, hi{};
    for (int d = 0; d < 3; ++d) {
      lo[d] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s[d])));
      hi[d] = std::min<std::int64_t>(s[d], lo[d] + 1 + static_cast<std::int64_t>(rng.below(6)));
    }
    for (auto k = lo[2]; k < hi[2]; ++k)
      for (auto j = lo[1]; j < hi[1]; ++j)
        for (auto i = lo[0]; i < hi[0]; ++i) m(i, j, k) = 1;
  }
  for (int n = 0; n < 5; ++n) {
    m[static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(m.size())))] = 1;
  }
  return m;
}

}  // namespace oracle
