#pragma once

// Classical comparator: frame-to-frame block matching of every landmark by
// sum of squared differences, with a quadratic subpixel fit and one pass of
// neighbour smoothing. Drift accumulates by design.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "tagstrain/geometry.hpp"
#include "tagstrain/image.hpp"
#include "tagstrain/json_util.hpp"
#include "tagstrain/parallel.hpp"

namespace tagstrain {

struct SSDConfig {
  int window_radius = 5;
  // 6 mm tags at 1.4 mm/px repeat every 4.3 px; a wider search reaches the next stripe.
  int search_radius = 3;
  bool subpixel = true;
  double smoothing_lambda = 0.1;

  void validate() const {
    if (window_radius < 1) throw ConfigError("ssd window_radius must be >= 1");
    if (search_radius < 1) throw ConfigError("ssd search_radius must be >= 1");
    if (!(smoothing_lambda >= 0.0 && smoothing_lambda <= 1.0)) {
      throw ConfigError("ssd smoothing_lambda must lie in [0, 1]");
    }
  }
};

inline Json ssd_config_to_json(const SSDConfig& c) {
  return Json{{"window_radius", c.window_radius},
              {"search_radius", c.search_radius},
              {"subpixel", c.subpixel},
              {"smoothing_lambda", c.smoothing_lambda}};
}

inline SSDConfig ssd_config_from_json(const Json& j, const std::string& path, SSDConfig base = {}) {
  JsonObjectReader r(j, path);
  r.get("window_radius", base.window_radius);
  r.get("search_radius", base.search_radius);
  r.get("subpixel", base.subpixel);
  r.get("smoothing_lambda", base.smoothing_lambda);
  r.finish();
  base.validate();
  return base;
}

/// Per-landmark status bits, OR-ed over all frames.
enum SSDStatus : int {
  kSSDOk = 0,
  kSSDFrozen = 1,           // window left the image; landmark held in place
  kSSDBoundaryMinimum = 2,  // best offset on the search border; no subpixel fit
};

inline double ssd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("ssd: patch sizes differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double ssd(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("ssd: patch shapes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  }
  return ssd(std::span<const double>(a.data), std::span<const double>(b.data));
}

struct SSDTrack {
  LandmarkSequence sequence;
  std::array<int, kLandmarks> status{};
};

namespace detail {

inline std::vector<double> patch_at(const Image& img, Point2 c, int r) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1));
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) out.push_back(sample_bilinear(img, c.x + i, c.y + j));
  }
  return out;
}

/// True when every sample of the search stays inside the pixel-centre lattice.
inline bool search_inside(const Image& img, Point2 p, int reach) {
  return p.x - reach >= 0.5 && p.y - reach >= 0.5 && p.x + reach <= img.width - 0.5 &&
         p.y + reach <= img.height - 0.5;
}

/// Offset of the minimum of a least-squares quadratic through a 3x3 cost
/// neighbourhood (row-major, centre at index 4), clamped to half a pixel.
inline Point2 quadratic_offset(const std::array<double, 9>& f) {
  auto v = [&](int dx, int dy) { return f[(dy + 1) * 3 + (dx + 1)]; };
  double sx = 0, sy = 0, sxy = 0, col_l = 0, col_c = 0, col_r = 0, row_t = 0, row_c = 0, row_b = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const double c = v(dx, dy);
      sx += dx * c;
      sy += dy * c;
      sxy += dx * dy * c;
    }
    col_l += v(-1, dy);
    col_c += v(0, dy);
    col_r += v(1, dy);
    row_t += v(dy, -1);
    row_c += v(dy, 0);
    row_b += v(dy, 1);
  }
  const double gx = sx / 6.0, gy = sy / 6.0, cross = sxy / 4.0;
  const double cxx = (col_l + col_r - 2.0 * col_c) / 6.0;
  const double cyy = (row_t + row_b - 2.0 * row_c) / 6.0;
  // Stationary point of cxx x^2 + cross xy + cyy y^2 + gx x + gy y.
  const double det = 4.0 * cxx * cyy - cross * cross;
  if (!(cxx > 0.0) || !(det > 0.0)) return {0.0, 0.0};
  const double ox = (-2.0 * cyy * gx + cross * gy) / det;
  const double oy = (-2.0 * cxx * gy + cross * gx) / det;
  return {std::clamp(ox, -0.5, 0.5), std::clamp(oy, -0.5, 0.5)};
}

struct Match {
  Point2 displacement;
  int status = kSSDOk;
};

inline Match match_landmark(const Image& prev, const Image& next, Point2 p, const SSDConfig& cfg) {
  const int w = cfg.window_radius, s = cfg.search_radius;
  if (!search_inside(prev, p, w + s)) return {{0.0, 0.0}, kSSDFrozen};
  const std::vector<double> tmpl = patch_at(prev, p, w);
  const int side = 2 * s + 1;
  std::vector<double> cost(static_cast<std::size_t>(side) * side);
  int best_dx = 0, best_dy = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int dy = -s; dy <= s; ++dy) {
    for (int dx = -s; dx <= s; ++dx) {
      const double c = ssd(tmpl, patch_at(next, {p.x + dx, p.y + dy}, w));
      cost[(dy + s) * side + (dx + s)] = c;
      // Ties go to the smaller offset so flat regions stay put.
      const bool closer = dx * dx + dy * dy < best_dx * best_dx + best_dy * best_dy;
      if (c < best || (c == best && closer)) {
        best = c;
        best_dx = dx;
        best_dy = dy;
      }
    }
  }
  Match m{{double(best_dx), double(best_dy)}, kSSDOk};
  if (std::abs(best_dx) == s || std::abs(best_dy) == s) {
    m.status = kSSDBoundaryMinimum;
  } else if (cfg.subpixel && best > 0.0) {  // an exact match needs no refinement
    std::array<double, 9> f{};
    for (int j = -1; j <= 1; ++j) {
      for (int i = -1; i <= 1; ++i) f[(j + 1) * 3 + (i + 1)] = cost[(best_dy + j + s) * side + (best_dx + i + s)];
    }
    const Point2 o = quadratic_offset(f);
    m.displacement.x += o.x;
    m.displacement.y += o.y;
  }
  return m;
}

/// Grid neighbours: adjacent rings on the same spoke, adjacent spokes (wrapping).
inline std::vector<int> grid_neighbours(int idx) {
  const int ring = idx / kSpokes, spoke = idx % kSpokes;
  std::vector<int> out;
  if (ring > 0) out.push_back(landmark_index(ring - 1, spoke));
  if (ring + 1 < kRings) out.push_back(landmark_index(ring + 1, spoke));
  out.push_back(landmark_index(ring, (spoke + kSpokes - 1) % kSpokes));
  out.push_back(landmark_index(ring, (spoke + 1) % kSpokes));
  return out;
}

}  // namespace detail

/// Tracks the initial grid through every frame of the cine.
inline SSDTrack track_ssd(const Cine& cine, const LandmarkGrid& initial, const SSDConfig& cfg = {}) {
  cfg.validate();
  cine.validate();
  for (int i = 0; i < kLandmarks; ++i) {
    if (!detail::search_inside(cine.frames.front(), initial.points[i], cfg.window_radius)) {
      throw DomainError("track_ssd: landmark " + std::to_string(i) + " lies within the window radius of the border");
    }
  }
  SSDTrack out;
  out.sequence.frames.push_back(initial);
  for (int t = 1; t < cine.frame_count(); ++t) {
    const LandmarkGrid& prev = out.sequence.frames.back();
    std::vector<detail::Match> raw(kLandmarks);
    parallel_for(kLandmarks, [&](int i) {
      raw[i] = detail::match_landmark(cine.frames[t - 1], cine.frames[t], prev.points[i], cfg);
    });
    // One Jacobi step toward the mean of the moving neighbours.
    LandmarkGrid next = prev;
    for (int i = 0; i < kLandmarks; ++i) {
      out.status[i] |= raw[i].status;
      if (raw[i].status & kSSDFrozen) continue;
      Point2 mean{0.0, 0.0};
      int n = 0;
      for (int k : detail::grid_neighbours(i)) {
        if (raw[k].status & kSSDFrozen) continue;
        mean.x += raw[k].displacement.x;
        mean.y += raw[k].displacement.y;
        ++n;
      }
      Point2 d = raw[i].displacement;
      if (n > 0) {
        d.x += cfg.smoothing_lambda * (mean.x / n - d.x);
        d.y += cfg.smoothing_lambda * (mean.y / n - d.y);
      }
      next.points[i] = {prev.points[i].x + d.x, prev.points[i].y + d.y};
    }
    out.sequence.frames.push_back(next);
  }
  return out;
}

}  // namespace tagstrain
