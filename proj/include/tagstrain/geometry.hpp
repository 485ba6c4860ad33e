#pragma once

// Landmark grids, bounding boxes and the affine maps between image spaces.
//
// Coordinates are continuous pixels: pixel (i, j) covers [i, i+1) x [j, j+1)
// and its centre sits at (i + 0.5, j + 0.5). Boxes are half-open.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tagstrain/error.hpp"

namespace tagstrain {

inline constexpr int kRings = 7;
inline constexpr int kSpokes = 24;
inline constexpr int kLandmarks = kRings * kSpokes;

// Layer rings: second, fourth and sixth counted outward from the cavity.
inline constexpr int kSubendoRing = 1;
inline constexpr int kMidwallRing = 3;
inline constexpr int kSubepiRing = 5;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double squared_norm(Point2 p) { return p.x * p.x + p.y * p.y; }
inline double distance(Point2 a, Point2 b) { return std::sqrt(squared_norm(a - b)); }

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  Point2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
  }

  /// Returns a box after checking it; throws DomainError for empty or non-finite boxes.
  static BoundingBox checked(double x0, double y0, double x1, double y1) {
    BoundingBox b{x0, y0, x1, y1};
    if (!b.valid()) {
      throw DomainError("invalid bounding box (" + std::to_string(x0) + ", " +
                        std::to_string(y0) + ", " + std::to_string(x1) + ", " +
                        std::to_string(y1) + ")");
    }
    return b;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Landmark index p = ring * 24 + spoke; ring 0 is endocardial, ring 6 epicardial.
constexpr int landmark_index(int ring, int spoke) { return ring * kSpokes + spoke; }

struct LandmarkGrid {
  std::array<Point2, kLandmarks> points{};

  Point2& at(int ring, int spoke) { return points[landmark_index(ring, spoke)]; }
  const Point2& at(int ring, int spoke) const { return points[landmark_index(ring, spoke)]; }

  bool finite() const {
    return std::all_of(points.begin(), points.end(), [](const Point2& p) { return p.finite(); });
  }
  /// Padded frames carry an all-zero grid.
  bool empty() const {
    return std::all_of(points.begin(), points.end(),
                       [](const Point2& p) { return p.x == 0.0 && p.y == 0.0; });
  }
  friend bool operator==(const LandmarkGrid&, const LandmarkGrid&) = default;
};

/// Frame 0 is the end-diastolic reference.
struct LandmarkSequence {
  std::vector<LandmarkGrid> frames;

  int size() const { return static_cast<int>(frames.size()); }
  friend bool operator==(const LandmarkSequence&, const LandmarkSequence&) = default;
};

struct AnnulusSpec {
  Point2 center{128.0, 128.0};
  double r_endo = 20.0;
  double r_epi = 30.0;
  double theta_start = std::numbers::pi;  // direction of spoke 0 (mid-septum)
  int orientation = +1;                   // +1 counterclockwise, -1 clockwise

  void validate() const {
    if (!center.finite() || !(r_endo > 0.0) || !(r_endo < r_epi) || !std::isfinite(r_epi)) {
      throw DomainError("annulus requires 0 < r_endo < r_epi");
    }
    if (!(theta_start >= 0.0 && theta_start < 2.0 * std::numbers::pi)) {
      throw DomainError("annulus theta_start must lie in [0, 2*pi)");
    }
    if (orientation != 1 && orientation != -1) {
      throw DomainError("annulus orientation must be +1 or -1");
    }
  }
};

/// Radius of ring `ring`; endpoints sit on the endo and epi contours.
inline double ring_radius(const AnnulusSpec& spec, int ring) {
  return spec.r_endo + (static_cast<double>(ring) / (kRings - 1)) * (spec.r_epi - spec.r_endo);
}

inline double spoke_angle(const AnnulusSpec& spec, int spoke) {
  return spec.theta_start + spec.orientation * spoke * (2.0 * std::numbers::pi / kSpokes);
}

inline LandmarkGrid build_grid(const AnnulusSpec& spec) {
  spec.validate();
  LandmarkGrid grid;
  for (int ring = 0; ring < kRings; ++ring) {
    const double r = ring_radius(spec, ring);
    for (int spoke = 0; spoke < kSpokes; ++spoke) {
      const double a = spoke_angle(spec, spoke);
      grid.at(ring, spoke) = {spec.center.x + r * std::cos(a), spec.center.y + r * std::sin(a)};
    }
  }
  return grid;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Scales width and height by (1 + fraction) about the centre, then clamps to the image.
inline BoundingBox expand_box(const BoundingBox& b, double fraction, double image_w,
                              double image_h) {
  if (!(fraction >= 0.0)) throw DomainError("expand_box fraction must be >= 0");
  const Point2 c = b.center();
  const double hw = 0.5 * b.width() * (1.0 + fraction);
  const double hh = 0.5 * b.height() * (1.0 + fraction);
  return BoundingBox{std::clamp(c.x - hw, 0.0, image_w), std::clamp(c.y - hh, 0.0, image_h),
                     std::clamp(c.x + hw, 0.0, image_w), std::clamp(c.y + hh, 0.0, image_h)};
}

/// Tight axis-aligned extent of the grid. A zero-area extent is a DomainError.
inline BoundingBox landmarks_bbox(const LandmarkGrid& grid) {
  double x0 = grid.points[0].x, x1 = x0, y0 = grid.points[0].y, y1 = y0;
  for (const Point2& p : grid.points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return BoundingBox::checked(x0, y0, x1, y1);
}

enum class MapDirection { kForward, kInverse };

/// Forward maps original coordinates inside `from_box` to a to_w x to_h crop frame;
/// inverse maps crop coordinates back.
inline Point2 map_coords(Point2 p, const BoundingBox& from_box, double to_w, double to_h,
                         MapDirection direction) {
  const double sx = from_box.width() / to_w;
  const double sy = from_box.height() / to_h;
  if (direction == MapDirection::kForward) {
    return {(p.x - from_box.x_min) / sx, (p.y - from_box.y_min) / sy};
  }
  return {from_box.x_min + p.x * sx, from_box.y_min + p.y * sy};
}

inline LandmarkGrid translate(const LandmarkGrid& grid, Point2 offset) {
  LandmarkGrid out = grid;
  for (Point2& p : out.points) p = p + offset;
  return out;
}

/// Rotation by `angle` about `pivot`, followed by `shift`.
inline LandmarkGrid rigid_transform(const LandmarkGrid& grid, Point2 pivot, double angle,
                                    Point2 shift) {
  const double c = std::cos(angle), s = std::sin(angle);
  LandmarkGrid out;
  for (int i = 0; i < kLandmarks; ++i) {
    const Point2 d = grid.points[i] - pivot;
    out.points[i] = Point2{pivot.x + c * d.x - s * d.y, pivot.y + s * d.x + c * d.y} + shift;
  }
  return out;
}

inline LandmarkGrid scale_about(const LandmarkGrid& grid, Point2 pivot, double k) {
  LandmarkGrid out;
  for (int i = 0; i < kLandmarks; ++i) out.points[i] = pivot + k * (grid.points[i] - pivot);
  return out;
}

}  // namespace tagstrain
