#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "tagstrain/geometry.hpp"

using namespace tagstrain;

namespace {

AnnulusSpec annulus(double cx, double cy, double r_endo, double r_epi, double theta = std::numbers::pi) {
  AnnulusSpec a;
  a.center = {cx, cy};
  a.r_endo = r_endo;
  a.r_epi = r_epi;
  a.theta_start = theta;
  return a;
}

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-50.0, 200.0), ext(0.5, 100.0);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + ext(rng), y + ext(rng)};
}

}  // namespace

TEST(BuildGrid, SeptalSpokeEndpoints) {
  const LandmarkGrid g = build_grid(annulus(128, 128, 20, 32));
  EXPECT_NEAR(g.at(0, 0).x, 108.0, 1e-12);
  EXPECT_NEAR(g.at(0, 0).y, 128.0, 1e-12);
  EXPECT_NEAR(g.at(6, 0).x, 96.0, 1e-12);
  EXPECT_NEAR(g.at(6, 0).y, 128.0, 1e-12);
  EXPECT_EQ(&g.at(6, 0), &g.points[6 * 24]);
}

TEST(BuildGrid, QuarterTurnMidwall) {
  const LandmarkGrid g = build_grid(annulus(0, 0, 20, 32, 0.0));
  EXPECT_NEAR(g.at(3, 6).x, 0.0, 1e-12);
  EXPECT_NEAR(g.at(3, 6).y, 26.0, 1e-12);
}

TEST(BuildGrid, DegenerateWallThrows) {
  EXPECT_THROW(build_grid(annulus(0, 0, 20, 20)), DomainError);
  EXPECT_THROW(build_grid(annulus(0, 0, 25, 20)), DomainError);
}

TEST(BuildGrid, EqualRingGapsAlongEverySpoke) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double r_endo = 5 + 30 * u(rng);
    const double r_epi = r_endo + 1 + 20 * u(rng);
    AnnulusSpec a = annulus(100 * u(rng), 100 * u(rng), r_endo, r_epi, 6.28 * u(rng));
    a.orientation = u(rng) < 0.5 ? 1 : -1;
    const LandmarkGrid g = build_grid(a);
    for (int s = 0; s < kSpokes; ++s) {
      for (int r = 0; r + 1 < kRings; ++r) {
        EXPECT_NEAR(distance(g.at(r, s), g.at(r + 1, s)), (r_epi - r_endo) / 6.0, 1e-9);
      }
      // Radially ordered and colinear with the centre.
      const Point2 d0 = g.at(0, s) - a.center, d6 = g.at(6, s) - a.center;
      EXPECT_NEAR(d0.x * d6.y - d0.y * d6.x, 0.0, 1e-9);
      EXPECT_GT(squared_norm(d6), squared_norm(d0));
    }
  }
}

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {5, 5, 6, 6}), 0.0);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
}

TEST(Iou, SymmetricAndBounded) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_DOUBLE_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

TEST(ExpandBox, Examples) {
  const BoundingBox e = expand_box({50, 50, 150, 150}, 0.6, 256, 256);
  EXPECT_NEAR(e.x_min, 20, 1e-12);
  EXPECT_NEAR(e.y_min, 20, 1e-12);
  EXPECT_NEAR(e.x_max, 180, 1e-12);
  EXPECT_NEAR(e.y_max, 180, 1e-12);

  const BoundingBox c = expand_box({0, 0, 100, 100}, 0.6, 256, 256);
  EXPECT_NEAR(c.x_min, 0, 1e-12);
  EXPECT_NEAR(c.y_min, 0, 1e-12);
  EXPECT_NEAR(c.x_max, 130, 1e-12);
  EXPECT_NEAR(c.y_max, 130, 1e-12);

  const BoundingBox b{12.5, 7.25, 40, 90};
  const BoundingBox same = expand_box(b, 0.0, 256, 256);
  EXPECT_DOUBLE_EQ(same.x_min, b.x_min);
  EXPECT_DOUBLE_EQ(same.y_max, b.y_max);
  EXPECT_THROW(expand_box(b, -0.1, 256, 256), DomainError);
}

TEST(ExpandBox, UnclampedPreservesCentreAndScalesArea) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f(0.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    BoundingBox b = random_box(rng);
    const double frac = f(rng);
    const BoundingBox e = expand_box(b, frac, 1e9, 1e9);
    if (e.x_min <= 0 || e.y_min <= 0) continue;  // clamped; property does not apply
    EXPECT_NEAR(e.center().x, b.center().x, 1e-9);
    EXPECT_NEAR(e.center().y, b.center().y, 1e-9);
    EXPECT_NEAR(e.area() / (b.area() * (1 + frac) * (1 + frac)), 1.0, 1e-9);
  }
}

TEST(LandmarksBbox, CircleWithAxisSpokes) {
  const LandmarkGrid g = build_grid(annulus(128, 128, 20, 30));
  const BoundingBox b = landmarks_bbox(g);
  EXPECT_NEAR(b.x_min, 98, 1e-9);
  EXPECT_NEAR(b.y_min, 98, 1e-9);
  EXPECT_NEAR(b.x_max, 158, 1e-9);
  EXPECT_NEAR(b.y_max, 158, 1e-9);

  const BoundingBox t = landmarks_bbox(translate(g, {10, 0}));
  EXPECT_NEAR(t.x_min, 108, 1e-9);
  EXPECT_NEAR(t.x_max, 168, 1e-9);
  EXPECT_NEAR(t.y_min, 98, 1e-9);
}

TEST(LandmarksBbox, DegenerateGridThrows) {
  LandmarkGrid g;
  for (auto& p : g.points) p = {5, 5};
  EXPECT_THROW(landmarks_bbox(g), DomainError);
}

TEST(MapCoords, Examples) {
  const BoundingBox box{20, 20, 180, 180};
  const Point2 p = map_coords({64, 64}, box, 128, 128, MapDirection::kInverse);
  EXPECT_NEAR(p.x, 100, 1e-12);
  EXPECT_NEAR(p.y, 100, 1e-12);
  const Point2 o = map_coords({20, 20}, box, 128, 128, MapDirection::kForward);
  EXPECT_NEAR(o.x, 0, 1e-12);
  EXPECT_NEAR(o.y, 0, 1e-12);
}

TEST(MapCoords, RoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-100, 300), sz(1, 512);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox box = random_box(rng);
    const Point2 p{u(rng), u(rng)};
    const double w = sz(rng), h = sz(rng);
    const Point2 q = map_coords(map_coords(p, box, w, h, MapDirection::kForward), box, w, h,
                                MapDirection::kInverse);
    EXPECT_NEAR(q.x, p.x, 1e-9);
    EXPECT_NEAR(q.y, p.y, 1e-9);
  }
}
