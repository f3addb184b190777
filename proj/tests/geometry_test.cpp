// Copyright 2026 The TDR-OBCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tdr_obca/geometry.hpp"

#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace tdr_obca {
namespace {

TEST(PolygonFromVertices, UnitSquare) {
  const auto sq = polygon_from_vertices({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  ASSERT_EQ(sq.size(), 4u);
  const std::vector<Point2> normals{{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  const std::vector<double> offsets{0, 1, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR((sq.normals()[i] - normals[i]).norm(), 0.0, 1e-15);
    EXPECT_NEAR(sq.offsets()[i], offsets[i], 1e-15);
  }
}

TEST(PolygonFromVertices, TriangleHypotenuse) {
  const auto tri = polygon_from_vertices({{0, 0}, {2, 0}, {0, 2}});
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(tri.normals()[1].x(), r, 1e-15);
  EXPECT_NEAR(tri.normals()[1].y(), r, 1e-15);
  EXPECT_NEAR(tri.offsets()[1], std::sqrt(2.0), 1e-15);
  // Every vertex satisfies A z <= b with equality on its two incident edges.
  const std::vector<Point2> verts{{0, 0}, {2, 0}, {0, 2}};
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t e = 0; e < 3; ++e) {
      const double slack = tri.offsets()[e] - tri.normals()[e].dot(verts[v]);
      const bool incident = (e == v) || ((e + 1) % 3 == v);
      if (incident) {
        EXPECT_NEAR(slack, 0.0, 1e-12);
      } else {
        EXPECT_GT(slack, 0.1);
      }
    }
  }
}

TEST(PolygonFromVertices, Errors) {
  EXPECT_PLANNER_ERROR(polygon_from_vertices({{0, 0}, {1, 0}, {2, 0}}),
                       ErrorCode::kCollinearVertices);
  EXPECT_PLANNER_ERROR(polygon_from_vertices({{0, 0}, {1, 0}}), ErrorCode::kTooFewVertices);
  // Clockwise square.
  EXPECT_PLANNER_ERROR(polygon_from_vertices({{0, 0}, {0, 1}, {1, 1}, {1, 0}}),
                       ErrorCode::kNonConvex);
  // Reflex vertex.
  EXPECT_PLANNER_ERROR(polygon_from_vertices({{0, 0}, {2, 0}, {1, 0.5}, {2, 2}, {0, 2}}),
                       ErrorCode::kNonConvex);
}

TEST(SegmentToObstacle, AxisAligned) {
  const auto rect = segment_to_obstacle({0, 0}, {2, 0}, 0.2);
  EXPECT_EQ(rect.kind(), ObstacleKind::kBoundaryA);
  EXPECT_TRUE(rect.contains({0, -0.1}, 1e-12));
  EXPECT_TRUE(rect.contains({2, 0.1}, 1e-12));
  EXPECT_FALSE(rect.contains({2.01, 0}, 0.0));
  EXPECT_FALSE(rect.contains({1, 0.11}, 0.0));
  double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
  for (const auto& v : rect.vertices()) {
    xmin = std::min(xmin, v.x());
    xmax = std::max(xmax, v.x());
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
  }
  EXPECT_NEAR(xmin, 0.0, 1e-12);
  EXPECT_NEAR(xmax, 2.0, 1e-12);
  EXPECT_NEAR(ymin, -0.1, 1e-12);
  EXPECT_NEAR(ymax, 0.1, 1e-12);
}

TEST(SegmentToObstacle, Diagonal) {
  const auto rect = segment_to_obstacle({0, 0}, {1, 1}, 0.2);
  const double r = 1.0 / std::sqrt(2.0);
  // Oracle: the same rectangle built from its four corners.
  const Point2 n(-r, r);
  const std::vector<Point2> corners{Point2(0, 0) - 0.1 * n, Point2(1, 1) - 0.1 * n,
                                    Point2(1, 1) + 0.1 * n, Point2(0, 0) + 0.1 * n};
  const auto oracle = polygon_from_vertices(std::span<const Point2>(corners));
  int long_edges = 0;
  for (std::size_t i = 0; i < rect.size(); ++i) {
    EXPECT_NEAR((rect.normals()[i] - oracle.normals()[i]).norm(), 0.0, 1e-12);
    EXPECT_NEAR(rect.offsets()[i], oracle.offsets()[i], 1e-12);
    const auto& nn = rect.normals()[i];
    if (std::abs(std::abs(nn.x()) - r) < 1e-12 && std::abs(nn.x() + nn.y()) < 1e-12) ++long_edges;
  }
  EXPECT_EQ(long_edges, 2);
  EXPECT_PLANNER_ERROR(segment_to_obstacle({0, 0}, {0, 0}, 0.2), ErrorCode::kZeroLengthSegment);
}

TEST(PoseTransform, Values) {
  const auto id = pose_transform({3, 4, 0, 0});
  EXPECT_TRUE(id.rotation.isApprox(Eigen::Matrix2d::Identity()));
  EXPECT_EQ(id.translation, Eigen::Vector2d(3, 4));
  const auto quarter = pose_transform({0, 0, 0, M_PI / 2});
  Eigen::Matrix2d expected;
  expected << 0, -1, 1, 0;
  EXPECT_NEAR((quarter.rotation - expected).norm(), 0.0, 1e-15);
  const auto t = pose_transform({0, 0, 0, 0.3});
  EXPECT_NEAR(t.rotation(0, 0), 0.955336489125606, 1e-15);
  EXPECT_NEAR(t.rotation(1, 0), 0.295520206661340, 1e-15);
  EXPECT_NEAR(t.rotation(0, 1), -0.295520206661340, 1e-15);
  EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-15);
}

TEST(PolygonDistance, ReferenceCases) {
  auto box = [](double x0, double y0, double x1, double y1) {
    return polygon_from_vertices({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
  };
  const auto unit = box(0, 0, 1, 1);
  EXPECT_NEAR(polygon_distance(unit, box(3, 0, 4, 1)), 2.0, 1e-12);
  EXPECT_NEAR(polygon_distance(unit, box(2, 2, 3, 3)), std::sqrt(2.0), 1e-12);
  EXPECT_EQ(polygon_distance(unit, box(0.5, 0.5, 1.5, 1.5)), 0.0);
  EXPECT_EQ(polygon_distance(unit, box(1, 0, 2, 1)), 0.0);
}

TEST(PolygonProperties, VertexRecovery) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto verts = test::random_convex_polygon(rng, {0, 0}, 2.0);
    const auto poly = polygon_from_vertices(std::span<const Point2>(verts));
    ASSERT_EQ(poly.vertices().size(), verts.size());
    for (const auto& v : verts) {
      double best = 1e9;
      for (const auto& w : poly.vertices()) best = std::min(best, (v - w).norm());
      EXPECT_LT(best, 1e-9);
    }
  }
}

TEST(PolygonProperties, SymmetryAndTriangleInequality) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> c(-8.0, 8.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = test::random_convex_polygon(rng, {c(rng), c(rng)}, 1.5);
    const auto b = test::random_convex_polygon(rng, {c(rng), c(rng)}, 1.5);
    const auto p = test::random_convex_polygon(rng, {c(rng), c(rng)}, 1.5);
    const double ab = polygon_distance(std::span<const Point2>(a), std::span<const Point2>(b));
    const double ba = polygon_distance(std::span<const Point2>(b), std::span<const Point2>(a));
    EXPECT_NEAR(ab, ba, 1e-12);
    // Set distance obeys d(A,B) <= d(A,P) + diam(P) + d(P,B).
    double diam = 0.0;
    for (const auto& u : p) {
      for (const auto& v : p) diam = std::max(diam, (u - v).norm());
    }
    const double ap = polygon_distance(std::span<const Point2>(a), std::span<const Point2>(p));
    const double pb = polygon_distance(std::span<const Point2>(p), std::span<const Point2>(b));
    EXPECT_LE(ab, ap + diam + pb + 1e-9);
  }
}

TEST(PolygonProperties, BruteForceSamplingNeverBeatsDistance) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> c(-5.0, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = test::random_convex_polygon(rng, {c(rng), c(rng)}, 1.0);
    const auto b = test::random_convex_polygon(rng, {c(rng), c(rng)}, 1.0);
    const double d = polygon_distance(std::span<const Point2>(a), std::span<const Point2>(b));
    // Sample boundary points densely; no pair may be closer than d.
    auto sample = [&](const std::vector<Point2>& poly) {
      std::vector<Point2> pts;
      for (std::size_t i = 0; i < poly.size(); ++i) {
        for (int s = 0; s <= 50; ++s) {
          pts.push_back(poly[i] + (s / 50.0) * (poly[(i + 1) % poly.size()] - poly[i]));
        }
      }
      return pts;
    };
    double best = 1e9;
    for (const auto& u : sample(a)) {
      for (const auto& v : sample(b)) best = std::min(best, (u - v).norm());
    }
    if (d > 0.0) {
      EXPECT_GE(best, d - 1e-9);
      EXPECT_LE(best, d + 0.05);
    }
  }
}

// Any dual-feasible (lambda, mu) lower-bounds the posed-vehicle distance.
TEST(PolygonProperties, WeakDualityCertificate) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> c(-10.0, 10.0);
  std::uniform_real_distribution<double> heading(-M_PI, M_PI);
  std::uniform_real_distribution<double> pos(0.0, 2.0);
  const VehicleFootprint fp;
  const Eigen::Matrix<double, 4, 2> G = fp.G();
  const Eigen::Vector4d g = fp.g();
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const VehicleState s{c(rng), c(rng), 0.0, heading(rng)};
    const auto verts = test::random_convex_polygon(rng, {c(rng), c(rng)}, 2.5);
    const auto obs = polygon_from_vertices(std::span<const Point2>(verts));
    const auto tf = pose_transform(s);
    const Eigen::MatrixX2d A = obs.A();
    Eigen::VectorXd lambda(A.rows());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = pos(rng);
    Eigen::Vector2d w = A.transpose() * lambda;
    if (w.norm() > 1.0) {
      lambda /= w.norm();
      w = A.transpose() * lambda;
    }
    const Eigen::Vector2d target = -tf.rotation.transpose() * w;  // G' mu = target
    Eigen::Vector4d mu;
    const double extra_x = pos(rng), extra_y = pos(rng);
    mu << std::max(target.x(), 0.0) + extra_x, std::max(target.y(), 0.0) + extra_y,
        std::max(-target.x(), 0.0) + extra_x, std::max(-target.y(), 0.0) + extra_y;
    ASSERT_NEAR((G.transpose() * mu - target).norm(), 0.0, 1e-12);
    const double value = -g.dot(mu) + (A * tf.translation - obs.b()).dot(lambda);
    const double dist = footprint_distance(fp, s, obs);
    EXPECT_LE(value, dist + 1e-6);
    ++checked;
  }
  EXPECT_GE(checked, 200);
}

}  // namespace
}  // namespace tdr_obca
