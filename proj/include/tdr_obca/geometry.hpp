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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "tdr_obca/common.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

using Point2 = Eigen::Vector2d;

enum class ObstacleKind {
  kBoundaryA,  // road boundary segment
  kAgentB,     // vehicle or pedestrian polygon
};

namespace detail {

inline double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Vertices of {z : n_i . z <= c_i}, assuming no redundant halfspaces.
inline std::vector<Point2> halfspace_vertices(std::span<const Point2> normals,
                                              std::span<const double> offsets) {
  const std::size_t n = normals.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::atan2(normals[a].y(), normals[a].x()) < std::atan2(normals[b].y(), normals[b].x());
  });
  std::vector<Point2> verts;
  verts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = order[i];
    const std::size_t b = order[(i + 1) % n];
    const double det = cross(normals[a], normals[b]);
    if (det <= 1e-12) {
      fail(ErrorCode::kInvalidArgument, "halfspaces do not bound a polygon");
    }
    // Solve [n_a; n_b] z = [c_a; c_b].
    const double x = (offsets[a] * normals[b].y() - offsets[b] * normals[a].y()) / det;
    const double y = (normals[a].x() * offsets[b] - normals[b].x() * offsets[a]) / det;
    verts.emplace_back(x, y);
  }
  return verts;
}

}  // namespace detail

/// Convex polygon stored as {z : A z <= b} with unit-length outward rows.
class ConvexObstacle {
 public:
  ConvexObstacle(std::vector<Point2> normals, std::vector<double> offsets,
                 ObstacleKind kind = ObstacleKind::kAgentB)
      : normals_(std::move(normals)), offsets_(std::move(offsets)), kind_(kind) {
    if (normals_.size() != offsets_.size()) {
      detail::fail(ErrorCode::kDimensionMismatch, "normals and offsets differ in length");
    }
    if (normals_.size() < 3) {
      detail::fail(ErrorCode::kTooFewVertices, "a polygon needs at least 3 halfspaces");
    }
    for (const auto& n : normals_) {
      if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-12) {
        detail::fail(ErrorCode::kInvalidArgument, "halfspace normals must be unit length");
      }
    }
    vertices_ = detail::halfspace_vertices(normals_, offsets_);
    for (const auto& v : vertices_) {
      if (!contains(v, 1e-9)) {
        detail::fail(ErrorCode::kInvalidArgument, "redundant or inconsistent halfspaces");
      }
    }
  }

  std::size_t size() const { return normals_.size(); }
  const std::vector<Point2>& normals() const { return normals_; }
  const std::vector<double>& offsets() const { return offsets_; }
  ObstacleKind kind() const { return kind_; }
  /// Counter-clockwise vertex loop recovered from the halfspaces.
  const std::vector<Point2>& vertices() const { return vertices_; }

  Eigen::MatrixX2d A() const {
    Eigen::MatrixX2d a(normals_.size(), 2);
    for (std::size_t i = 0; i < normals_.size(); ++i) a.row(i) = normals_[i].transpose();
    return a;
  }

  Eigen::VectorXd b() const {
    return Eigen::Map<const Eigen::VectorXd>(offsets_.data(), offsets_.size());
  }

  bool contains(const Point2& p, double tol = 0.0) const {
    for (std::size_t i = 0; i < normals_.size(); ++i) {
      if (normals_[i].dot(p) > offsets_[i] + tol) return false;
    }
    return true;
  }

 private:
  std::vector<Point2> normals_;
  std::vector<double> offsets_;
  ObstacleKind kind_;
  std::vector<Point2> vertices_;
};

/// Builds halfspaces from a strictly convex counter-clockwise vertex loop.
inline ConvexObstacle polygon_from_vertices(std::span<const Point2> vertices,
                                            ObstacleKind kind = ObstacleKind::kAgentB) {
  const std::size_t n = vertices.size();
  if (n < 3) detail::fail(ErrorCode::kTooFewVertices, "need at least 3 vertices");
  for (const auto& v : vertices) {
    if (!v.allFinite()) detail::fail(ErrorCode::kInvalidArgument, "non-finite vertex");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = vertices[i];
    const Point2& b = vertices[(i + 1) % n];
    const Point2& c = vertices[(i + 2) % n];
    const Point2 e0 = b - a;
    const Point2 e1 = c - b;
    if (e0.norm() == 0.0 || e1.norm() == 0.0) {
      detail::fail(ErrorCode::kCollinearVertices, "repeated vertex");
    }
    const double turn = detail::cross(e0, e1) / (e0.norm() * e1.norm());
    if (std::abs(turn) <= 1e-12) {
      detail::fail(ErrorCode::kCollinearVertices, "three consecutive vertices are collinear");
    }
    if (turn < 0.0) detail::fail(ErrorCode::kNonConvex, "vertex loop is not convex CCW");
  }
  // A CCW loop whose turns are all left can still wind more than once.
  double winding = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 e0 = vertices[(i + 1) % n] - vertices[i];
    const Point2 e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
    winding += std::atan2(detail::cross(e0, e1), e0.dot(e1));
  }
  if (std::abs(winding - 2.0 * M_PI) > 1e-6) {
    detail::fail(ErrorCode::kNonConvex, "vertex loop winds more than once");
  }

  std::vector<Point2> normals;
  std::vector<double> offsets;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 edge = vertices[(i + 1) % n] - vertices[i];
    const Point2 normal = Point2(edge.y(), -edge.x()).normalized();
    normals.push_back(normal);
    offsets.push_back(normal.dot(vertices[i]));
  }
  return ConvexObstacle(std::move(normals), std::move(offsets), kind);
}

inline ConvexObstacle polygon_from_vertices(std::initializer_list<Point2> vertices,
                                            ObstacleKind kind = ObstacleKind::kAgentB) {
  return polygon_from_vertices(std::span<const Point2>(vertices.begin(), vertices.size()), kind);
}

/// Thin rectangle centred on the segment p0 -> p1. Ends are not extended.
inline ConvexObstacle segment_to_obstacle(const Point2& p0, const Point2& p1,
                                          double thickness = 0.1) {
  const Point2 dir = p1 - p0;
  if (dir.norm() <= 1e-12) detail::fail(ErrorCode::kZeroLengthSegment, "p0 == p1");
  if (!(thickness > 0.0)) detail::fail(ErrorCode::kInvalidArgument, "thickness must be positive");
  const Point2 u = dir.normalized();
  const Point2 n(-u.y(), u.x());
  const double h = 0.5 * thickness;
  const std::array<Point2, 4> corners{p0 - h * n, p1 - h * n, p1 + h * n, p0 + h * n};
  return polygon_from_vertices(std::span<const Point2>(corners), ObstacleKind::kBoundaryA);
}

struct PoseTransform {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  Point2 apply(const Point2& body) const { return rotation * body + translation; }
};

inline PoseTransform pose_transform(const VehicleState& s) {
  PoseTransform t;
  const double c = std::cos(s.phi);
  const double sn = std::sin(s.phi);
  t.rotation << c, -sn, sn, c;
  t.translation << s.x, s.y;
  return t;
}

/// Rectangular ego body {y : G y <= g} in the rear-axle frame (x forward).
struct VehicleFootprint {
  double length = 4.933;
  double width = 2.11;
  /// Signed distance from the rear axle forward to the geometric centre.
  double rear_axle_to_center = 1.4235;

  /// Rows of G: +x, +y, -x, -y.
  Eigen::Matrix<double, 4, 2> G() const {
    Eigen::Matrix<double, 4, 2> g;
    g << 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0;
    return g;
  }

  Eigen::Vector4d g() const {
    return {rear_axle_to_center + 0.5 * length, 0.5 * width, 0.5 * length - rear_axle_to_center,
            0.5 * width};
  }

  std::array<Point2, 4> body_vertices() const {
    const Eigen::Vector4d off = g();
    return {Point2(-off[2], -off[3]), Point2(off[0], -off[3]), Point2(off[0], off[1]),
            Point2(-off[2], off[1])};
  }

  std::vector<Point2> vertices_at(const VehicleState& s) const {
    const PoseTransform tf = pose_transform(s);
    std::vector<Point2> out;
    for (const auto& v : body_vertices()) out.push_back(tf.apply(v));
    return out;
  }

  void validate() const {
    if (!(length > 0.0) || !(width > 0.0)) {
      detail::fail(ErrorCode::kInvalidArgument, "footprint dimensions must be positive");
    }
  }
};

/// Separating-axis test on the edge normals of both polygons. Touching
/// polygons count as intersecting.
inline bool polygons_intersect(std::span<const Point2> a, std::span<const Point2> b) {
  auto separated_along_edges = [](std::span<const Point2> p, std::span<const Point2> q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Point2 e = p[(i + 1) % p.size()] - p[i];
      const Point2 axis(e.y(), -e.x());
      double pmax = -std::numeric_limits<double>::infinity();
      double qmin = std::numeric_limits<double>::infinity();
      for (const auto& v : p) pmax = std::max(pmax, axis.dot(v));
      for (const auto& v : q) qmin = std::min(qmin, axis.dot(v));
      if (pmax < qmin) return true;
    }
    return false;
  };
  return !separated_along_edges(a, b) && !separated_along_edges(b, a);
}

/// Largest depth along any edge normal by which the two polygons overlap;
/// nonpositive when they are separated or touching.
inline double overlap_depth(std::span<const Point2> a, std::span<const Point2> b) {
  double depth = std::numeric_limits<double>::infinity();
  auto scan = [&](std::span<const Point2> p, std::span<const Point2> q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Point2 e = p[(i + 1) % p.size()] - p[i];
      const Point2 axis = Point2(e.y(), -e.x()).normalized();
      double pmin = std::numeric_limits<double>::infinity();
      double pmax = -pmin;
      double qmin = pmin;
      double qmax = -pmin;
      for (const auto& v : p) {
        pmin = std::min(pmin, axis.dot(v));
        pmax = std::max(pmax, axis.dot(v));
      }
      for (const auto& v : q) {
        qmin = std::min(qmin, axis.dot(v));
        qmax = std::max(qmax, axis.dot(v));
      }
      depth = std::min(depth, std::min(pmax - qmin, qmax - pmin));
    }
  };
  scan(a, b);
  scan(b, a);
  return depth;
}

/// Euclidean set distance between two convex vertex loops, 0 on contact.
inline double polygon_distance(std::span<const Point2> a, std::span<const Point2> b) {
  if (polygons_intersect(a, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Point2& e0 = b[i];
    const Point2& e1 = b[(i + 1) % b.size()];
    for (const auto& p : a) best = std::min(best, detail::point_segment_distance(p, e0, e1));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point2& e0 = a[i];
    const Point2& e1 = a[(i + 1) % a.size()];
    for (const auto& p : b) best = std::min(best, detail::point_segment_distance(p, e0, e1));
  }
  return best;
}

struct ClosestPair {
  Point2 on_a;
  Point2 on_b;
  double distance = 0.0;
};

/// Closest points of two disjoint convex polygons (vertex-edge pairs only, so
/// the caller must rule out intersection first).
inline ClosestPair closest_points(std::span<const Point2> a, std::span<const Point2> b) {
  ClosestPair best;
  best.distance = std::numeric_limits<double>::infinity();
  auto scan = [&](std::span<const Point2> verts, std::span<const Point2> poly, bool verts_are_a) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point2& e0 = poly[i];
      const Point2 ab = poly[(i + 1) % poly.size()] - e0;
      const double len2 = ab.squaredNorm();
      for (const auto& p : verts) {
        const double t = len2 == 0.0 ? 0.0 : std::clamp((p - e0).dot(ab) / len2, 0.0, 1.0);
        const Point2 q = e0 + t * ab;
        const double dist = (p - q).norm();
        if (dist < best.distance) {
          best.distance = dist;
          best.on_a = verts_are_a ? p : q;
          best.on_b = verts_are_a ? q : p;
        }
      }
    }
  };
  scan(a, b, true);
  scan(b, a, false);
  return best;
}

inline double polygon_distance(const ConvexObstacle& p, const ConvexObstacle& q) {
  return polygon_distance(std::span<const Point2>(p.vertices()),
                          std::span<const Point2>(q.vertices()));
}

/// Distance from the ego body at `state` to `obstacle`.
inline double footprint_distance(const VehicleFootprint& fp, const VehicleState& state,
                                 const ConvexObstacle& obstacle) {
  const auto body = fp.vertices_at(state);
  return polygon_distance(std::span<const Point2>(body),
                          std::span<const Point2>(obstacle.vertices()));
}

}  // namespace tdr_obca
