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

// Dual multipliers (lambda, mu) and slack distances d for every
// (obstacle, time step) pair. One block per pair:
//
//   min  (1/beta) |A' lambda|^2 + d
//   s.t. -g' mu + (A t - b)' lambda + d = 0
//        G' mu + R' A' lambda = 0
//        lambda >= 0, mu >= 0, d <= -eps
//
// The norm bound |A' lambda| <= 1 of the exact problem is dropped and
// restored afterwards by rescaling (scale_to_feasible).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>

#include "tdr_obca/common.hpp"
#include "tdr_obca/geometry.hpp"
#include "tdr_obca/qp_solver.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

inline constexpr double kSlackEpsilon = 1e-6;

struct DualWarmStart {
  // Indexed [m][k].
  std::vector<std::vector<Eigen::VectorXd>> lambda;
  std::vector<std::vector<Eigen::Vector4d>> mu;
  std::vector<std::vector<double>> d;
  // Per block: true where the block QP had no solution (contact or overlap)
  // and the block was filled with lambda = mu = 0, d = -eps.
  std::vector<std::vector<bool>> degenerate;
  std::vector<QpReport> reports;  // block order m * K + k

  std::size_t num_obstacles() const { return lambda.size(); }
  std::size_t num_steps() const { return lambda.empty() ? 0 : lambda.front().size(); }

  void resize(std::span<const ConvexObstacle> obstacles, std::size_t K) {
    const std::size_t M = obstacles.size();
    lambda.assign(M, {});
    mu.assign(M, std::vector<Eigen::Vector4d>(K, Eigen::Vector4d::Zero()));
    d.assign(M, std::vector<double>(K, 0.0));
    degenerate.assign(M, std::vector<bool>(K, false));
    for (std::size_t m = 0; m < M; ++m) {
      lambda[m].assign(K, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obstacles[m].size())));
    }
  }
};

/// Data of one (m, k) block, kept for residual checks.
struct DualBlock {
  std::size_t m = 0;
  std::size_t k = 0;
  Eigen::MatrixX2d A;
  Eigen::VectorXd b;
  Eigen::Matrix2d R;
  Eigen::Vector2d t;
  Eigen::Matrix<double, 4, 2> G;
  Eigen::Vector4d g;
  std::vector<Point2> obstacle_vertices;
  QuadraticProgram qp;  // variables [lambda; mu; d]
};

struct RelaxedDualQp {
  std::size_t num_obstacles = 0;
  std::size_t num_steps = 0;
  double beta = 1.0;
  std::vector<DualBlock> blocks;  // block order m * K + k

  const DualBlock& block(std::size_t m, std::size_t k) const { return blocks[m * num_steps + k]; }

  /// Block-diagonal assembly of every block into one QP.
  QuadraticProgram combined() const {
    Eigen::Index n = 0, me = 0, mi = 0;
    for (const auto& b : blocks) {
      n += b.qp.num_variables();
      me += b.qp.A_eq.rows();
      mi += b.qp.A_in.rows();
    }
    std::vector<Eigen::Triplet<double>> tp, te, ti;
    QuadraticProgram out;
    out.q.resize(n);
    out.b_eq.resize(me);
    out.lower.resize(mi);
    out.upper.resize(mi);
    Eigen::Index on = 0, oe = 0, oi = 0;
    auto copy = [](const SparseMatrix& s, Eigen::Index r0, Eigen::Index c0,
                   std::vector<Eigen::Triplet<double>>& t) {
      for (Eigen::Index c = 0; c < s.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(s, c); it; ++it) {
          t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
        }
      }
    };
    for (const auto& b : blocks) {
      copy(b.qp.P, on, on, tp);
      copy(b.qp.A_eq, oe, on, te);
      copy(b.qp.A_in, oi, on, ti);
      out.q.segment(on, b.qp.q.size()) = b.qp.q;
      out.b_eq.segment(oe, b.qp.b_eq.size()) = b.qp.b_eq;
      out.lower.segment(oi, b.qp.lower.size()) = b.qp.lower;
      out.upper.segment(oi, b.qp.upper.size()) = b.qp.upper;
      on += b.qp.num_variables();
      oe += b.qp.A_eq.rows();
      oi += b.qp.A_in.rows();
    }
    out.P.resize(n, n);
    out.P.setFromTriplets(tp.begin(), tp.end());
    out.A_eq.resize(me, n);
    out.A_eq.setFromTriplets(te.begin(), te.end());
    out.A_in.resize(mi, n);
    out.A_in.setFromTriplets(ti.begin(), ti.end());
    return out;
  }
};

/// Residuals of the two equality constraints for one block.
struct DualResidual {
  double distance_row = 0.0;  // -g'mu + (A t - b)'lambda + d
  double body_rows = 0.0;     // |G'mu + R'A'lambda|_inf
  double norm = 0.0;          // |A'lambda|_2
};

inline DualResidual dual_residual(const DualBlock& blk, const Eigen::VectorXd& lambda,
                                  const Eigen::Vector4d& mu, double d) {
  DualResidual r;
  r.distance_row = -blk.g.dot(mu) + (blk.A * blk.t - blk.b).dot(lambda) + d;
  const Eigen::Vector2d atl = blk.A.transpose() * lambda;
  r.body_rows = (blk.G.transpose() * mu + blk.R.transpose() * atl).cwiseAbs().maxCoeff();
  r.norm = atl.norm();
  return r;
}

inline DualBlock make_dual_block(const ConvexObstacle& obstacle, const VehicleFootprint& fp,
                                 const VehicleState& state, double beta, std::size_t m,
                                 std::size_t k) {
  DualBlock blk;
  blk.m = m;
  blk.k = k;
  blk.A = obstacle.A();
  blk.b = obstacle.b();
  const PoseTransform pose = pose_transform(state);
  blk.R = pose.rotation;
  blk.t = pose.translation;
  blk.G = fp.G();
  blk.g = fp.g();
  blk.obstacle_vertices = obstacle.vertices();

  const Eigen::Index nm = blk.A.rows();
  const Eigen::Index n = nm + 5;
  const Eigen::Index im = nm, id = nm + 4;
  QuadraticProgram& qp = blk.qp;

  const Eigen::MatrixXd AAt = blk.A * blk.A.transpose();
  std::vector<Eigen::Triplet<double>> tp;
  for (Eigen::Index i = 0; i < nm; ++i) {
    for (Eigen::Index j = 0; j < nm; ++j) {
      if (AAt(i, j) != 0.0) tp.emplace_back(i, j, 2.0 / beta * AAt(i, j));
    }
  }
  qp.P.resize(n, n);
  qp.P.setFromTriplets(tp.begin(), tp.end());
  qp.q = Eigen::VectorXd::Zero(n);
  qp.q[id] = 1.0;

  const Eigen::VectorXd atb = blk.A * blk.t - blk.b;
  const Eigen::Matrix<double, 2, Eigen::Dynamic> RtAt = blk.R.transpose() * blk.A.transpose();
  std::vector<Eigen::Triplet<double>> te;
  for (Eigen::Index i = 0; i < nm; ++i) {
    te.emplace_back(0, i, atb[i]);
    te.emplace_back(1, i, RtAt(0, i));
    te.emplace_back(2, i, RtAt(1, i));
  }
  for (Eigen::Index j = 0; j < 4; ++j) {
    te.emplace_back(0, im + j, -blk.g[j]);
    te.emplace_back(1, im + j, blk.G(j, 0));
    te.emplace_back(2, im + j, blk.G(j, 1));
  }
  te.emplace_back(0, id, 1.0);
  qp.A_eq.resize(3, n);
  qp.A_eq.setFromTriplets(te.begin(), te.end());
  qp.b_eq = Eigen::VectorXd::Zero(3);

  std::vector<Eigen::Triplet<double>> ti;
  for (Eigen::Index i = 0; i < n; ++i) ti.emplace_back(i, i, 1.0);
  qp.A_in.resize(n, n);
  qp.A_in.setFromTriplets(ti.begin(), ti.end());
  qp.lower = Eigen::VectorXd::Zero(n);
  qp.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  qp.lower[id] = -std::numeric_limits<double>::infinity();
  qp.upper[id] = -kSlackEpsilon;
  return blk;
}

/// Makes a block's multipliers exactly consistent and optimal along their
/// ray. mu is recomputed as the smallest nonnegative solution of
/// G' mu = -R' A' lambda (unique for the rectangle footprint), d follows from
/// the distance row, and (lambda, mu, d) is rescaled by the minimizer of
/// c^2 |A'lambda|^2 / beta + c d over c with c d <= -eps. Returns false when
/// lambda certifies no positive distance.
inline bool refine_dual_block(const DualBlock& blk, double beta, Eigen::VectorXd& lambda,
                              Eigen::Vector4d& mu, double& d) {
  lambda = lambda.cwiseMax(0.0);
  const Eigen::Vector2d w = blk.R.transpose() * (blk.A.transpose() * lambda);
  // G rows are +x, +y, -x, -y in the body frame.
  mu << std::max(0.0, -w.x()), std::max(0.0, -w.y()), std::max(0.0, w.x()), std::max(0.0, w.y());
  const double value = -blk.g.dot(mu) + (blk.A * blk.t - blk.b).dot(lambda);
  const double norm2 = (blk.A.transpose() * lambda).squaredNorm();
  if (!(value > 0.0) || !(norm2 > 0.0)) return false;
  const double c = std::max(beta * value / (2.0 * norm2), kSlackEpsilon / value);
  lambda *= c;
  mu *= c;
  d = -c * value;
  if (d > -kSlackEpsilon) d = -kSlackEpsilon;  // rounding at the bound
  return true;
}

/// Starting point for a block built from the exact closest points: lambda
/// weights the obstacle faces active at its closest point so that A'lambda is
/// the unit separating direction, then refine_dual_block fixes mu, d and the
/// scale. Returns nothing for touching or overlapping bodies.
inline std::optional<QpWarmStart> predict_dual_block(const DualBlock& blk, double beta) {
  const Eigen::Index nm = blk.A.rows();
  std::array<Point2, 4> body;
  const Eigen::Vector4d& g = blk.g;
  const std::array<Point2, 4> corners = {Point2(g[0], g[1]), Point2(-g[2], g[1]),
                                         Point2(-g[2], -g[3]), Point2(g[0], -g[3])};
  for (std::size_t i = 0; i < 4; ++i) body[i] = blk.R * corners[i] + blk.t;
  const std::span<const Point2> ego(body);
  const std::span<const Point2> obs(blk.obstacle_vertices);
  if (polygons_intersect(ego, obs)) return std::nullopt;
  const ClosestPair cp = closest_points(ego, obs);
  if (!(cp.distance > 0.0)) return std::nullopt;
  const Eigen::Vector2d dir = (cp.on_a - cp.on_b) / cp.distance;

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < nm; ++i) {
    const double slack = blk.b[i] - blk.A.row(i).dot(cp.on_b);
    if (std::abs(slack) <= 1e-9 * (1.0 + std::abs(blk.b[i])) * blk.A.row(i).norm()) {
      active.push_back(i);
    }
  }
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nm);
  bool found = false;
  for (const Eigen::Index i : active) {
    const Eigen::Vector2d a = blk.A.row(i).transpose();
    const double li = a.dot(dir) / a.squaredNorm();
    if (li > 0.0 && (li * a - dir).norm() <= 1e-9) {
      lambda[i] = li;
      found = true;
      break;
    }
  }
  for (std::size_t p = 0; !found && p < active.size(); ++p) {
    for (std::size_t q = p + 1; !found && q < active.size(); ++q) {
      Eigen::Matrix2d M;
      M.col(0) = blk.A.row(active[p]).transpose();
      M.col(1) = blk.A.row(active[q]).transpose();
      if (std::abs(M.determinant()) < 1e-12) continue;
      const Eigen::Vector2d l = M.partialPivLu().solve(dir);
      if (l.minCoeff() < 0.0) continue;
      lambda[active[p]] = l[0];
      lambda[active[q]] = l[1];
      found = true;
    }
  }
  if (!found) return std::nullopt;

  Eigen::Vector4d mu;
  double d = 0.0;
  if (!refine_dual_block(blk, beta, lambda, mu, d)) return std::nullopt;
  QpWarmStart w;
  w.x.resize(nm + 5);
  w.x << lambda, mu, d;
  // y = [y_eq (3); y_in (nm + 5)]; -1 marks an active lower bound, +1 the
  // active upper bound on d.
  w.y = Eigen::VectorXd::Zero(3 + nm + 5);
  // Round-off leaves some inactive entries at 1e-18 instead of 0.
  const double floor = 1e-12 * w.x.head(nm + 4).maxCoeff();
  for (Eigen::Index i = 0; i < nm + 4; ++i) {
    if (w.x[i] <= floor) w.y[3 + i] = -1.0;
  }
  if (d >= -kSlackEpsilon) w.y[3 + nm + 4] = 1.0;
  return w;
}

/// One block per (obstacle m, warm state k).
inline RelaxedDualQp build_relaxed_dual_qp(std::span<const VehicleState> warm_states,
                                           std::span<const ConvexObstacle> obstacles,
                                           const VehicleFootprint& footprint, double beta = 1.0) {
  if (obstacles.empty()) detail::fail(ErrorCode::kEmptyObstacleSet, "no obstacles to certify");
  if (!(beta > 0)) detail::fail(ErrorCode::kNonPositiveInput, "beta must be positive");
  RelaxedDualQp out;
  out.num_obstacles = obstacles.size();
  out.num_steps = warm_states.size();
  out.beta = beta;
  out.blocks.reserve(out.num_obstacles * out.num_steps);
  for (std::size_t m = 0; m < obstacles.size(); ++m) {
    for (std::size_t k = 0; k < warm_states.size(); ++k) {
      out.blocks.push_back(make_dual_block(obstacles[m], footprint, warm_states[k], beta, m, k));
    }
  }
  return out;
}

inline RelaxedDualQp build_relaxed_dual_qp(const std::vector<VehicleState>& warm_states,
                                           const std::vector<ConvexObstacle>& obstacles,
                                           const VehicleFootprint& footprint, double beta = 1.0) {
  return build_relaxed_dual_qp(std::span<const VehicleState>(warm_states),
                               std::span<const ConvexObstacle>(obstacles), footprint, beta);
}

/// Solves every block independently; `threads` > 1 fans blocks out to
/// workers, results land in fixed slots so the output does not depend on
/// scheduling.
inline DualWarmStart solve_dual_warm_start(const RelaxedDualQp& problem, unsigned threads = 1) {
  DualWarmStart out;
  const std::size_t M = problem.num_obstacles, K = problem.num_steps;
  out.lambda.assign(M, std::vector<Eigen::VectorXd>(K));
  out.mu.assign(M, std::vector<Eigen::Vector4d>(K, Eigen::Vector4d::Zero()));
  out.d.assign(M, std::vector<double>(K, -kSlackEpsilon));
  out.degenerate.assign(M, std::vector<bool>(K, false));
  out.reports.resize(problem.blocks.size());

  QpSettings settings;
  settings.tol = 1e-10;
  settings.max_iter = 4000;
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < problem.blocks.size(); i += stride) {
      const DualBlock& blk = problem.blocks[i];
      const Eigen::Index nm = blk.A.rows();
      const std::optional<QpWarmStart> guess = predict_dual_block(blk, problem.beta);
      const QpResult r = solve_qp(blk.qp, settings, guess ? &*guess : nullptr);
      out.reports[i] = r.report;
      Eigen::VectorXd lambda = r.x.head(nm);
      Eigen::Vector4d mu = r.x.segment<4>(nm);
      double d = r.x[nm + 4];
      // An unconverged iterate is still usable once refined; a proven
      // infeasible block (contact or overlap) is not.
      if (r.report.status != QpStatus::kInfeasible &&
          refine_dual_block(blk, problem.beta, lambda, mu, d)) {
        out.lambda[blk.m][blk.k] = lambda;
        out.mu[blk.m][blk.k] = mu;
        out.d[blk.m][blk.k] = d;
      } else {
        out.lambda[blk.m][blk.k] = Eigen::VectorXd::Zero(nm);
        out.degenerate[blk.m][blk.k] = true;
      }
    }
  };
  const unsigned workers = std::max(1u, threads);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  return out;
}

/// Divides (lambda, mu, d) of every block with |A'lambda| > 1 by that norm.
inline DualWarmStart scale_to_feasible(const DualWarmStart& dual,
                                       std::span<const ConvexObstacle> obstacles) {
  DualWarmStart out = dual;
  for (std::size_t m = 0; m < out.num_obstacles(); ++m) {
    const Eigen::MatrixX2d A = obstacles[m].A();
    for (std::size_t k = 0; k < out.num_steps(); ++k) {
      const double norm = (A.transpose() * out.lambda[m][k]).norm();
      if (norm > 1.0) {
        out.lambda[m][k] /= norm;
        out.mu[m][k] /= norm;
        out.d[m][k] /= norm;
      }
    }
  }
  return out;
}

inline DualWarmStart scale_to_feasible(const DualWarmStart& dual,
                                       const std::vector<ConvexObstacle>& obstacles) {
  return scale_to_feasible(dual, std::span<const ConvexObstacle>(obstacles));
}

/// Rescales every non-degenerate block to |A'lambda| = 1, which maximizes
/// the certified distance -d along the block's multiplier direction.
inline DualWarmStart normalize_certificate(const DualWarmStart& dual,
                                           std::span<const ConvexObstacle> obstacles) {
  DualWarmStart out = dual;
  for (std::size_t m = 0; m < out.num_obstacles(); ++m) {
    const Eigen::MatrixX2d A = obstacles[m].A();
    for (std::size_t k = 0; k < out.num_steps(); ++k) {
      const double norm = (A.transpose() * out.lambda[m][k]).norm();
      if (norm > 1e-12) {
        out.lambda[m][k] /= norm;
        out.mu[m][k] /= norm;
        out.d[m][k] /= norm;
      }
    }
  }
  return out;
}

/// (1/beta) sum |A'lambda|^2 + sum d over all blocks.
inline double relaxed_dual_objective(const RelaxedDualQp& problem, const DualWarmStart& dual) {
  double obj = 0.0;
  for (const auto& blk : problem.blocks) {
    const double n = (blk.A.transpose() * dual.lambda[blk.m][blk.k]).norm();
    obj += n * n / problem.beta + dual.d[blk.m][blk.k];
  }
  return obj;
}

struct PropositionReport {
  // Feasibility of the rescaled relaxed optimum for the norm-constrained problem.
  double max_equality_residual = 0.0;
  double max_norm = 0.0;
  bool signs_ok = true;
  // Relaxed objective at the relaxed optimum vs at the exact optimum.
  double relaxed_objective = 0.0;
  double exact_in_relaxed_objective = 0.0;
  // sum d_exact <= sum d_scaled <= (1/beta) sum |A'lambda_scaled|^2 + sum d_scaled.
  double sum_d_exact = 0.0;
  double sum_d_scaled = 0.0;
  double chain_upper = 0.0;
  // sum d_scaled - sum d_exact against (1/beta) sum |A'lambda_exact|^2.
  double gap = 0.0;
  double gap_bound = 0.0;

  bool feasible(double tol_eq = 1e-10, double tol_norm = 1e-9) const {
    return signs_ok && max_equality_residual <= tol_eq && max_norm <= 1.0 + tol_norm;
  }
  bool bound_holds(double tol = 1e-8) const {
    return relaxed_objective <= exact_in_relaxed_objective + tol;
  }
  bool chain_holds(double tol = 1e-8) const {
    return sum_d_exact <= sum_d_scaled + tol && sum_d_scaled <= chain_upper + tol &&
           gap <= gap_bound + tol;
  }
};

/// Checks the relations between the exact (norm-constrained) optimum and the
/// relaxed optimum before and after rescaling.
inline PropositionReport check_propositions(const RelaxedDualQp& problem,
                                            const DualWarmStart& exact,
                                            const DualWarmStart& relaxed,
                                            std::span<const ConvexObstacle> obstacles) {
  PropositionReport rep;
  const DualWarmStart scaled = scale_to_feasible(relaxed, obstacles);
  rep.relaxed_objective = relaxed_dual_objective(problem, relaxed);
  rep.exact_in_relaxed_objective = relaxed_dual_objective(problem, exact);
  double scaled_norms = 0.0, exact_norms = 0.0;
  for (const auto& blk : problem.blocks) {
    const auto& l = scaled.lambda[blk.m][blk.k];
    const auto& u = scaled.mu[blk.m][blk.k];
    const double d = scaled.d[blk.m][blk.k];
    const DualResidual r = dual_residual(blk, l, u, d);
    rep.max_equality_residual =
        std::max({rep.max_equality_residual, std::abs(r.distance_row), r.body_rows});
    rep.max_norm = std::max(rep.max_norm, r.norm);
    rep.signs_ok = rep.signs_ok && (l.array() >= 0).all() && (u.array() >= 0).all() && d < 0;
    scaled_norms += r.norm * r.norm;
    const double en = (blk.A.transpose() * exact.lambda[blk.m][blk.k]).norm();
    exact_norms += en * en;
    rep.sum_d_exact += exact.d[blk.m][blk.k];
    rep.sum_d_scaled += d;
  }
  rep.chain_upper = scaled_norms / problem.beta + rep.sum_d_scaled;
  rep.gap = rep.sum_d_scaled - rep.sum_d_exact;
  rep.gap_bound = exact_norms / problem.beta;
  return rep;
}

}  // namespace tdr_obca
