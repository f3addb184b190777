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

#include "tdr_obca/mpc.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace tdr_obca {
namespace {

using Eigen::VectorXd;

ConvexObstacle box(double x0, double y0, double x1, double y1) {
  return polygon_from_vertices({Point2(x0, y0), Point2(x1, y0), Point2(x1, y1), Point2(x0, y1)});
}

// Straight forward drive along +x, warm-started from the speed profile.
WarmStartTrajectory straight_warm(double length, int K, const VehicleLimits& lim) {
  GearSegment seg;
  seg.gear = Gear::kForward;
  for (int i = 0; i <= 20; ++i) seg.points.push_back({length * i / 20.0, 0.0, 0.0, Gear::kForward});
  const double T = 1.3 * min_traverse_time(length, lim.speed.upper, lim.accel.upper);
  const std::vector<SpeedProfile> prof{optimize_speed_profile(length, lim, K, T)};
  const std::vector<GearSegment> segs{seg};
  return resample_warm_start(segs, prof, K, lim);
}

DualWarmStart warm_duals(const WarmStartTrajectory& warm, const std::vector<ConvexObstacle>& obs,
                         const VehicleFootprint& fp) {
  const std::vector<VehicleState> tail(warm.states.begin() + 1, warm.states.end());
  const RelaxedDualQp qp = build_relaxed_dual_qp(tail, obs, fp, 1.0);
  return scale_to_feasible(solve_dual_warm_start(qp), obs);
}

// ---- evaluate_cost --------------------------------------------------------

TEST(EvaluateCost, AllZeroIsZero) {
  std::vector<VehicleState> s(4);
  std::vector<ControlInput> u(3);
  MpcConfig c;
  c.alpha_x = 1.0;
  std::vector<std::vector<double>> d{{0, 0, 0}};
  EXPECT_EQ(evaluate_cost(s, u, d, c, VehicleState{}), 0.0);
}

TEST(EvaluateCost, IsolatedTerminalTerm) {
  std::vector<VehicleState> s(4);
  s[3] = {1.0, -2.0, 0.5, 3.0};
  std::vector<ControlInput> u(3);
  MpcConfig c;
  c.alpha_x = c.alpha_xp = c.alpha_u = c.alpha_utilde = c.beta = 0.0;
  c.alpha_e = 1.0;
  c.mode = MpcMode::kTDR;
  const VehicleState xf{0.25, 0.0, 0.0, 1.0};
  const double expect = 0.75 * 0.75 + 4.0 + 0.25 + 4.0;
  EXPECT_EQ(evaluate_cost(s, u, {}, c, xf), expect);
}

TEST(EvaluateCost, MatchesIndependentSummation) {
  std::mt19937 rng(7);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t K = 2 + trial % 4;
    std::vector<VehicleState> s(K + 1);
    std::vector<ControlInput> u(K), prev(K);
    for (auto& x : s) x = {N(rng), N(rng), N(rng), N(rng)};
    for (auto& c : u) c = {N(rng), N(rng)};
    for (auto& c : prev) c = {N(rng), N(rng)};
    std::vector<std::vector<double>> d(2, std::vector<double>(K));
    for (auto& row : d) for (auto& v : row) v = -std::abs(N(rng));
    MpcConfig cfg;
    cfg.alpha_x = std::abs(N(rng));
    cfg.alpha_xp = std::abs(N(rng));
    cfg.alpha_u = std::abs(N(rng));
    cfg.alpha_utilde = std::abs(N(rng));
    cfg.alpha_e = std::abs(N(rng)) + 0.1;
    cfg.beta = std::abs(N(rng)) + 0.1;
    const VehicleState xf{N(rng), N(rng), N(rng), N(rng)};
    const ControlInput u0{N(rng), N(rng)};
    const bool use_prev = trial % 2 == 0;

    // Vector form: stack everything and use Eigen norms.
    double ref = 0.0;
    auto vec = [](const VehicleState& a) { return Eigen::Vector4d(a.x, a.y, a.v, a.phi); };
    auto cvec = [](const ControlInput& a) { return Eigen::Vector2d(a.steering, a.accel); };
    for (std::size_t k = 1; k <= K; ++k) {
      const Eigen::Vector2d ut = use_prev ? cvec(prev[k - 1]) : (k == 1 ? cvec(u0) : cvec(u[k - 2]));
      ref += cfg.alpha_x * vec(s[k]).squaredNorm() +
             cfg.alpha_xp * (vec(s[k]) - vec(s[k - 1])).squaredNorm() +
             cfg.alpha_u * cvec(u[k - 1]).squaredNorm() +
             cfg.alpha_utilde * (cvec(u[k - 1]) - ut).squaredNorm();
    }
    ref += cfg.alpha_e * (vec(s[K]) - vec(xf)).squaredNorm();
    for (const auto& row : d) for (double v : row) ref += cfg.beta * v;

    std::optional<std::span<const ControlInput>> p;
    if (use_prev) p = std::span<const ControlInput>(prev);
    const double got = evaluate_cost(s, u, d, cfg, xf, p, u0);
    EXPECT_NEAR(got, ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(EvaluateCost, DimensionMismatch) {
  std::vector<VehicleState> s(3);
  std::vector<ControlInput> u(3);
  EXPECT_PLANNER_ERROR(evaluate_cost(s, u, {}, MpcConfig{}, VehicleState{}),
                       ErrorCode::kDimensionMismatch);
}

// ---- build_mpc --------------------------------------------------------------

struct SmallInstance {
  std::vector<ConvexObstacle> obstacles;
  WarmStartTrajectory warm;
  DualWarmStart duals;
  VehicleState x0, xf;
};

SmallInstance small_instance(std::mt19937& rng, std::size_t K, std::size_t M) {
  SmallInstance s;
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (std::size_t m = 0; m < M; ++m) {
    const Point2 c(8.0 * (m + 1) + U(rng), 6.0 + U(rng));
    const auto pts = test::random_convex_polygon(rng, c, 2.0);
    s.obstacles.push_back(polygon_from_vertices(std::span<const Point2>(pts)));
  }
  s.warm.dt = 0.2;
  for (std::size_t k = 0; k <= K; ++k) {
    s.warm.states.push_back({U(rng), U(rng), U(rng), U(rng)});
  }
  for (std::size_t k = 0; k < K; ++k) s.warm.controls.push_back({0.4 * U(rng), U(rng)});
  s.x0 = s.warm.states[0];
  s.xf = {U(rng), U(rng), U(rng), U(rng)};
  s.duals.resize(s.obstacles, K);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      for (Eigen::Index i = 0; i < s.duals.lambda[m][k].size(); ++i) {
        s.duals.lambda[m][k][i] = 0.5 + 0.4 * U(rng);
      }
      for (int j = 0; j < 4; ++j) s.duals.mu[m][k][j] = 0.5 + 0.4 * U(rng);
      s.duals.d[m][k] = -1.0 + 0.5 * U(rng);
    }
  }
  return s;
}

TEST(BuildMpc, DimensionCensus) {
  const std::vector<ConvexObstacle> obs{box(5, 5, 6, 6)};
  const VehicleFootprint fp;
  const VehicleLimits lim;
  std::mt19937 rng(1);
  SmallInstance s = small_instance(rng, 2, 1);
  MpcConfig c;
  c.K = 2;
  DualWarmStart d;
  d.resize(obs, 2);
  for (MpcMode mode : {MpcMode::kTDR, MpcMode::kBase, MpcMode::kTD}) {
    c.mode = mode;
    const MpcProblem p = build_mpc(s.x0, s.xf, s.warm, &d, obs, fp, lim, c);
    const bool tdr = mode == MpcMode::kTDR;
    // states 4(K+1), controls 2K, per (m,k): 4 lambda + 4 mu (+ d)
    EXPECT_EQ(p.num_variables(), 12 + 4 + 2 * (8 + (tdr ? 1 : 0)));
    // x(0) 4, dynamics 4K, steering rate K-1, per (m,k) 4 rows (+ terminal 4)
    EXPECT_EQ(p.num_constraints(), 4 + 8 + 1 + 2 * 4 + (tdr ? 0 : 4));
    EXPECT_EQ(p.has_terminal_equality(), !tdr);
    EXPECT_EQ(p.slack_index(0, 1) >= 0, tdr);
  }
}

TEST(BuildMpc, SlackGradientIsBeta) {
  std::mt19937 rng(2);
  SmallInstance s = small_instance(rng, 3, 2);
  MpcConfig c;
  c.K = 3;
  c.beta = 2.5;
  const MpcProblem p =
      build_mpc(s.x0, s.xf, s.warm, &s.duals, s.obstacles, VehicleFootprint{}, VehicleLimits{}, c);
  VectorXd g;
  p.gradient(p.initial_point(), g);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 1; k <= 3; ++k) EXPECT_EQ(g[p.slack_index(m, k)], 2.5);
  }
}

TEST(BuildMpc, ModeMismatchWithoutDuals) {
  std::mt19937 rng(3);
  SmallInstance s = small_instance(rng, 3, 1);
  MpcConfig c;
  c.K = 3;
  for (MpcMode mode : {MpcMode::kTD, MpcMode::kTDR}) {
    c.mode = mode;
    EXPECT_PLANNER_ERROR(build_mpc(s.x0, s.xf, s.warm, nullptr, s.obstacles, VehicleFootprint{},
                                   VehicleLimits{}, c),
                         ErrorCode::kModeMismatch);
  }
  c.mode = MpcMode::kBase;
  EXPECT_NO_THROW(build_mpc(s.x0, s.xf, s.warm, nullptr, s.obstacles, VehicleFootprint{},
                            VehicleLimits{}, c));
  c.K = 4;
  EXPECT_PLANNER_ERROR(build_mpc(s.x0, s.xf, s.warm, &s.duals, s.obstacles, VehicleFootprint{},
                                 VehicleLimits{}, c),
                       ErrorCode::kDimensionMismatch);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Central differences on the cost, every constraint and the Lagrangian
// Hessian at random points.
TEST(BuildMpc, DerivativesMatchFiniteDifferences) {
  std::mt19937 rng(11);
  std::normal_distribution<double> N(0.0, 1.0);
  double worst_g = 0, worst_j = 0, worst_h = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t K = 2 + trial % 4;
    const std::size_t M = 1 + trial % 2;
    SmallInstance s = small_instance(rng, K, M);
    MpcConfig c;
    c.K = K;
    c.mode = static_cast<MpcMode>(trial % 3);
    c.alpha_x = 0.3;
    std::optional<std::vector<ControlInput>> prev;
    if (trial % 5 == 0) prev = std::vector<ControlInput>(K, ControlInput{0.1, -0.2});
    const MpcProblem p = build_mpc(s.x0, s.xf, s.warm, &s.duals, s.obstacles, VehicleFootprint{},
                                   VehicleLimits{}, c, prev);
    const Eigen::Index n = p.num_variables(), m = p.num_constraints();
    VectorXd z = p.initial_point();
    for (Eigen::Index i = 0; i < n; ++i) z[i] += 0.1 * N(rng);
    VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) y[i] = N(rng);
    const double sigma = 0.7;

    VectorXd g;
    p.gradient(z, g);
    std::vector<int> jr, jc, hr, hc;
    std::vector<double> jv, hv;
    p.jacobian_structure(jr, jc);
    p.jacobian_values(z, jv);
    ASSERT_EQ(jr.size(), jv.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, n);
    for (std::size_t i = 0; i < jr.size(); ++i) J(jr[i], jc[i]) += jv[i];
    p.hessian_structure(hr, hc);
    p.hessian_values(z, sigma, y, hv);
    ASSERT_EQ(hr.size(), hv.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < hr.size(); ++i) {
      ASSERT_GE(hr[i], hc[i]);
      H(hr[i], hc[i]) += hv[i];
      if (hr[i] != hc[i]) H(hc[i], hr[i]) += hv[i];
    }
    auto lag_grad = [&](const VectorXd& zz) {
      VectorXd gg;
      p.gradient(zz, gg);
      std::vector<double> vv;
      p.jacobian_values(zz, vv);
      VectorXd out = sigma * gg;
      for (std::size_t i = 0; i < jr.size(); ++i) out[jc[i]] += vv[i] * y[jr[i]];
      return out;
    };

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < n; ++i) {
      VectorXd zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (p.objective(zp) - p.objective(zm)) / (2 * h);
      worst_g = std::max(worst_g, rel_err(g[i], fd));
      VectorXd cp, cm;
      p.constraints(zp, cp);
      p.constraints(zm, cm);
      const VectorXd col = (cp - cm) / (2 * h);
      for (Eigen::Index r = 0; r < m; ++r) worst_j = std::max(worst_j, rel_err(J(r, i), col[r]));
      const VectorXd hcol = (lag_grad(zp) - lag_grad(zm)) / (2 * h);
      for (Eigen::Index r = 0; r < n; ++r) worst_h = std::max(worst_h, rel_err(H(r, i), hcol[r]));
    }
  }
  EXPECT_LE(worst_g, 1e-5);
  EXPECT_LE(worst_j, 1e-5);
  EXPECT_LE(worst_h, 1e-5);
}

TEST(BuildMpc, WarmDualsSatisfyDualRowsAtStart) {
  const VehicleLimits lim;
  const VehicleFootprint fp;
  const std::vector<ConvexObstacle> obs{box(3, 3, 5, 4), box(-2, -5, 9, -3.5)};
  const int K = 30;
  const WarmStartTrajectory warm = straight_warm(6.0, K, lim);
  const DualWarmStart duals = warm_duals(warm, obs, fp);
  MpcConfig c;
  c.K = K;
  const MpcProblem p = build_mpc(warm.states[0], warm.states.back(), warm, &duals, obs, fp, lim, c);
  VectorXd cv, cl, cu, xl, xu;
  p.constraints(p.initial_point(), cv);
  p.bounds(xl, xu, cl, cu);
  double worst = 0.0;
  for (std::size_t m = 0; m < obs.size(); ++m) {
    for (std::size_t k = 1; k <= static_cast<std::size_t>(K); ++k) {
      const Eigen::Index r = p.collision_row(m, k);
      for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(cv[r + i]));
      worst = std::max(worst, cv[r + 3] - 1.0);
    }
  }
  EXPECT_LE(worst, 1e-6);
  const VectorXd z = p.initial_point();
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    EXPECT_GE(z[i], xl[i] - 1e-12);
    EXPECT_LE(z[i], xu[i] + 1e-12);
  }
}

// ---- solve_mpc / verify_solution -----------------------------------------

struct StraightRun {
  std::vector<ConvexObstacle> obs{box(3, 3.5, 5, 5)};
  VehicleLimits lim;
  VehicleFootprint fp;
  MpcConfig cfg;
  WarmStartTrajectory warm;
  MpcSolution sol;

  explicit StraightRun(MpcMode mode = MpcMode::kTDR) {
    cfg.K = 40;
    cfg.mode = mode;
    warm = straight_warm(8.0, static_cast<int>(cfg.K), lim);
    const DualWarmStart duals = warm_duals(warm, obs, fp);
    const MpcProblem p = build_mpc(warm.states[0], VehicleState{8.0, 0.0, 0.0, 0.0}, warm, &duals,
                                   obs, fp, lim, cfg);
    sol = solve_mpc(p, cfg);
  }
};

TEST(SolveMpc, StraightLineConvergesAndPassesAudit) {
  for (MpcMode mode : {MpcMode::kTDR, MpcMode::kTD, MpcMode::kBase}) {
    StraightRun run(mode);
    const MpcSolution& sol = run.sol;
    ASSERT_EQ(sol.report.status, NlpStatus::kOptimal) << to_string(mode);
    EXPECT_LE(sol.report.stationarity, 1e-4);
    EXPECT_LE(sol.report.primal_infeasibility, run.cfg.kkt_tol);
    EXPECT_LE(sol.report.complementarity, run.cfg.kkt_tol);
    const double err = std::hypot(sol.states.back().x - 8.0, sol.states.back().y);
    EXPECT_LE(err, 0.1);
    const AuditReport a = verify_solution(sol, run.obs, run.fp, run.lim, sol.dt);
    EXPECT_TRUE(a.passed()) << to_string(mode);
    EXPECT_LE(a.max_dynamics_residual, 1e-6);
    EXPECT_NEAR(a.cost, sol.report.objective, 1e-9 * std::max(1.0, std::abs(a.cost)));
    // Open-loop rollout of the controls reproduces the states.
    const auto roll = rollout(sol.states[0], sol.controls, sol.dt, run.lim.wheelbase);
    double drift = 0.0;
    for (std::size_t k = 0; k < roll.size(); ++k) {
      drift = std::max({drift, std::abs(roll[k].x - sol.states[k].x),
                        std::abs(roll[k].y - sol.states[k].y),
                        std::abs(roll[k].phi - sol.states[k].phi)});
    }
    EXPECT_LE(drift, 1e-6);
  }
}

TEST(SolveMpc, Deterministic) {
  StraightRun a, b;
  ASSERT_EQ(a.sol.report.iterations, b.sol.report.iterations);
  for (std::size_t k = 0; k < a.sol.states.size(); ++k) {
    EXPECT_EQ(a.sol.states[k], b.sol.states[k]);
  }
}

TEST(SolveMpc, StartInsideObstacleFails) {
  const VehicleLimits lim;
  const VehicleFootprint fp;
  const std::vector<ConvexObstacle> obs{box(-3, -3, 6, 3)};
  MpcConfig cfg;
  cfg.K = 20;
  cfg.max_iter = 150;
  const WarmStartTrajectory warm = straight_warm(4.0, 20, lim);
  const DualWarmStart duals = warm_duals(warm, obs, fp);
  const MpcProblem p =
      build_mpc(warm.states[0], warm.states.back(), warm, &duals, obs, fp, lim, cfg);
  const MpcSolution sol = solve_mpc(p, cfg);
  EXPECT_NE(sol.report.status, NlpStatus::kOptimal) << sol.report.iterations;
}

TEST(VerifySolution, CorruptedControlIsLocalized) {
  StraightRun run;
  ASSERT_EQ(run.sol.report.status, NlpStatus::kOptimal);
  MpcSolution bad = run.sol;
  bad.controls[3].accel += 0.5;
  const AuditReport a = verify_solution(bad, run.obs, run.fp, run.lim, bad.dt);
  EXPECT_EQ(a.dynamics_flagged, (std::vector<std::size_t>{3, 4}));
  EXPECT_FALSE(a.passed());
}

TEST(VerifySolution, OverclaimedCertificateIsFlagged) {
  // Body spans x in [-1.043, 3.89]; obstacle 2 m beyond the front.
  const std::vector<ConvexObstacle> obs{box(5.89, -1, 7, 1)};
  MpcSolution sol;
  sol.dt = 0.1;
  sol.states.assign(3, VehicleState{});
  sol.controls.assign(2, ControlInput{});
  sol.duals.resize(obs, 2);
  sol.duals.d = {{-10.0, -1.0}};
  const AuditReport a = verify_solution(sol, obs, VehicleFootprint{}, VehicleLimits{}, 0.1);
  EXPECT_NEAR(a.min_distance, 2.0, 1e-12);
  ASSERT_EQ(a.certificate_violations.size(), 1u);
  EXPECT_EQ(a.certificate_violations[0].k, 1u);
  EXPECT_TRUE(a.dynamics_flagged.empty());
}

}  // namespace
}  // namespace tdr_obca
